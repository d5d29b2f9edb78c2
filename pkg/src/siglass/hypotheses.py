"""Score maps, ROI extraction, test directions and selection constraints.

Three preset test directions are supported:

* BackMeanDiff: mean difference between the ROI and its unmasked complement;
* NeighborMeanDiff: mean difference between the ROI and the pixels within
  Chebyshev distance r of it;
* ReferenceMeanDiff: mean difference over the ROI between the test image and
  an independent reference image (stacked length-2n direction).

The score map is the selected model output passed through an ordered chain
of linear or two-piece post-processing operators, so the ROI selection event
stays a conjunction of affine half-line constraints in z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, ops
from .affine import Interval, ParamTensor, two_piece_apply
from .errors import (
    DegenerateNormalization,
    EmptyNeighborhood,
    EmptyRoi,
    FullRoi,
    InternalInconsistency,
    MalformedDocument,
    ShapeMismatch,
)

PRESETS = ("BackMeanDiff", "NeighborMeanDiff", "ReferenceMeanDiff")
POST_KINDS = ("InputDiff", "Abs", "Neg", "AverageFilter", "GaussianFilter")


@dataclass(frozen=True)
class PostProcessSpec:
    kind: str
    kernel_size: int = 3
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in POST_KINDS:
            raise MalformedDocument(f"unknown post-process '{self.kind}'")
        if self.kind in ("AverageFilter", "GaussianFilter"):
            if self.kernel_size < 1 or self.kernel_size % 2 == 0:
                raise MalformedDocument("filter kernel_size must be odd and positive")
        if self.kind == "GaussianFilter" and not self.sigma > 0:
            raise MalformedDocument("GaussianFilter sigma must be positive")


@dataclass
class HypothesisConfig:
    preset: str
    threshold: float
    i_idx: int = 0
    o_idx: int = 0
    post_process: tuple = ()
    use_norm: bool = False
    neighborhood_range: int = 1
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise MalformedDocument(f"unknown preset '{self.preset}'")
        if not math.isfinite(self.threshold):
            raise MalformedDocument("threshold must be finite")
        if self.use_norm and not 0.0 < self.threshold < 1.0:
            raise MalformedDocument("use_norm requires threshold in (0, 1)")
        if self.neighborhood_range < 1:
            raise MalformedDocument("neighborhood_range must be >= 1")
        self.post_process = tuple(self.post_process)
        if self.mask is not None:
            self.mask = np.asarray(self.mask)


@dataclass(frozen=True)
class Roi:
    """Sorted set of flat pixel indices into an n-pixel score map."""

    pixels: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "pixels", np.unique(np.asarray(self.pixels, dtype=np.int64)))
        if self.pixels.size and (self.pixels[0] < 0 or self.pixels[-1] >= self.n):
            raise InternalInconsistency("ROI index out of range")

    def flags(self):
        out = np.zeros(self.n, dtype=np.uint8)
        out[self.pixels] = 1
        return out

    def __len__(self):
        return int(self.pixels.size)

    def same_as(self, flags):
        return np.array_equal(self.flags(), flags)


def gaussian_kernel(size, sigma):
    """Discretized 2-D Gaussian, normalized to sum 1."""
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    dx, dy = np.meshgrid(ax, ax, indexing="ij")
    w = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    return w / w.sum()


def average_kernel(size):
    return np.full((size, size), 1.0 / (size * size), dtype=np.float64)


def _filter_kernel(spec):
    if spec.kind == "AverageFilter":
        return average_kernel(spec.kernel_size)
    return gaussian_kernel(spec.kernel_size, spec.sigma)


def filter_conv(x, kernel2d):
    """Depthwise 'same' 2-D convolution with zero padding."""
    arr = np.asarray(x, dtype=np.float64)
    shape = arr.shape
    if arr.ndim == 2:
        arr = arr.reshape(1, 1, *arr.shape)
    elif arr.ndim == 3:
        arr = arr.reshape(1, *arr.shape)
    elif arr.ndim != 4:
        raise ShapeMismatch("score", f"filters need a 2-D layout, got shape {list(shape)}")
    k = kernel2d.shape[0]
    pad = (k - 1) // 2
    win = ops.sliding_windows(arr, (k, k), (1, 1), (pad, pad, pad, pad))
    out = np.tensordot(win, kernel2d, axes=([4, 5], [0, 1]))
    return np.ascontiguousarray(out.reshape(shape))


def mask_flags(mask, n, context="mask"):
    if mask is None:
        return None
    flat = np.asarray(mask).reshape(-1)
    if flat.size != n:
        raise ShapeMismatch(context, f"mask has {flat.size} pixels, score has {n}")
    return np.ascontiguousarray((flat != 0).astype(np.uint8))


def score_map(config, inputs, outputs, apply_norm=True):
    """Apply the post-processing chain to the selected output.

    `outputs` must already be the thresholding source (pre-activation values
    when the model ends in a Sigmoid).  With apply_norm=False the min-max
    normalization step is skipped; ROI extraction uses the raw map with a
    linearized threshold so selection events stay affine.
    """
    score = np.asarray(outputs[config.o_idx], dtype=np.float64)
    for spec in config.post_process:
        if spec.kind == "InputDiff":
            score = score - np.asarray(inputs[config.i_idx], dtype=np.float64).reshape(
                score.shape
            )
        elif spec.kind == "Abs":
            score = np.where(score > 0.0, score, -score)
        elif spec.kind == "Neg":
            score = -score
        else:
            score = filter_conv(score, _filter_kernel(spec))
    if config.use_norm and apply_norm:
        flat = score.reshape(-1)
        excl = mask_flags(config.mask, flat.size)
        vals = flat if excl is None else flat[excl == 0]
        mn, mx = float(vals.min()), float(vals.max())
        if mx == mn:
            raise DegenerateNormalization("score map is constant under use_norm")
        score = (score - mn) / (mx - mn)
    return score


def logit(tau):
    if not 0.0 < tau < 1.0:
        raise MalformedDocument("sigmoid-terminal thresholds must lie in (0, 1)")
    return math.log(tau / (1.0 - tau))


def threshold_flags(config, score, logit_threshold=False):
    """ROI membership flags (uint8, masked pixels 0) for a concrete score map."""
    flat = np.asarray(score, dtype=np.float64).reshape(-1)
    n = flat.size
    excl = mask_flags(config.mask, n)
    if config.use_norm:
        vals = flat if excl is None else flat[excl == 0]
        mn, mx = float(vals.min()), float(vals.max())
        if mx == mn:
            raise DegenerateNormalization("score map is constant under use_norm")
        tau_eff = (1.0 - config.threshold) * mn + config.threshold * mx
    else:
        tau_eff = logit(config.threshold) if logit_threshold else config.threshold
    flags = (flat >= tau_eff).astype(np.uint8)
    if excl is not None:
        flags[excl == 1] = 0
    return flags


def extract_roi(config, score, logit_threshold=False):
    """Threshold the (raw, un-normalized) score map into an ROI.

    Raises EmptyRoi / FullRoi when the selection degenerates; both leave no
    valid test direction.
    """
    flags = threshold_flags(config, score, logit_threshold)
    excl = mask_flags(config.mask, flags.size)
    n_active = flags.size if excl is None else int((excl == 0).sum())
    picked = int(flags.sum())
    if picked == 0:
        raise EmptyRoi("no pixel reached the threshold")
    if picked == n_active:
        raise FullRoi("every unmasked pixel reached the threshold")
    return Roi(np.flatnonzero(flags), flags.size)


def _spatial_dims(shape):
    if len(shape) < 2:
        raise ShapeMismatch("score", f"neighborhood needs a 2-D layout, got {list(shape)}")
    return shape[-2], shape[-1]


def neighborhood(roi, r, shape, mask=None):
    """Pixels within Chebyshev distance r of the ROI, excluding the ROI and
    masked pixels.  `shape` is the score-map shape; the spatial layout is its
    last two dims and any leading channels share the geometry plane-wise."""
    if r < 1:
        raise MalformedDocument("neighborhood_range must be >= 1")
    h, w = _spatial_dims(shape)
    planes = roi.n // (h * w)
    if planes * h * w != roi.n:
        raise ShapeMismatch("score", f"{roi.n} pixels do not tile {list(shape)}")
    in_roi = roi.flags().reshape(planes, h, w).astype(bool)
    dilated = np.zeros_like(in_roi)
    for dy in range(-r, r + 1):
        ys = slice(max(dy, 0), h + min(dy, 0))
        yd = slice(max(-dy, 0), h + min(-dy, 0))
        for dx in range(-r, r + 1):
            xs = slice(max(dx, 0), w + min(dx, 0))
            xd = slice(max(-dx, 0), w + min(-dx, 0))
            dilated[:, yd, xd] |= in_roi[:, ys, xs]
    out = dilated.reshape(-1)
    out &= ~in_roi.reshape(-1)
    excl = mask_flags(mask, roi.n)
    if excl is not None:
        out &= excl == 0
    pixels = np.flatnonzero(out)
    if pixels.size == 0:
        raise EmptyNeighborhood("no unmasked pixel borders the ROI")
    return pixels


def build_eta(config, roi, n, shape=None):
    """Build the test direction for the configured preset.

    Returns (eta, contrast_pixels): eta has length n for BackMeanDiff /
    NeighborMeanDiff and 2n for ReferenceMeanDiff; contrast_pixels is the
    pixel set carrying the negative mass (complement, neighborhood, or the
    ROI again in the reference block).  Entries of eta always sum to zero.
    """
    if len(roi) == 0:
        raise EmptyRoi("cannot build a test direction for an empty ROI")
    excl = mask_flags(config.mask, n)
    roi_flags = roi.flags()
    if config.preset == "BackMeanDiff":
        comp = (roi_flags == 0) if excl is None else (roi_flags == 0) & (excl == 0)
        contrast = np.flatnonzero(comp)
        if contrast.size == 0:
            raise FullRoi("ROI complement is empty")
        eta = np.zeros(n)
        eta[roi.pixels] = 1.0 / len(roi)
        eta[contrast] = -1.0 / contrast.size
        return eta, contrast
    if config.preset == "NeighborMeanDiff":
        contrast = neighborhood(roi, config.neighborhood_range, shape, config.mask)
        eta = np.zeros(n)
        eta[roi.pixels] = 1.0 / len(roi)
        eta[contrast] = -1.0 / contrast.size
        return eta, contrast
    eta = np.zeros(2 * n)
    eta[roi.pixels] = 1.0 / len(roi)
    eta[n + roi.pixels] = -1.0 / len(roi)
    return eta, roi.pixels.copy()


def status_and_constraints(config, score_pt, z, interval, logit_threshold=False):
    """ROI membership at z plus the maximal sub-interval preserving it.

    Under use_norm the identities of the score's argmin and argmax at z are
    additionally conditioned on, which linearizes the normalized threshold
    comparison.  Returns (flags, Interval).
    """
    bias = np.ascontiguousarray(score_pt.bias.reshape(-1))
    coeff = np.ascontiguousarray(score_pt.coeff.reshape(-1))
    n = bias.size
    excl = mask_flags(config.mask, n)
    lo, hi = interval.lo, interval.hi
    flags = np.empty(n, dtype=np.uint8)
    if config.use_norm:
        vals = bias + coeff * z
        if excl is not None:
            masked_vals = np.where(excl == 1, np.inf, vals)
            p = int(masked_vals.argmin())
            masked_vals = np.where(excl == 1, -np.inf, vals)
            q = int(masked_vals.argmax())
        else:
            p = int(vals.argmin())
            q = int(vals.argmax())
        lo, hi = kernels.dominance_update(bias, coeff, excl, p, -1.0, z, lo, hi)
        lo, hi = kernels.dominance_update(bias, coeff, excl, q, +1.0, z, lo, hi)
        tau = config.threshold
        t_bias = bias - ((1.0 - tau) * bias[p] + tau * bias[q])
        t_coeff = coeff - ((1.0 - tau) * coeff[p] + tau * coeff[q])
        lo, hi = kernels.threshold_update(
            np.ascontiguousarray(t_bias), np.ascontiguousarray(t_coeff),
            excl, z, 0.0, lo, hi, flags,
        )
    else:
        tau_eff = logit(config.threshold) if logit_threshold else config.threshold
        lo, hi = kernels.threshold_update(bias, coeff, excl, z, tau_eff, lo, hi, flags)
    if lo > hi or not lo <= z <= hi:
        raise InternalInconsistency(
            f"selection constraints [{lo}, {hi}] exclude z={z}"
        )
    return flags, Interval(lo, hi)


def selection_constraints(config, score_pt, z, roi, interval=None, logit_threshold=False):
    """Maximal interval around z on which every pixel keeps the in/out status
    it has in `roi`."""
    interval = interval if interval is not None else Interval(-math.inf, math.inf)
    flags, out = status_and_constraints(config, score_pt, z, interval, logit_threshold)
    if not roi.same_as(flags):
        raise InternalInconsistency("score statuses at z do not reproduce the given ROI")
    return out


def apply_post_affine(config, out_pt, input_pt, z, interval):
    """Affine image of the post-processing chain plus its piece constraints."""
    pt = out_pt
    lo, hi = interval.lo, interval.hi
    for spec in config.post_process:
        if spec.kind == "InputDiff":
            pt = ParamTensor(
                pt.bias - input_pt.bias.reshape(pt.shape),
                pt.coeff - input_pt.coeff.reshape(pt.shape),
            )
        elif spec.kind == "Abs":
            pt, lo, hi = two_piece_apply(pt, z, lo, hi, -1.0)
        elif spec.kind == "Neg":
            pt = ParamTensor(-pt.bias, -pt.coeff)
        else:
            kern = _filter_kernel(spec)
            pt = ParamTensor(filter_conv(pt.bias, kern), filter_conv(pt.coeff, kern))
    if lo > hi or not lo <= z <= hi:
        raise InternalInconsistency(f"post-process constraints [{lo}, {hi}] exclude z={z}")
    return pt, Interval(lo, hi)
