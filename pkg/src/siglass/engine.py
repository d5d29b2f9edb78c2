"""Inference orchestration: line construction, parametric sweep, p-values.

The observed image fixes a test direction eta; conditioning on the nuisance
component orthogonal to eta reduces the data space to the line
x(z) = a + b*z.  The truncation region is the set of z on which the network
selects exactly the observed ROI; it is swept lazily, one piece at a time,
and the selective p-value is the two-sided tail mass of the centered normal
restricted to that region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hypotheses, ops
from .affine import Interval, ParamTensor, PropagationSession, propagate
from .errors import (
    InternalInconsistency,
    MalformedDocument,
    ShapeMismatch,
    SingularCovariance,
    StalledSearch,
)
from .kernels import backend_name
from .model_ir import ModelGraph
from .truncnorm import (
    IntervalUnion,
    log_naive_two_sided,
    naive_two_sided,
    two_sided_p,
)

MODES = ("parametric", "over_conditioning")
DEFAULT_Z_RANGE = 10.0
DEFAULT_STALL_LIMIT = 1000


@dataclass
class Covariance:
    """Noise covariance in scalar, diagonal, full, or two-block form."""

    kind: str
    scalar: float = 0.0
    diag: np.ndarray | None = None
    matrix: np.ndarray | None = None
    blocks: tuple = ()

    @classmethod
    def from_scalar(cls, var):
        var = float(var)
        if not var > 0 or not math.isfinite(var):
            raise SingularCovariance(f"variance must be positive, got {var}")
        return cls("scalar", scalar=var)

    @classmethod
    def from_diagonal(cls, diag):
        diag = np.asarray(diag, dtype=np.float64).reshape(-1)
        if not (np.isfinite(diag).all() and (diag > 0).all()):
            raise SingularCovariance("diagonal entries must be positive and finite")
        return cls("diagonal", diag=diag)

    @classmethod
    def from_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise SingularCovariance("covariance matrix must be square")
        if not np.allclose(matrix, matrix.T, rtol=1e-10, atol=1e-12):
            raise SingularCovariance("covariance matrix must be symmetric")
        try:
            np.linalg.cholesky(matrix)
        except np.linalg.LinAlgError as exc:
            raise SingularCovariance("covariance matrix is not positive definite") from exc
        return cls("full", matrix=matrix)

    @classmethod
    def from_pair(cls, test, ref):
        """Block-diagonal covariance for stacked (test, reference) data."""
        if test.kind == "pair" or ref.kind == "pair":
            raise SingularCovariance("nested covariance pairs are not supported")
        return cls("pair", blocks=(test, ref))

    def dim_check(self, n):
        if self.kind == "diagonal" and self.diag.size != n:
            raise SingularCovariance(f"diagonal has {self.diag.size} entries, expected {n}")
        if self.kind == "full" and self.matrix.shape[0] != n:
            raise SingularCovariance(f"matrix is {self.matrix.shape[0]}x..., expected {n}")
        if self.kind == "pair":
            if n % 2:
                raise SingularCovariance("stacked data must have even length")
            for block in self.blocks:
                block.dim_check(n // 2)

    def apply(self, eta):
        """Sigma @ eta without materializing scalar/diagonal forms."""
        if self.kind == "scalar":
            return self.scalar * eta
        if self.kind == "diagonal":
            return self.diag * eta
        if self.kind == "full":
            return self.matrix @ eta
        half = eta.size // 2
        return np.concatenate(
            [self.blocks[0].apply(eta[:half]), self.blocks[1].apply(eta[half:])]
        )


@dataclass(frozen=True)
class LineParams:
    """Parametrization x(z) = a + b*z with z the test statistic value."""

    a: np.ndarray
    b: np.ndarray
    z_obs: float
    sigma_eta: float


def line_params(x, eta, cov):
    """Decompose x along the test direction under the given covariance.

    b = Sigma eta / (eta' Sigma eta), a = x - b * z_obs, z_obs = eta' x.
    The construction guarantees eta' b = 1 and eta' a = 0 up to rounding.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    eta = np.asarray(eta, dtype=np.float64).reshape(-1)
    if x.size != eta.size:
        raise ShapeMismatch("eta", f"x has {x.size} entries, eta has {eta.size}")
    if not np.any(eta):
        raise InternalInconsistency("eta is identically zero")
    cov.dim_check(eta.size)
    s = cov.apply(eta)
    q = float(eta @ s)
    if not (math.isfinite(q) and q > 0.0):
        raise SingularCovariance(f"eta' Sigma eta = {q} is not positive")
    z_obs = float(eta @ x)
    b = s / q
    a = x - b * z_obs
    return LineParams(a=a, b=b, z_obs=z_obs, sigma_eta=math.sqrt(q))


def _image_halves(line, n_img):
    """The image-line coefficients feeding the network (first block when the
    direction is stacked over test and reference)."""
    if line.a.size == n_img:
        return line.a, line.b
    if line.a.size == 2 * n_img:
        return line.a[:n_img], line.b[:n_img]
    raise ShapeMismatch("line", f"line length {line.a.size} does not fit input size {n_img}")


def _score_param(session, config, line, z, logit_threshold):
    """Affine score map at z plus the network and post-process validity."""
    graph = session.graph
    _, var_shape = graph.inputs[session.var_input]
    n_img = int(np.prod(var_shape))
    a_img, b_img = _image_halves(line, n_img)
    outputs, valid = propagate(session, a_img, b_img, z)
    score_pt = outputs[config.o_idx]
    input_pt = ParamTensor(
        a_img.reshape(var_shape).copy(), b_img.reshape(var_shape).copy()
    )
    score_pt, valid = hypotheses.apply_post_affine(config, score_pt, input_pt, z, valid)
    return score_pt, valid


def oc_region(session, config, line, z):
    """Over-conditioned interval at z and the ROI realized there.

    The interval intersects the network's piece validity with every
    threshold-status constraint; it always contains z.
    """
    flags, iv = _oc_flags(session, config, line, z)
    return iv, hypotheses.Roi(np.flatnonzero(flags), flags.size)


def _oc_flags(session, config, line, z):
    logit_threshold = session.graph.terminal_sigmoid(config.o_idx)
    score_pt, valid = _score_param(session, config, line, z, logit_threshold)
    flags, iv = hypotheses.status_and_constraints(
        config, score_pt, z, valid, logit_threshold
    )
    return flags, iv


def _clip(segment, z_min, z_max):
    lo, hi = max(segment[0], z_min), min(segment[1], z_max)
    return (lo, hi) if lo <= hi else None


def _sweep(session, config, line, z_min, z_max, epsilon, stall_limit):
    """Algorithm: march from z_min, keep over-conditioned pieces whose ROI
    matches the observed one, restart just past each piece's supremum."""
    if not z_min < line.z_obs < z_max:
        raise InternalInconsistency(
            f"z_obs={line.z_obs} outside search window [{z_min}, {z_max}]"
        )
    obs_flags, obs_iv = _oc_flags(session, config, line, line.z_obs)
    accepted = [_clip((obs_iv.lo, obs_iv.hi), z_min, z_max)]
    visited = 1
    matched = 1
    stalled = 0
    z = z_min
    while z < z_max:
        flags, iv = _oc_flags(session, config, line, z)
        visited += 1
        if np.array_equal(flags, obs_flags):
            seg = _clip((iv.lo, iv.hi), z_min, z_max)
            if seg is not None:
                accepted.append(seg)
                matched += 1
        if iv.hi - iv.lo < 10.0 * epsilon:
            stalled += 1
            if stalled > stall_limit:
                raise StalledSearch(
                    f"{stalled} consecutive intervals narrower than {10 * epsilon}"
                )
        else:
            stalled = 0
        z = iv.hi + epsilon
    union = IntervalUnion.from_pairs(accepted, merge_gap=epsilon)
    stats = {
        "intervals_visited": visited,
        "intervals_matched": matched,
        "oc_segment": list(accepted[0]),
    }
    return union, stats


def parametric_search(session, config, line, z_min, z_max, epsilon=None, stall_limit=DEFAULT_STALL_LIMIT):
    """Union of all over-conditioned pieces on [z_min, z_max] that reproduce
    the observed ROI; the piece containing z_obs is always included."""
    if epsilon is None:
        epsilon = 1e-6 * max(1.0, line.sigma_eta)
    union, _ = _sweep(session, config, line, z_min, z_max, epsilon, stall_limit)
    return union


@dataclass
class InferenceResult:
    """Outcome of one selective inference."""

    p_value: float
    naive_p_value: float
    log_naive_p_value: float
    z_obs: float
    sigma_eta: float
    truncation_region: IntervalUnion
    output: list
    score_map: np.ndarray
    roi: hypotheses.Roi
    non_roi: np.ndarray
    mode: str
    diagnostics: dict = field(default_factory=dict)

    def bonferroni_p_value(self, log_num_comparisons):
        """min(1, naive_p * exp(L)) computed in the log domain."""
        if log_num_comparisons < 0:
            raise InternalInconsistency("log_num_comparisons must be non-negative")
        lp = self.log_naive_p_value + log_num_comparisons
        return 1.0 if lp >= 0.0 else math.exp(lp)

    def to_json_dict(self):
        return {
            "p_value": self.p_value,
            "naive_p_value": self.naive_p_value,
            "z_obs": self.z_obs,
            "sigma_eta": self.sigma_eta,
            "truncation_region": self.truncation_region.as_lists(),
            "roi": self.roi.pixels.tolist(),
            "non_roi": self.non_roi.tolist(),
            "mode": self.mode,
            "diagnostics": self.diagnostics,
        }


def _normalize_inputs(graph, x):
    """Reshape user tensors to the declared signatures; returns a list."""
    xs = list(x) if isinstance(x, (list, tuple)) else [x]
    if len(xs) != len(graph.inputs):
        raise ShapeMismatch(
            "inputs", f"model takes {len(graph.inputs)} inputs, got {len(xs)}"
        )
    shaped = []
    for (name, shape), arr in zip(graph.inputs, xs):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise ShapeMismatch(name, f"expected {list(shape)} ({int(np.prod(shape))} values)")
        shaped.append(np.ascontiguousarray(arr.reshape(shape)))
    return shaped


def inference(
    graph: ModelGraph,
    config: hypotheses.HypothesisConfig,
    x,
    cov,
    mode="parametric",
    z_range=DEFAULT_Z_RANGE,
    epsilon=None,
    memoization=True,
    stall_limit=DEFAULT_STALL_LIMIT,
):
    """Test the significance of the ROI the model detects in x.

    Args:
        graph: loaded ModelGraph.
        config: hypothesis preset, threshold, post-processing etc.
        x: input tensor (or list for multi-input graphs); ReferenceMeanDiff
            requires a (x, x_reference) tuple.
        cov: Covariance instance, or a positive scalar variance.
        mode: "parametric" (full truncation region) or "over_conditioning"
            (single piece at z_obs; faster, less powerful).
        z_range: search half-width in sigma_eta units; the window is extended
            to cover z_obs +- sigma_eta when the statistic falls outside.
        epsilon: sweep restart step; default 1e-6 * max(1, sigma_eta).
        memoization: reuse per-node propagation results between sweep steps.

    Returns an InferenceResult.  Raises DegenerateHypothesis subclasses when
    the selection admits no test direction.
    """
    if mode not in MODES:
        raise InternalInconsistency(f"unknown mode '{mode}'")
    if isinstance(cov, (int, float)):
        cov = Covariance.from_scalar(cov)

    x_ref = None
    if config.preset == "ReferenceMeanDiff":
        if not (isinstance(x, tuple) and len(x) == 2):
            raise ShapeMismatch("inputs", "ReferenceMeanDiff requires (x, x_reference)")
        x, x_ref = x
    xs = _normalize_inputs(graph, x)
    x_img = xs[config.i_idx]
    n_img = x_img.size

    env = ops.eval_graph(graph, xs)
    outputs = [env[name] for name in graph.output_names]
    logit_threshold = graph.terminal_sigmoid(config.o_idx)
    score_src = list(outputs)
    if logit_threshold:
        sig_node = graph.producer_of(graph.output_names[config.o_idx])
        score_src[config.o_idx] = env[sig_node.inputs[0]]
        if config.post_process or config.use_norm:
            # Thresholding commutes through the monotone sigmoid only when it
            # acts directly on the activation, so the logit trick excludes
            # further post-processing.
            raise MalformedDocument(
                "post_process and use_norm cannot be combined with a "
                "sigmoid-terminal output"
            )

    score_raw = hypotheses.score_map(config, xs, score_src, apply_norm=False)
    if score_raw.size != n_img:
        raise ShapeMismatch(
            "score", f"score map has {score_raw.size} pixels, input has {n_img}"
        )
    roi = hypotheses.extract_roi(config, score_raw, logit_threshold)
    eta, _ = hypotheses.build_eta(config, roi, n_img, score_raw.shape)

    excl = hypotheses.mask_flags(config.mask, n_img)
    comp = roi.flags() == 0
    if excl is not None:
        comp &= excl == 0
    non_roi = np.flatnonzero(comp)

    if config.preset == "ReferenceMeanDiff":
        ref = np.asarray(x_ref, dtype=np.float64)
        if ref.size != n_img:
            raise ShapeMismatch("reference", f"expected {n_img} values, got {ref.size}")
        x_vec = np.concatenate([x_img.reshape(-1), ref.reshape(-1)])
        if cov.kind != "pair":
            cov = Covariance.from_pair(cov, cov)
    else:
        x_vec = x_img.reshape(-1)

    line = line_params(x_vec, eta, cov)
    sigma = line.sigma_eta
    if epsilon is None:
        epsilon = 1e-6 * max(1.0, sigma)
    z_min = min(-z_range * sigma, line.z_obs - sigma)
    z_max = max(z_range * sigma, line.z_obs + sigma)
    extended = abs(line.z_obs) + sigma > z_range * sigma

    fixed = {
        name: arr
        for (name, _), arr in zip(graph.inputs, xs)
        if name != graph.inputs[config.i_idx][0]
    }
    session = PropagationSession(
        graph, var_input=config.i_idx, fixed_inputs=fixed, memoization=memoization
    )

    obs_flags, obs_iv = _oc_flags(session, config, line, line.z_obs)
    if not roi.same_as(obs_flags):
        raise InternalInconsistency(
            "affine score at z_obs does not reproduce the observed ROI"
        )
    oc_segment = _clip((obs_iv.lo, obs_iv.hi), z_min, z_max)

    if mode == "parametric":
        region, sweep_stats = _sweep(
            session, config, line, z_min, z_max, epsilon, stall_limit
        )
    else:
        region = IntervalUnion.from_pairs([oc_segment])
        sweep_stats = {"intervals_visited": 1, "intervals_matched": 1,
                       "oc_segment": list(oc_segment)}

    p_value = two_sided_p(region, line.z_obs, sigma)
    log_naive = log_naive_two_sided(line.z_obs, sigma)

    score_user = hypotheses.score_map(config, xs, score_src, apply_norm=True)
    diagnostics = {
        "window": [z_min, z_max],
        "window_extended_for_z_obs": bool(extended),
        "epsilon": epsilon,
        "memoization": bool(memoization),
        "kernel_backend": backend_name(),
        "node_evaluations": session.stats["node_evaluations"],
        "cache_hits": session.stats["cache_hits"],
        "propagate_calls": session.stats["propagate_calls"],
        **sweep_stats,
    }
    return InferenceResult(
        p_value=p_value,
        naive_p_value=naive_two_sided(line.z_obs, sigma),
        log_naive_p_value=log_naive,
        z_obs=line.z_obs,
        sigma_eta=sigma,
        truncation_region=region,
        output=outputs,
        score_map=score_user,
        roi=roi,
        non_roi=non_roi,
        mode=mode,
        diagnostics=diagnostics,
    )
