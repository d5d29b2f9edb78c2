"""Numpy implementations of the hot line-sweep kernels.

Semantics contract shared with the compiled backend (results must be
bit-identical):

* the positive branch of a two-piece op is active iff a + b*z > 0 strictly;
  at an exact zero the negative branch is taken;
* elements with b == 0 never contribute interval constraints;
* threshold membership is inclusive (a + b*z >= tau);
* argmax ties resolve to the lowest index;
* every root is computed as the same IEEE expression (-a/b resp. (tau-a)/b)
  so both backends tighten intervals to identical floats.
"""

from __future__ import annotations

import numpy as np


def _bound_down(values):
    return -np.inf if values.size == 0 else float(values.max())


def _bound_up(values):
    return np.inf if values.size == 0 else float(values.min())


def two_piece_update(bias, coeff, z, neg_slope, lo, hi, out_bias, out_coeff):
    """Select the active piece of x -> max(x, neg_slope*x)-style two-piece ops.

    neg_slope 0 gives ReLU, alpha gives LeakyReLU, -1 gives Abs.  Writes the
    active affine piece into out_bias/out_coeff and returns the tightened
    (lo, hi) on which the branch pattern at z stays fixed.
    """
    phi = bias + coeff * z
    pos = phi > 0.0
    moving = coeff != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = -bias / coeff
    up = moving & (pos ^ (coeff > 0.0))
    down = moving & ~(pos ^ (coeff > 0.0))
    lo = max(lo, _bound_down(roots[down]))
    hi = min(hi, _bound_up(roots[up]))
    # out arrays may alias the inputs; all reads happen above
    neg = ~pos
    np.copyto(out_bias, bias)
    np.copyto(out_coeff, coeff)
    if neg_slope == 0.0:
        out_bias[neg] = 0.0
        out_coeff[neg] = 0.0
    else:
        out_bias[neg] *= neg_slope
        out_coeff[neg] *= neg_slope
    return lo, hi


def threshold_update(bias, coeff, excluded, z, tau, lo, hi, flags_out):
    """Per-element threshold membership at z plus status-preserving bounds.

    flags_out[i] is set to 1 where a + b*z >= tau (0 for excluded elements);
    the returned (lo, hi) keeps every non-excluded status fixed.
    """
    val = bias + coeff * z
    inside = val >= tau
    if excluded is not None:
        inside &= ~excluded.astype(bool)
        active = ~excluded.astype(bool)
    else:
        active = np.ones(bias.shape, dtype=bool)
    flags_out[:] = 0
    flags_out[inside] = 1
    moving = active & (coeff != 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = (tau - bias) / coeff
    down = moving & ~(inside ^ (coeff > 0.0))
    up = moving & (inside ^ (coeff > 0.0))
    lo = max(lo, _bound_down(roots[down]))
    hi = min(hi, _bound_up(roots[up]))
    return lo, hi


def dominance_update(bias, coeff, excluded, k, sense, z, lo, hi):
    """Bounds keeping index k the arg-extreme (sense +1 max, -1 min)."""
    da = sense * (bias[k] - bias)
    db = sense * (coeff[k] - coeff)
    active = np.ones(bias.shape, dtype=bool)
    if excluded is not None:
        active = ~excluded.astype(bool)
    active[k] = False
    moving = active & (db != 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = -da / db
    lo = max(lo, _bound_down(roots[moving & (db > 0.0)]))
    hi = min(hi, _bound_up(roots[moving & (db < 0.0)]))
    return lo, hi


def maxpool_update(win_bias, win_coeff, valid, z, lo, hi, out_bias, out_coeff):
    """Per-window argmax piece with pairwise dominance bounds.

    win_bias/win_coeff have shape (L, K); valid is an optional (L, K) uint8
    mask of real (non-padding) candidates.
    """
    vals = win_bias + win_coeff * z
    if valid is not None:
        vflags = valid.astype(bool)
        vals = np.where(vflags, vals, -np.inf)
    else:
        vflags = None
    k_star = vals.argmax(axis=1)
    rows = np.arange(win_bias.shape[0])
    np.copyto(out_bias, win_bias[rows, k_star])
    np.copyto(out_coeff, win_coeff[rows, k_star])
    da = out_bias[:, None] - win_bias
    db = out_coeff[:, None] - win_coeff
    moving = db != 0.0
    if vflags is not None:
        moving &= vflags
    moving[rows, k_star] = False
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = -da / db
    lo = max(lo, _bound_down(roots[moving & (db > 0.0)]))
    hi = min(hi, _bound_up(roots[moving & (db < 0.0)]))
    return lo, hi
