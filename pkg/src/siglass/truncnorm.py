"""Tail-safe probability computations for a centered normal on interval unions.

All mass arithmetic stays in the log domain.  For same-sign intervals the
mass is a difference of survival functions evaluated on the far side, never
a direct CDF subtraction, so segments at 40 standard deviations and beyond
keep full relative accuracy instead of flushing to 0/0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, log_ndtr

from .errors import (
    InternalInconsistency,
    ObservationOutsideRegion,
    ZeroDenominator,
)

_SQRT2 = math.sqrt(2.0)
_MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class IntervalUnion:
    """Disjoint, sorted union of closed z-axis segments."""

    segments: tuple

    @classmethod
    def from_pairs(cls, pairs, merge_gap=0.0):
        """Normalize arbitrary [lo, hi] pairs: sort, validate, merge segments
        that overlap or whose gap is at most merge_gap."""
        cleaned = []
        for lo, hi in pairs:
            lo, hi = float(lo), float(hi)
            if math.isnan(lo) or math.isnan(hi) or lo > hi:
                raise InternalInconsistency(f"bad segment [{lo}, {hi}]")
            cleaned.append((lo, hi))
        cleaned.sort(key=lambda s: s[0])
        merged = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1] + merge_gap:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        return cls(tuple(merged))

    def __len__(self):
        return len(self.segments)

    def contains(self, z, tol=0.0):
        return any(lo - tol <= z <= hi + tol for lo, hi in self.segments)

    def intersect_halfline(self, bound, side):
        """Intersection with (-inf, -bound) for side<0 or (bound, inf) for side>0."""
        out = []
        for lo, hi in self.segments:
            if side < 0:
                s, e = lo, min(hi, -bound)
            else:
                s, e = max(lo, bound), hi
            if s < e:
                out.append((s, e))
        return out

    def total_width(self):
        return sum(hi - lo for lo, hi in self.segments)

    def as_lists(self):
        return [[lo, hi] for lo, hi in self.segments]


def _log_sub_exp(x, y):
    """log(exp(x) - exp(y)) for x >= y, stable for close arguments."""
    if y == -math.inf:
        return x
    if x == y:
        return -math.inf
    if x < y:
        raise InternalInconsistency("negative mass in log-space subtraction")
    return x + math.log1p(-math.exp(y - x))


def log_gauss_mass(lo, hi, sigma):
    """log P(lo <= N(0, sigma^2) <= hi).

    Empty or point segments return -inf.  Same-sign segments use the
    survival side; straddling segments use an error-function sum, which has
    no cancellation because erf is odd.
    """
    if sigma <= 0.0 or math.isnan(sigma):
        raise InternalInconsistency(f"sigma must be positive, got {sigma}")
    if lo > hi:
        raise InternalInconsistency(f"bad segment [{lo}, {hi}]")
    a = lo / sigma
    b = hi / sigma
    if a == b:
        return -math.inf
    if b <= 0.0:
        return _log_sub_exp(float(log_ndtr(b)), float(log_ndtr(a)))
    if a >= 0.0:
        return _log_sub_exp(float(log_ndtr(-a)), float(log_ndtr(-b)))
    mass = 0.5 * (float(erf(b / _SQRT2)) + float(erf(-a / _SQRT2)))
    return math.log(mass)


def _log_sum_exp(values):
    m = max(values, default=-math.inf)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in values))


def two_sided_p(region, z_obs, sigma):
    """P(|Z| > |z_obs| | Z in region) for Z ~ N(0, sigma^2).

    Both numerator and denominator are accumulated in the log domain; the
    ratio is exponentiated at the end.  Raises ObservationOutsideRegion when
    z_obs is not within 1e-9 of any segment and ZeroDenominator when the
    region carries no mass at all.
    """
    if isinstance(region, (list, tuple)):
        region = IntervalUnion.from_pairs(region)
    if not region.segments:
        raise ZeroDenominator("empty truncation region")
    if not region.contains(z_obs, tol=_MEMBERSHIP_TOL):
        raise ObservationOutsideRegion(
            f"z_obs={z_obs} not inside {region.as_lists()}"
        )
    denom = _log_sum_exp([log_gauss_mass(lo, hi, sigma) for lo, hi in region.segments])
    if denom == -math.inf:
        raise ZeroDenominator("truncation region has zero probability mass")
    t = abs(z_obs)
    tail_segments = region.intersect_halfline(t, -1) + region.intersect_halfline(t, +1)
    if not tail_segments:
        return 0.0
    numer = _log_sum_exp([log_gauss_mass(lo, hi, sigma) for lo, hi in tail_segments])
    if numer == -math.inf:
        return 0.0
    return float(min(1.0, math.exp(numer - denom)))


def log_naive_two_sided(z_obs, sigma):
    """log of the unconditional two-sided p-value 2 P(Z > |z_obs|)."""
    if abs(z_obs) == 0.0:
        return 0.0
    return math.log(2.0) + float(log_ndtr(-abs(z_obs) / sigma))


def naive_two_sided(z_obs, sigma):
    return float(min(1.0, math.exp(log_naive_two_sided(z_obs, sigma))))
