import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siglass.errors import ObservationOutsideRegion, ZeroDenominator
from siglass.truncnorm import (
    IntervalUnion,
    log_gauss_mass,
    naive_two_sided,
    two_sided_p,
)

INF = math.inf


def mp_mass(lo, hi, sigma, dps=60):
    """Adaptive-quadrature oracle at extended precision.

    The peak density on the segment is factored out so the integrand is O(1)
    and tanh-sinh quadrature converges to full relative precision even for
    segments 40 sigma out."""
    with mp.workdps(dps):
        s = mp.mpf(sigma)
        a = mp.mpf("-inf") if lo == -INF else mp.mpf(lo) / s
        b = mp.mpf("inf") if hi == INF else mp.mpf(hi) / s
        t0 = min(max(mp.mpf(0), a), b)  # standardized argmax of the density
        peak = mp.exp(-(t0 * t0) / 2) / mp.sqrt(2 * mp.pi)
        integrand = lambda t: mp.exp(-(t * t - t0 * t0) / 2)
        return peak * mp.quad(integrand, [a, b])


def mp_two_sided(segments, z_obs, sigma, dps=60):
    with mp.workdps(dps):
        t = abs(mp.mpf(z_obs))
        denom = mp.mpf(0)
        numer = mp.mpf(0)
        for lo, hi in segments:
            denom += mp_mass(lo, hi, sigma, dps)
            left = (lo, min(hi, -t))
            right = (max(lo, t), hi)
            if left[0] < left[1]:
                numer += mp_mass(left[0], float(left[1]), sigma, dps)
            if right[0] < right[1]:
                numer += mp_mass(float(right[0]), right[1], sigma, dps)
        return float(numer / denom)


def test_total_mass_is_one():
    assert log_gauss_mass(-INF, INF, 1.0) == 0.0


def test_half_line():
    assert math.isclose(log_gauss_mass(0.0, INF, 1.0), math.log(0.5), rel_tol=1e-15)


def test_far_interval_matches_quadrature():
    got = log_gauss_mass(8.0, 9.0, 1.0)
    want = float(mp.log(mp_mass(8.0, 9.0, 1.0)))
    assert math.isclose(got, want, rel_tol=1e-10)


def test_empty_and_point_masses():
    assert log_gauss_mass(2.0, 2.0, 1.0) == -INF


@pytest.mark.parametrize("lo,hi", [(-40.5, -40.0), (10.0, 12.0), (38.0, 41.0), (-3.0, 0.5)])
def test_extreme_tails_relative_accuracy(lo, hi):
    got = log_gauss_mass(lo, hi, 1.0)
    want = float(mp.log(mp_mass(lo, hi, 1.0, dps=80)))
    assert math.isclose(got, want, rel_tol=1e-12)


def test_deep_tail_stays_finite():
    # Mass around 1e-(10^5); a CDF difference would flush to 0/0.
    val = log_gauss_mass(700.0, 701.0, 1.0)
    assert math.isfinite(val) and val < -1e5


def test_two_sided_full_line_at_zero():
    assert two_sided_p([(-INF, INF)], 0.0, 1.0) == 1.0


def test_two_sided_matches_normal_quantile():
    p = two_sided_p([(-INF, INF)], 1.959964, 1.0)
    assert math.isclose(p, 0.05, abs_tol=1e-6)


def test_two_sided_truncated_closed_form():
    # [-2, 2], z=1: 2(Phi(2)-Phi(1)) / (2 Phi(2) - 1), via the erf oracle
    phi = lambda t: 0.5 * (1 + math.erf(t / math.sqrt(2)))
    want = 2 * (phi(2) - phi(1)) / (2 * phi(2) - 1)
    got = two_sided_p([(-2.0, 2.0)], 1.0, 1.0)
    assert math.isclose(got, want, rel_tol=1e-12)
    assert math.isclose(got, mp_two_sided([(-2.0, 2.0)], 1.0, 1.0), rel_tol=1e-10)


def test_observation_outside_region_raises():
    with pytest.raises(ObservationOutsideRegion):
        two_sided_p([(1.0, 2.0)], 0.0, 1.0)
    # membership tolerance admits 1e-9 slack
    assert two_sided_p([(1.0, 2.0)], 1.0 - 5e-10, 1.0) <= 1.0


def test_zero_denominator_raises():
    with pytest.raises(ZeroDenominator):
        two_sided_p([], 0.0, 1.0)
    with pytest.raises(ZeroDenominator):
        two_sided_p([(500.0, 500.0)], 500.0, 1.0)


def test_unconditional_matches_naive():
    for z in (0.0, 0.3, -1.7, 4.2):
        p_cond = two_sided_p([(-INF, INF)], z, 2.0)
        assert math.isclose(p_cond, naive_two_sided(z, 2.0), rel_tol=1e-12, abs_tol=1e-300)


def test_monotone_in_abs_z():
    region = [(-3.0, -0.5), (0.2, 2.5)]
    zs = np.linspace(0.25, 2.45, 30)
    ps = [two_sided_p(region, float(z), 1.0) for z in zs]
    assert all(a >= b - 1e-12 for a, b in zip(ps, ps[1:]))


@settings(max_examples=60, deadline=None)
@given(
    z=st.floats(-3.0, 3.0),
    c=st.floats(0.01, 100.0),
    sigma=st.floats(0.1, 5.0),
)
def test_scale_equivariance(z, c, sigma):
    region = [(-4.0, -1.0), (-0.5, 2.0), (3.5, INF)]
    if not any(lo <= z <= hi for lo, hi in region):
        z = 1.0
    p1 = two_sided_p(region, z, sigma)
    scaled = [(lo * c, hi * c) for lo, hi in region]
    p2 = two_sided_p(scaled, z * c, sigma * c)
    assert math.isclose(p1, p2, rel_tol=1e-9, abs_tol=1e-12)


def test_union_normalization():
    u = IntervalUnion.from_pairs([(3.0, 4.0), (-1.0, 0.5), (0.5, 2.0)])
    assert u.as_lists() == [[-1.0, 2.0], [3.0, 4.0]]
    u = IntervalUnion.from_pairs([(0.0, 1.0), (1.0 + 1e-7, 2.0)], merge_gap=1e-6)
    assert len(u) == 1


def test_random_unions_match_quadrature(rng):
    """Mixed central and far-tail unions against the mpmath oracle."""
    for trial in range(25):
        sigma = float(rng.uniform(0.3, 3.0))
        k = int(rng.integers(1, 5))
        edges = np.sort(rng.normal(0, 4 * sigma, 2 * k))
        segments = [(float(edges[2 * i]), float(edges[2 * i + 1])) for i in range(k)]
        if trial % 3 == 0:
            far = float(rng.uniform(10, 38)) * sigma
            segments.append((far, far + sigma))
        union = IntervalUnion.from_pairs(segments)
        inside = union.segments[int(rng.integers(len(union.segments)))]
        z = float(rng.uniform(inside[0], min(inside[1], inside[0] + 8 * sigma)))
        got = two_sided_p(union, z, sigma)
        want = mp_two_sided(union.segments, z, sigma)
        assert math.isclose(got, want, rel_tol=1e-8, abs_tol=1e-250)
