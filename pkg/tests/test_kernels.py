"""Backend equivalence and semantics of the line-sweep kernels.

The two backends must agree bit for bit: the sweep is only deterministic
across installs if the compiled and numpy paths tighten intervals to
identical floats.
"""

import math

import numpy as np
import pytest

from siglass.kernels import backend_name, get_backend

pure = get_backend("pure")
try:
    fast = get_backend("compiled")
except ImportError:  # pragma: no cover - extension not built
    fast = None

needs_fast = pytest.mark.skipif(fast is None, reason="compiled kernels not built")


def _random_case(rng, n=64):
    bias = rng.normal(size=n)
    coeff = rng.normal(size=n)
    coeff[rng.random(n) < 0.2] = 0.0  # constant elements never constrain
    z = float(rng.normal())
    return bias, coeff, z


@needs_fast
def test_two_piece_backends_identical(rng):
    for slope in (0.0, 0.01, -1.0):
        for _ in range(50):
            bias, coeff, z = _random_case(rng)
            outs = []
            for impl in (pure, fast):
                ob = np.empty_like(bias)
                oc = np.empty_like(coeff)
                lo, hi = impl.two_piece_update(
                    bias.copy(), coeff.copy(), z, slope, -math.inf, math.inf, ob, oc
                )
                outs.append((lo, hi, ob, oc))
            assert outs[0][0] == outs[1][0] and outs[0][1] == outs[1][1]
            np.testing.assert_array_equal(outs[0][2], outs[1][2])
            np.testing.assert_array_equal(outs[0][3], outs[1][3])


@needs_fast
def test_threshold_backends_identical(rng):
    for _ in range(50):
        bias, coeff, z = _random_case(rng)
        excluded = (rng.random(bias.size) < 0.3).astype(np.uint8)
        for excl in (None, excluded):
            res = []
            for impl in (pure, fast):
                flags = np.empty(bias.size, dtype=np.uint8)
                lo, hi = impl.threshold_update(
                    bias, coeff, excl, z, 0.4, -math.inf, math.inf, flags
                )
                res.append((lo, hi, flags))
            assert res[0][0] == res[1][0] and res[0][1] == res[1][1]
            np.testing.assert_array_equal(res[0][2], res[1][2])


@needs_fast
def test_dominance_backends_identical(rng):
    for _ in range(50):
        bias, coeff, z = _random_case(rng, n=16)
        k = int(rng.integers(16))
        for sense in (-1.0, 1.0):
            a = pure.dominance_update(bias, coeff, None, k, sense, z, -math.inf, math.inf)
            b = fast.dominance_update(bias, coeff, None, k, sense, z, -math.inf, math.inf)
            assert a == b


@needs_fast
def test_maxpool_backends_identical(rng):
    for _ in range(50):
        wb = rng.normal(size=(9, 4))
        wc = rng.normal(size=(9, 4))
        valid = (rng.random((9, 4)) < 0.8).astype(np.uint8)
        valid[:, 0] = 1  # at least one candidate per window
        z = float(rng.normal())
        for v in (None, valid):
            res = []
            for impl in (pure, fast):
                ob = np.empty(9)
                oc = np.empty(9)
                lo, hi = impl.maxpool_update(wb, wc, v, z, -math.inf, math.inf, ob, oc)
                res.append((lo, hi, ob.copy(), oc.copy()))
            assert res[0][0] == res[1][0] and res[0][1] == res[1][1]
            np.testing.assert_array_equal(res[0][2], res[1][2])
            np.testing.assert_array_equal(res[0][3], res[1][3])


def test_two_piece_interval_is_sharp(rng):
    """Inside the returned interval the branch pattern matches the one at z;
    just beyond a finite endpoint it differs."""
    impl = get_backend(backend_name())
    for _ in range(20):
        bias, coeff, z = _random_case(rng, n=32)
        ob = np.empty_like(bias)
        oc = np.empty_like(coeff)
        lo, hi = impl.two_piece_update(bias, coeff, z, 0.0, -math.inf, math.inf, ob, oc)
        assert lo <= z <= hi
        pattern = bias + coeff * z > 0
        for probe in np.linspace(lo + 1e-9, hi - 1e-9, 5):
            assert np.array_equal(bias + coeff * probe > 0, pattern)
        if math.isfinite(hi):
            assert not np.array_equal(bias + coeff * (hi + 1e-7) > 0, pattern)
        if math.isfinite(lo):
            assert not np.array_equal(bias + coeff * (lo - 1e-7) > 0, pattern)


def test_threshold_flags_inclusive():
    impl = get_backend(backend_name())
    flags = np.empty(3, dtype=np.uint8)
    bias = np.array([0.4, 0.39999, 0.5])
    coeff = np.zeros(3)
    lo, hi = impl.threshold_update(bias, coeff, None, 0.0, 0.4, -math.inf, math.inf, flags)
    np.testing.assert_array_equal(flags, [1, 0, 1])  # >= is inclusive
    assert lo == -math.inf and hi == math.inf  # constants never constrain


def test_maxpool_tie_breaks_low_index():
    impl = get_backend(backend_name())
    wb = np.array([[1.0, 1.0, 0.0]])
    wc = np.zeros((1, 3))
    ob = np.empty(1)
    oc = np.empty(1)
    impl.maxpool_update(wb, wc, None, 0.0, -math.inf, math.inf, ob, oc)
    assert ob[0] == 1.0 and oc[0] == 0.0
