import math

import numpy as np
import pytest
from scipy.stats import kstest

from siglass.errors import InvalidSpec
from siglass.synthdata import SynthSpec, Xoshiro256pp, generate, sample, splitmix64


def test_splitmix64_reference_vector():
    """First outputs of the reference SplitMix64 sequence for state 0."""
    state = 0
    outs = []
    for _ in range(3):
        state, v = splitmix64(state)
        outs.append(v)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_xoshiro_unit_interval():
    rng = Xoshiro256pp(42)
    us = [rng.next_unit() for _ in range(10_000)]
    assert all(0.0 < u <= 1.0 for u in us)
    assert 0.45 < np.mean(us) < 0.55


def test_normals_pass_ks():
    vals = Xoshiro256pp(7).normals(20_000)
    assert kstest(vals, "norm").pvalue > 1e-4


def test_stream_is_pure_function_of_seed():
    spec = SynthSpec(n_samples=3, shape=(1, 8, 8), local_signal=2.0, seed=99)
    a = [sample(spec, i) for i in range(3)]
    b = list(generate(spec))
    for (img1, m1, l1), (img2, m2, l2) in zip(a, b):
        np.testing.assert_array_equal(img1, img2)
        np.testing.assert_array_equal(m1, m2)
        assert l1 == l2
    # different seed, different stream
    other = sample(SynthSpec(n_samples=3, shape=(1, 8, 8), local_signal=2.0, seed=100), 0)
    assert not np.array_equal(a[0][0], other[0])


def test_samples_are_independent_substreams():
    spec = SynthSpec(n_samples=2, shape=(1, 4, 4), seed=5)
    img0, _, _ = sample(spec, 0)
    img1, _, _ = sample(spec, 1)
    assert not np.array_equal(img0, img1)
    # sample index i under seed s equals sample 0 under seed s+i
    shifted = sample(SynthSpec(n_samples=1, shape=(1, 4, 4), seed=6), 0)[0]
    np.testing.assert_array_equal(img1, shifted)


def test_null_sample_has_no_mask():
    img, mask, label = sample(SynthSpec(n_samples=1, shape=(1, 8, 8), seed=0), 0)
    assert label == 0
    assert mask.sum() == 0


def test_default_local_size_is_third_of_min_dim():
    spec = SynthSpec(n_samples=1, shape=(1, 16, 16), local_signal=1.0, seed=0)
    assert spec.effective_local_size() == 5
    img, mask, label = sample(spec, 0)
    assert label == 1
    assert mask.sum() == 5 * 5 * 1


def test_signal_square_in_bounds_and_additive():
    spec = SynthSpec(n_samples=50, shape=(2, 9, 7), local_signal=3.0, local_size=3, seed=3)
    null_spec = SynthSpec(n_samples=50, shape=(2, 9, 7), local_signal=0.0, seed=3)
    for i in range(50):
        img, mask, label = sample(spec, i)
        base, _, _ = sample(null_spec, i)
        assert label == 1
        assert mask.sum() == 3 * 3 * 2
        ys, xs = np.nonzero(mask[0])
        assert ys.min() >= 0 and ys.max() < 9 and xs.min() >= 0 and xs.max() < 7
        assert ys.max() - ys.min() == 2 and xs.max() - xs.min() == 2
        np.testing.assert_allclose(img - base, 3.0 * mask)


def test_law_of_large_numbers():
    spec = SynthSpec(n_samples=25, shape=(1, 64, 64), loc=0.7, scale=1.3, seed=17)
    pixels = np.concatenate([sample(spec, i)[0].ravel() for i in range(25)])
    n = pixels.size
    assert n > 100_000
    assert abs(pixels.mean() - 0.7) < 4 * 1.3 / math.sqrt(n)
    assert abs(pixels.var() - 1.3**2) < 0.05 * 1.3**2


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        SynthSpec(n_samples=0, shape=(1, 8, 8))
    with pytest.raises(InvalidSpec):
        SynthSpec(n_samples=1, shape=(1, 8))
    with pytest.raises(InvalidSpec):
        SynthSpec(n_samples=1, shape=(1, 8, 8), scale=0.0)
    with pytest.raises(InvalidSpec):
        SynthSpec(n_samples=1, shape=(1, 8, 8), local_signal=1.0, local_size=9)
    with pytest.raises(InvalidSpec):
        sample(SynthSpec(n_samples=1, shape=(1, 8, 8)), 1)
