import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siglass.affine import FULL_LINE, Interval, ParamTensor, PropagationSession, propagate
from siglass.errors import (
    DegenerateNormalization,
    EmptyNeighborhood,
    EmptyRoi,
    FullRoi,
    InternalInconsistency,
)
from siglass.hypotheses import (
    HypothesisConfig,
    PostProcessSpec,
    Roi,
    build_eta,
    extract_roi,
    gaussian_kernel,
    logit,
    neighborhood,
    score_map,
    selection_constraints,
    status_and_constraints,
    threshold_flags,
)
from siglass.ops import sigmoid

from conftest import conv_relu_conv


def cfg(**kw):
    kw.setdefault("preset", "BackMeanDiff")
    kw.setdefault("threshold", 0.5)
    return HypothesisConfig(**kw)


# --- score_map ---------------------------------------------------------------


def test_empty_chain_returns_raw_output():
    out = np.array([[0.1, 0.9]])
    got = score_map(cfg(), [np.zeros((1, 2))], [out])
    np.testing.assert_array_equal(got, out)


def test_input_diff_then_abs():
    out = np.array([2.0, 4.0])
    inp = np.array([1.0, 1.0])
    chain = (PostProcessSpec("InputDiff"), PostProcessSpec("Abs"))
    got = score_map(cfg(post_process=chain), [inp], [out])
    np.testing.assert_array_equal(got, [1.0, 3.0])
    neg = score_map(cfg(post_process=(PostProcessSpec("Neg"),)), [inp], [out])
    np.testing.assert_array_equal(neg, [-2.0, -4.0])


def test_gaussian_filter_on_impulse():
    """The filtered impulse reproduces the closed-form discretized kernel."""
    img = np.zeros((1, 1, 7, 7))
    img[0, 0, 3, 3] = 1.0
    chain = (PostProcessSpec("GaussianFilter", kernel_size=3, sigma=1.0),)
    got = score_map(cfg(post_process=chain), [img], [img])
    want = np.exp(-np.array([[2.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 2.0]]) / 2.0)
    want /= want.sum()
    np.testing.assert_allclose(got[0, 0, 2:5, 2:5], want, rtol=1e-15)
    assert math.isclose(gaussian_kernel(3, 1.0).sum(), 1.0, rel_tol=1e-15)
    np.testing.assert_allclose(got.sum(), 1.0, rtol=1e-12)


def test_average_filter_uniform():
    img = np.ones((1, 1, 5, 5))
    chain = (PostProcessSpec("AverageFilter", kernel_size=3),)
    got = score_map(cfg(post_process=chain), [img], [img])
    assert got[0, 0, 2, 2] == 1.0
    assert math.isclose(got[0, 0, 0, 0], 4.0 / 9.0)  # zero padding at the corner


def test_use_norm_normalizes():
    s = np.array([1.0, 3.0, 5.0])
    got = score_map(cfg(use_norm=True, threshold=0.6), [s], [s])
    np.testing.assert_allclose(got, [0.0, 0.5, 1.0])
    with pytest.raises(DegenerateNormalization):
        score_map(cfg(use_norm=True, threshold=0.6), [s], [np.ones(3)])


# --- extract_roi -------------------------------------------------------------


def test_threshold_examples():
    roi = extract_roi(cfg(), np.array([0.2, 0.9, 0.5]))
    np.testing.assert_array_equal(roi.pixels, [1, 2])


def test_logit_half_is_zero():
    assert logit(0.5) == 0.0
    score = np.array([-0.2, 0.1, 0.4])
    roi = extract_roi(cfg(), score, logit_threshold=True)
    np.testing.assert_array_equal(roi.pixels, [1, 2])


def test_use_norm_linearized_comparison():
    score = np.array([1.0, 3.0, 5.0])
    roi = extract_roi(cfg(use_norm=True, threshold=0.6), score)
    np.testing.assert_array_equal(roi.pixels, [2])  # S_i >= 1 + 0.6*4 = 3.4


def test_degenerate_roi_errors():
    with pytest.raises(EmptyRoi):
        extract_roi(cfg(threshold=2.0), np.array([0.1, 0.2]))
    with pytest.raises(FullRoi):
        extract_roi(cfg(threshold=0.0), np.array([0.1, 0.2]))


def test_mask_excluded_everywhere():
    mask = np.array([0, 1, 0, 0])
    score = np.array([0.9, 0.95, 0.8, 0.1])
    config = cfg(mask=mask)
    roi = extract_roi(config, score)
    np.testing.assert_array_equal(roi.pixels, [0, 2])  # pixel 1 masked out
    eta, contrast = build_eta(config, roi, 4)
    assert eta[1] == 0.0 and 1 not in contrast


def test_threshold_monotonicity(rng):
    score = rng.normal(size=32)
    sizes = []
    for tau in np.linspace(-2, 2, 15):
        flags = threshold_flags(cfg(threshold=float(tau)), score)
        sizes.append(int(flags.sum()))
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))


def test_logit_transform_equivalence(rng):
    """Thresholding sigmoid output at tau equals thresholding the
    pre-activation at logit(tau); both are exact comparisons."""
    pre = rng.normal(size=100) * 3
    for tau in (0.3, 0.5, 0.73, 0.9):
        via_sigmoid = sigmoid(pre) >= tau
        via_logit = threshold_flags(cfg(threshold=tau), pre, logit_threshold=True)
        np.testing.assert_array_equal(via_sigmoid.astype(np.uint8), via_logit)


# --- neighborhood ------------------------------------------------------------


def test_neighborhood_center_pixel():
    roi = Roi(np.array([4]), 9)  # center of a 3x3 image
    got = neighborhood(roi, 1, (3, 3))
    np.testing.assert_array_equal(got, [0, 1, 2, 3, 5, 6, 7, 8])


def test_neighborhood_corner_clipped():
    roi = Roi(np.array([0]), 9)
    got = neighborhood(roi, 1, (3, 3))
    np.testing.assert_array_equal(got, [1, 3, 4])


def test_neighborhood_matches_bruteforce(rng):
    for _ in range(10):
        h = w = 8
        pix = np.flatnonzero(rng.random(h * w) < 0.15)
        if pix.size == 0:
            continue
        roi = Roi(pix, h * w)
        got = set(neighborhood(roi, 2, (h, w)).tolist())
        want = set()
        for p in pix:
            py, px = divmod(int(p), w)
            for dy in range(-2, 3):
                for dx in range(-2, 3):
                    y, x = py + dy, px + dx
                    if 0 <= y < h and 0 <= x < w:
                        want.add(y * w + x)
        want -= set(pix.tolist())
        assert got == want


def test_neighborhood_empty_raises():
    roi = Roi(np.array([0]), 4)
    mask = np.array([0, 1, 1, 1])
    with pytest.raises(EmptyNeighborhood):
        neighborhood(roi, 1, (2, 2), mask)


# --- build_eta ---------------------------------------------------------------


def test_eta_back_mean_diff():
    roi = Roi(np.array([0, 1]), 4)
    eta, contrast = build_eta(cfg(), roi, 4)
    np.testing.assert_allclose(eta, [0.5, 0.5, -0.5, -0.5])
    np.testing.assert_array_equal(contrast, [2, 3])


def test_eta_reference_mean_diff():
    roi = Roi(np.array([0]), 4)
    eta, _ = build_eta(cfg(preset="ReferenceMeanDiff"), roi, 4)
    np.testing.assert_allclose(eta, [1, 0, 0, 0, -1, 0, 0, 0])


def test_eta_neighbor_mean_diff():
    roi = Roi(np.array([4]), 9)
    eta, contrast = build_eta(
        cfg(preset="NeighborMeanDiff", neighborhood_range=1), roi, 9, (3, 3)
    )
    assert eta[4] == 1.0
    assert contrast.size == 8
    np.testing.assert_allclose(eta[contrast], -1.0 / 8.0)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_eta_sums_to_zero(data):
    n = data.draw(st.integers(4, 36))
    k = data.draw(st.integers(1, n - 1))
    pixels = data.draw(
        st.lists(st.integers(0, n - 1), min_size=k, max_size=k, unique=True)
    )
    preset = data.draw(st.sampled_from(["BackMeanDiff", "ReferenceMeanDiff"]))
    eta, _ = build_eta(cfg(preset=preset), Roi(np.array(pixels), n), n)
    assert math.isclose(eta.sum(), 0.0, abs_tol=1e-12)


# --- selection constraints ---------------------------------------------------


def test_selection_constraints_two_pixels():
    pt = ParamTensor(np.array([1.0, -1.0]), np.array([1.0, 1.0]))
    roi = Roi(np.array([0]), 2)
    iv = selection_constraints(cfg(threshold=0.0), pt, 0.0, roi)
    assert iv == Interval(-1.0, 1.0)


def test_selection_constraints_constant_scores():
    pt = ParamTensor(np.array([1.0, -1.0]), np.zeros(2))
    roi = Roi(np.array([0]), 2)
    iv = selection_constraints(cfg(threshold=0.0), pt, 0.0, roi)
    assert iv.lo == -math.inf and iv.hi == math.inf


def test_selection_constraints_roi_mismatch_raises():
    pt = ParamTensor(np.array([1.0, -1.0]), np.array([1.0, 1.0]))
    with pytest.raises(InternalInconsistency):
        selection_constraints(cfg(threshold=0.0), pt, 0.0, Roi(np.array([1]), 2))


def _score_param_of(graph, config, a, b, z):
    from siglass.engine import LineParams, _score_param

    line = LineParams(a=a, b=b, z_obs=z, sigma_eta=1.0)
    session = PropagationSession(graph)
    return _score_param(session, config, line, z, False)


def test_status_stable_inside_interval(rng):
    """Dense-sampling oracle: statuses are constant on the returned interval
    and flip just outside (or the network piece ends there)."""
    g = conv_relu_conv(seed=9)
    config = cfg(threshold=0.3)
    for _ in range(5):
        a = rng.normal(size=64)
        b = rng.normal(size=64)
        z = float(rng.normal() * 0.3)
        score_pt, valid = _score_param_of(g, config, a, b, z)
        flags, iv = status_and_constraints(config, score_pt, z, valid)
        for zp in np.linspace(iv.lo + 1e-9, iv.hi - 1e-9, 10):
            probe = (score_pt.bias + score_pt.coeff * zp).reshape(-1) >= 0.3
            np.testing.assert_array_equal(probe.astype(np.uint8), flags)
        for outside, width in ((iv.hi + 1e-7, iv.hi - valid.hi), (iv.lo - 1e-7, valid.lo - iv.lo)):
            if abs(width) > 1e-9:  # binding constraint is a threshold crossing
                probe = (score_pt.bias + score_pt.coeff * outside).reshape(-1) >= 0.3
                assert not np.array_equal(probe.astype(np.uint8), flags)


def test_use_norm_conditions_on_extrema(rng):
    """Under use_norm the linearized statuses stay fixed on the interval and
    the argmin/argmax identities hold throughout."""
    g = conv_relu_conv(seed=10)
    config = cfg(use_norm=True, threshold=0.6)
    a = rng.normal(size=64)
    b = rng.normal(size=64)
    z = 0.1
    score_pt, valid = _score_param_of(g, config, a, b, z)
    flags, iv = status_and_constraints(config, score_pt, z, valid)
    sb = score_pt.bias.reshape(-1)
    sc = score_pt.coeff.reshape(-1)
    vals_z = sb + sc * z
    p, q = int(vals_z.argmin()), int(vals_z.argmax())
    for zp in np.linspace(iv.lo + 1e-9, iv.hi - 1e-9, 9):
        vals = sb + sc * zp
        assert int(vals.argmin()) == p and int(vals.argmax()) == q
        want = vals - ((1 - 0.6) * vals[p] + 0.6 * vals[q]) >= 0
        np.testing.assert_array_equal(want.astype(np.uint8), flags)
