import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windgp.errors import ConstraintViolation
from windgp.warping import WEIGHT_HIGH, WEIGHT_LOW, RbfLayer, WarpStack, probe_injectivity, warp_batch, warp_point


def stack2(*layers):
    return WarpStack(2, list(layers))


def test_center_is_fixed_point(backend):
    layer = RbfLayer([0.9, -0.4], [0.3, 0.7], 0.2)
    np.testing.assert_array_equal(warp_point(stack2(layer), [0.3, 0.7]), [0.3, 0.7])


def test_zero_weights_is_identity(backend, rng):
    X = rng.uniform(size=(20, 2))
    out = warp_batch(stack2(RbfLayer([0.0, 0.0], [0.5, 0.5], 0.25)), X)
    np.testing.assert_allclose(out, X, rtol=0, atol=1e-15)


def test_single_layer_hand_value(backend):
    layer = RbfLayer([1.0, 0.2], [0.5, 0.5], 0.25)
    out = warp_point(stack2(layer), [0.75, 0.5])
    # ||x - gamma||^2 / (2 a^2) = 0.0625 / 0.125 = 0.5
    assert out[0] == pytest.approx(0.75 + 0.25 * math.exp(-0.5), abs=1e-14)
    assert out[0] == pytest.approx(0.90163, abs=1e-5)
    assert out[1] == 0.5


def test_empty_batch():
    out = warp_batch(stack2(RbfLayer([0.5, 0.5], [0.5, 0.5], 0.3)), np.empty((0, 2)))
    assert out.shape == (0, 2)


def test_identical_points_identical_outputs(backend):
    X = np.tile([[0.2, 0.9]], (5, 1))
    out = warp_batch(stack2(RbfLayer([0.5, -0.5], [0.4, 0.6], 0.3)), X)
    assert np.all(out == out[0])


def test_batch_matches_pointwise(backend, rng):
    s = stack2(RbfLayer([1.2, 1.0], [0.4, 0.6], 0.18), RbfLayer([-0.7, 1.5], [0.2, 0.8], 0.25))
    X = rng.uniform(size=(30, 2))
    out = warp_batch(s, X)
    for i in range(30):
        np.testing.assert_array_equal(out[i], warp_point(s, X[i]))


def test_layers_compose_in_order(rng):
    l1 = RbfLayer([1.2, 1.0], [0.4, 0.6], 0.18)
    l2 = RbfLayer([-0.7, 1.5], [0.2, 0.8], 0.25)
    X = rng.uniform(size=(10, 2))
    np.testing.assert_allclose(warp_batch(stack2(l1, l2), X), warp_batch(stack2(l2), warp_batch(stack2(l1), X)))
    assert not np.allclose(warp_batch(stack2(l1, l2), X), warp_batch(stack2(l2, l1), X))


@pytest.mark.parametrize("bad", [WEIGHT_LOW, WEIGHT_HIGH, -1.5, 3.0])
def test_weight_bounds_enforced(bad):
    with pytest.raises(ConstraintViolation):
        warp_point(stack2(RbfLayer([bad, 0.0], [0.5, 0.5], 0.25)), [0.1, 0.1])


@pytest.mark.parametrize("gamma,a", [([1.2, 0.5], 0.2), ([0.5, -0.1], 0.2), ([0.5, 0.5], 0.0)])
def test_center_and_scale_bounds_enforced(gamma, a):
    with pytest.raises(ConstraintViolation):
        warp_point(stack2(RbfLayer([0.5, 0.5], gamma, a)), [0.1, 0.1])


def test_dimension_mismatch_rejected():
    with pytest.raises(ConstraintViolation):
        warp_point(WarpStack(1, [RbfLayer([0.5, 0.5], [0.5, 0.5], 0.2)]), [0.1])


def test_locality_far_from_center(backend):
    layer = RbfLayer([2.0, -0.9], [0.5, 0.5], 0.05)
    x = np.array([[0.5 + 10 * 0.05, 0.5], [0.0, 0.0], [1.0, 1.0]])
    out = warp_batch(stack2(layer), x)
    assert np.max(np.abs(out - x)) < 1e-12


@pytest.mark.parametrize("w,expand", [(0.8, True), (-0.6, False)])
def test_sign_semantics_1d(w, expand):
    s = WarpStack(1, [RbfLayer([w], [0.5], 0.2)])
    for x in (0.35, 0.62):
        y = warp_point(s, [x])[0]
        moved_away = abs(y - 0.5) > abs(x - 0.5)
        assert moved_away == expand


def test_probe_identity():
    assert probe_injectivity(WarpStack(2)) == (True, 1.0)


def test_probe_valid_layer_resolution_50():
    ok, det = probe_injectivity(stack2(RbfLayer([-0.9, 2.2], [0.3, 0.6], 0.25)), grid_resolution=50)
    assert ok and det > 0


def test_probe_detects_fold_over():
    # derivative at the center is 1 + w = -0.5 < 0
    ok, det = probe_injectivity(WarpStack(1, [RbfLayer([-1.5], [0.5], 0.25)]), grid_resolution=101)
    assert not ok and det < 0


def test_probe_rejects_tiny_grid():
    with pytest.raises(ValueError):
        probe_injectivity(WarpStack(1), grid_resolution=1)


weight = st.floats(WEIGHT_LOW + 1e-3, WEIGHT_HIGH - 1e-3)
center = st.floats(0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(w1=weight, w2=weight, g1=center, g2=center, a=st.floats(0.05, 1.0))
def test_valid_layers_are_injective(w1, w2, g1, g2, a):
    ok, _ = probe_injectivity(stack2(RbfLayer([w1, w2], [g1, g2], a)), grid_resolution=100)
    assert ok


@settings(max_examples=30, deadline=None)
@given(w=weight, g=center, a=st.floats(0.05, 1.0))
def test_valid_1d_layers_are_injective(w, g, a):
    ok, _ = probe_injectivity(WarpStack(1, [RbfLayer([w], [g], a)]), grid_resolution=100)
    assert ok
