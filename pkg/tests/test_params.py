import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windgp.errors import ConstraintViolation
from windgp.kernels import KernelFamily
from windgp.params import (
    ModelConfig,
    from_unconstrained,
    initial_theta,
    pack,
    to_unconstrained,
    unpack,
)
from windgp.warping import WEIGHT_HIGH, WEIGHT_LOW


def test_model_name_parsing():
    c = ModelConfig.from_name("M12-2-1")
    assert c.spatial_family == KernelFamily.M12
    assert (c.n_spatial_layers, c.n_temporal_layers) == (2, 1)
    assert c.temporal_family == KernelFamily.M32 and c.periodic
    assert c.name == "M12-2-1"
    assert c.n_params == 6 + 10 + 3 + 1


def test_unwarped_model_has_seven_parameters():
    c = ModelConfig.from_name("SE-0-0")
    assert c.n_params == 7
    assert c.group_sizes() == {"k": 7, "wS": 0, "wT": 0}


def test_no_periodic_model_has_four_parameters():
    assert ModelConfig("SE", 0, 0, "M32", periodic=False).n_params == 4


@pytest.mark.parametrize("bad", ["SE-4-0", "SE-0-2", "XX-0-0", "SE-0"])
def test_bad_names_rejected(bad):
    with pytest.raises(ValueError):
        ModelConfig.from_name(bad)


def test_log_transform_of_one():
    c = ModelConfig("SE", 0, 0, "M32", False)
    th = initial_theta(c, 1.0)
    th.spec.rho_s = 1.0
    u = to_unconstrained(th, c)
    assert u[0] == 0.0 and u[1] == 0.0
    assert from_unconstrained(u, c).spec.eta == 1.0


def test_weight_midpoint_maps_to_zero():
    c = ModelConfig("SE", 0, 1, "M32", False)
    th = initial_theta(c, 1.0, [1])
    th.spec.temporal_warp.layers[0].w[0] = (WEIGHT_LOW + WEIGHT_HIGH) / 2
    u = to_unconstrained(th, c)
    names = [n for n, _, _ in c.layout()]
    assert u[names.index("t0.w")] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("field,value", [("w", WEIGHT_LOW), ("w", WEIGHT_HIGH), ("g", 0.0), ("g", 1.0), ("a", 0.0)])
def test_boundary_values_rejected(field, value):
    c = ModelConfig("SE", 1, 0, "M32", False)
    th = initial_theta(c, 1.0, [1, -1])
    layer = th.spec.spatial_warp.layers[0]
    if field == "w":
        layer.w[0] = value
    elif field == "g":
        layer.gamma[1] = value
    else:
        layer.a = value
    with pytest.raises(ConstraintViolation):
        to_unconstrained(th, c)


def test_initial_weights_at_half_domain_midpoints():
    c = ModelConfig("SE", 1, 1, "M32", True)
    th = initial_theta(c, 0.04, [-1, 1, 1])
    assert th.spec.spatial_warp.layers[0].w.tolist() == [-0.5, pytest.approx(1.12042, abs=1e-5)]
    assert th.spec.temporal_warp.layers[0].w[0] == pytest.approx(math.exp(1.5) / 4)
    assert th.spec.eta == 0.04 and th.sigma2 == pytest.approx(0.004)
    assert (th.spec.rho_s, th.spec.rho_t, th.spec.eta_p, th.spec.rho_p, th.spec.period) == (0.2, 0.2, 0.1, 1.0, 0.5)
    with pytest.raises(ValueError):
        initial_theta(c, 0.04, [1])


configs = st.builds(
    ModelConfig,
    st.sampled_from(list(KernelFamily)),
    st.integers(0, 3),
    st.integers(0, 1),
    st.sampled_from(list(KernelFamily)),
    st.booleans(),
)


@settings(max_examples=60, deadline=None)
@given(config=configs, data=st.data())
def test_round_trip(config, data):
    kinds = [k for _, k, _ in config.layout()]
    vals = []
    for k in kinds:
        if k == "pos":
            vals.append(data.draw(st.floats(1e-3, 1e3)))
        elif k == "weight":
            vals.append(data.draw(st.floats(WEIGHT_LOW + 1e-6, WEIGHT_HIGH - 1e-6)))
        else:
            vals.append(data.draw(st.floats(1e-6, 1 - 1e-6)))
    vals = np.array(vals)
    theta = unpack(vals, config)
    back = pack(from_unconstrained(to_unconstrained(theta, config), config), config)
    np.testing.assert_allclose(back, vals, rtol=1e-10, atol=1e-10)
