import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_activation
from tcndpd.activations import (
    ALL_KINDS,
    KINKS,
    SMOOTH_KINDS,
    SPOT_VALUES,
    ActivationKind,
    activation_apply,
    activation_derivative,
    prelu_slope_grad,
)


def test_table_order_and_size():
    assert len(ALL_KINDS) == 22
    assert [k.value for k in ALL_KINDS] == list(range(1, 23))
    assert ActivationKind.HARDSWISH.value == 6
    assert ActivationKind.parse("hardswish") is ActivationKind.HARDSWISH
    assert ActivationKind.parse("LeakyReLU") is ActivationKind.LEAKYRELU
    with pytest.raises(ValueError):
        ActivationKind.parse("swishy")


@pytest.mark.parametrize("spot", SPOT_VALUES, ids=lambda s: f"{s.kind.label}({s.x})")
def test_spot_values(spot):
    assert activation_apply(spot.kind, np.array([spot.x]))[0] == pytest.approx(spot.y, abs=1e-12)


def test_headline_spot_values_exact():
    hs = ActivationKind.HARDSWISH
    assert activation_apply(hs, np.array([3.0, -3.0])).tolist() == [3.0, 0.0]
    assert activation_apply(ActivationKind.SIGMOID, np.array([0.0]))[0] == 0.5
    assert activation_apply(ActivationKind.RELU6, np.array([7.0]))[0] == 6.0
    assert activation_apply(ActivationKind.SOFTSIGN, np.array([1.0]))[0] == 0.5


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.label)
def test_matches_scalar_oracle(kind):
    v = np.linspace(-8, 8, 161)
    ours = activation_apply(kind, v)
    ref = np.array([naive_activation(kind.label, float(x)) for x in v])
    assert np.allclose(ours, ref, rtol=1e-12, atol=1e-12)


def _away_from_kinks(kind, v, margin=1e-3):
    for k in KINKS.get(kind, ()):
        v = v[np.abs(v - k) > margin]
    return v


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.label)
def test_derivative_vs_central_difference(kind):
    v = _away_from_kinks(kind, np.linspace(-7.3, 7.3, 293))
    eps = 1e-6
    num = (activation_apply(kind, v + eps) - activation_apply(kind, v - eps)) / (2 * eps)
    ana = activation_derivative(kind, v)
    rel = np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1.0)
    assert rel.max() < 1e-5


@settings(max_examples=200, deadline=None)
@given(kind=st.sampled_from(SMOOTH_KINDS), x=st.floats(-20, 20))
def test_smooth_kinds_derivative_property(kind, x):
    eps = 1e-6
    num = (activation_apply(kind, np.array([x + eps]))
           - activation_apply(kind, np.array([x - eps])))[0] / (2 * eps)
    ana = activation_derivative(kind, np.array([x]))[0]
    assert abs(ana - num) <= 1e-5 * max(1.0, abs(ana))


@settings(max_examples=100, deadline=None)
@given(kind=st.sampled_from(ALL_KINDS),
       v=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
def test_finite_on_wide_inputs(kind, v):
    arr = np.array(v)
    assert np.isfinite(activation_apply(kind, arr)).all()
    assert np.isfinite(activation_derivative(kind, arr)).all()


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-2, 2), seed=st.integers(0, 1000))
def test_prelu_slope_gradient(a, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=20)
    g = rng.normal(size=20)
    eps = 1e-6
    num = (np.sum(g * activation_apply(ActivationKind.PRELU, v, a + eps))
           - np.sum(g * activation_apply(ActivationKind.PRELU, v, a - eps))) / (2 * eps)
    assert prelu_slope_grad(v, g) == pytest.approx(num, abs=1e-6)


def test_shapes_preserved():
    v = np.zeros((2, 3, 4))
    for kind in ALL_KINDS:
        assert activation_apply(kind, v).shape == v.shape
        assert activation_derivative(kind, v).shape == v.shape
