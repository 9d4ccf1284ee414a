import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmlab import ConfigError, Potential, TargetChart, theorem_constants
from hmlab.potentials import covariant_hessian, metric_gradient, value

FLAT1 = TargetChart(1)
ALL = [Potential("zero"), Potential("quadratic_radial", [0.5]),
       Potential("quadratic_radial", [-0.7]), Potential("cosine_of_distance", [1.0, 1.0]),
       Potential("cosine_of_distance", [2.0, 0.5])]
CHARTS = [TargetChart(2), TargetChart(2, "sphere"), TargetChart(2, "hyperbolic"),
          TargetChart(3, "sphere", 0.5)]


def test_values():
    for chart in CHARTS:
        assert value(Potential("zero"), chart, [0.1] * chart.dim_m) == 0
    dw = Potential("double_well_radial")
    assert value(dw, FLAT1, [0.0]) == pytest.approx(-0.25)
    assert value(dw, FLAT1, [1.0]) == 0.0
    assert value(dw, FLAT1, [-1.0]) == 0.0


def test_gradients():
    assert np.all(metric_gradient(Potential("zero"), CHARTS[1], [0.2, 0.1]) == 0)
    assert metric_gradient(Potential("double_well_radial"), FLAT1, [0.5]) == \
        pytest.approx([0.375])
    assert metric_gradient(Potential("quadratic_radial", [0.5]), TargetChart(2), [1.0, 2.0]) == \
        pytest.approx([1.0, 2.0])


def test_hessians():
    assert np.all(covariant_hessian(Potential("zero"), CHARTS[2], [0.2, 0.1]) == 0)
    H = covariant_hessian(Potential("quadratic_radial", [0.5]), TargetChart(3), [0.3, -1, 2])
    assert np.allclose(H, np.eye(3))
    H = covariant_hessian(Potential("cosine_of_distance", [1.0, 1.0]), CHARTS[1], [0.0, 0.0])
    assert np.allclose(H, -4 * np.eye(2))


def test_double_well_needs_flat_target():
    with pytest.raises(ConfigError):
        value(Potential("double_well_radial"), TargetChart(1, "sphere"), [0.0])


def test_bad_coefficients():
    with pytest.raises(ConfigError):
        Potential("quadratic_radial")
    with pytest.raises(ConfigError):
        Potential("zero", [1.0])
    with pytest.raises(ConfigError):
        Potential("sextic")


def _geodesic(chart, y, v, t):
    """Point at arc length t along the geodesic from y with unit initial speed."""
    from hmlab.geodesics import GeodesicState, integrate_trajectory
    v = v / chart.norm(y, v)
    tr = integrate_trajectory(chart, Potential("zero"), GeodesicState(y, v), 1e-3, t)
    return tr.final.position


@pytest.mark.parametrize("pot", ALL[1:])
@pytest.mark.parametrize("chart", CHARTS[:3])
def test_hessian_matches_second_derivative_along_geodesics(pot, chart):
    y = np.array([0.15, -0.1])
    v = np.array([0.6, 0.8])
    eps = 0.01
    f = [float(value(pot, chart, _geodesic(chart, y, s * v, eps))) for s in (1, -1)]
    second = (f[0] - 2 * float(value(pot, chart, y)) + f[1]) / eps**2
    u = v / chart.norm(y, v)
    hess = covariant_hessian(pot, chart, y)
    assert u @ hess @ u == pytest.approx(second, abs=2e-4)


@pytest.mark.parametrize("pot", ALL + [Potential("double_well_radial")])
def test_gradient_matches_differences(pot):
    chart = TargetChart(2) if pot.kind == "double_well_radial" else TargetChart(2, "hyperbolic")
    y = np.array([0.3, -0.2])
    eps = 1e-6
    dV = np.array([(value(pot, chart, y + e) - value(pot, chart, y - e)) / (2 * eps)
                   for e in eps * np.eye(2)])
    lam = chart.conformal_factor(y)
    assert np.allclose(metric_gradient(pot, chart, y), dV / lam**2, atol=1e-8)


@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
@settings(max_examples=40, deadline=None)
def test_hessian_symmetric(a, b):
    for pot in ALL:
        for chart in CHARTS[:3]:
            H = covariant_hessian(pot, chart, [a * 0.85, b * 0.85])
            assert np.allclose(H, H.T)


def test_theorem_constants():
    tc = theorem_constants(Potential("zero"), TargetChart(2), probe_radius=1.0)
    assert tc["A_V"] == 0 and tc["concave"] and tc["sign"] == "zero"
    tc = theorem_constants(Potential("quadratic_radial", [-0.5]), TargetChart(2), probe_radius=3)
    assert tc["concave"] and tc["A_V"] == 0 and tc["sign"] == "nonpositive"
    tc = theorem_constants(Potential("double_well_radial"), FLAT1, probe_radius=1.0)
    assert not tc["concave"]
    assert tc["A_V"] == pytest.approx(1.0)  # V'' = 1 - 3u**2 peaks at u = 0
    tc = theorem_constants(Potential("cosine_of_distance", [1.0, 1.0]),
                           TargetChart(2, "hyperbolic"), probe_radius=0.5)
    assert tc["sign"] == "positive" and tc["energy2_condition"]
    assert tc["C3"] == pytest.approx(4.0, abs=1e-9)
    with pytest.raises(ConfigError):
        theorem_constants(Potential("zero"), TargetChart(2))
