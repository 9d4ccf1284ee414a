import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmlab import ChartDomainError, ConfigError, OutOfCapError, TargetChart, make_chart
from hmlab.geometry import christoffel_at, distance_from_center, metric_at, xi_function

KINDS = ["euclidean", "sphere", "hyperbolic"]


def test_metric_values():
    assert np.array_equal(metric_at(TargetChart(3), [1.0, -2.0, 5.0]), np.eye(3))
    s = TargetChart(2, "sphere")
    assert np.allclose(metric_at(s, [0.0, 0.0]), 4 * np.eye(2))
    assert np.allclose(metric_at(s, [1.0, 0.0]), np.eye(2))
    assert np.allclose(metric_at(s, [0.6, 0.8]), np.eye(2))


def test_poincare_ball_rejects_exterior():
    hyp = TargetChart(2, "hyperbolic")
    with pytest.raises(ChartDomainError):
        metric_at(hyp, [1.0, 0.0])
    with pytest.raises(ChartDomainError) as info:
        hyp.check(np.array([[0.0, 0.0], [0.5, 0.0], [0.9, 0.9]]))
    assert info.value.index == (2,)


def test_bad_construction():
    with pytest.raises(ConfigError):
        TargetChart(2, "torus")
    with pytest.raises(ConfigError):
        TargetChart(0)
    with pytest.raises(ConfigError):
        TargetChart(2, "sphere", curvature_scale=-1.0)


def test_christoffel_trivial_cases():
    assert np.all(christoffel_at(TargetChart(2), [0.3, 0.4]) == 0)
    assert np.allclose(christoffel_at(TargetChart(2, "sphere"), [0.0, 0.0]), 0)


def _christoffel_fd(chart, y, eps=1e-5):
    m = len(y)
    dg = np.zeros((m, m, m))  # dg[c, a, b] = d_c g_ab
    for c in range(m):
        e = np.zeros(m)
        e[c] = eps
        dg[c] = (metric_at(chart, y + e) - metric_at(chart, y - e)) / (2 * eps)
    ginv = np.linalg.inv(metric_at(chart, y))
    low = 0.5 * (np.einsum("bac->abc", dg) + np.einsum("cab->abc", dg) - dg)
    # low[a, b, c] = Gamma_{a b c} with the first index lowered
    return np.einsum("da,abc->dbc", ginv, low)


@pytest.mark.parametrize("kind,y", [("sphere", [1.0, 0.0]), ("sphere", [0.3, -0.7]),
                                    ("hyperbolic", [0.2, 0.5]), ("sphere", [0.1, 0.2, 0.3])])
def test_christoffel_matches_metric_differences(kind, y):
    chart = TargetChart(len(y), kind)
    y = np.array(y)
    assert np.allclose(christoffel_at(chart, y), _christoffel_fd(chart, y), atol=1e-8)


def test_distance_values():
    assert distance_from_center(TargetChart(2), [3.0, 4.0]) == pytest.approx(5.0)
    assert distance_from_center(TargetChart(2, "sphere"), [0.6, 0.8]) == pytest.approx(np.pi / 2)
    assert distance_from_center(TargetChart(2, "hyperbolic"), [0.0, 0.0]) == 0.0
    # Poincare ball: rho = 2 artanh |y|
    assert distance_from_center(TargetChart(1, "hyperbolic"), [0.5]) == \
        pytest.approx(2 * np.arctanh(0.5))


@given(st.sampled_from(KINDS), st.floats(0.0, 0.95), st.floats(0.3, 2.0))
@settings(max_examples=60, deadline=None)
def test_distance_inverse(kind, t, k):
    chart = TargetChart(1, kind, curvature_scale=k)
    y = np.array([t / k])
    rho = distance_from_center(chart, y)
    assert chart.chart_norm_of_distance(rho) == pytest.approx(y[0], rel=1e-12, abs=1e-15)


@given(st.lists(st.floats(-0.9, 0.9), min_size=2, max_size=2))
@settings(max_examples=50, deadline=None)
def test_sphere_distance_matches_embedding(y):
    chart = TargetChart(2, "sphere")
    X = chart.to_sphere(np.array(y))
    south = np.array([0.0, 0.0, -1.0])
    angle = 2 * np.arcsin(np.linalg.norm(X - south) / 2)
    assert distance_from_center(chart, y) == pytest.approx(angle, abs=1e-9)
    assert np.allclose(chart.from_sphere(X), y)


def test_xi():
    for kind in KINDS:
        assert xi_function(TargetChart(2, kind), [0.0, 0.0], 4.0) == pytest.approx(2.0)
    s = TargetChart(1, "sphere")
    y = s.chart_norm_of_distance(np.pi / 4)
    assert xi_function(s, [y], 1.0) == pytest.approx(np.sqrt(2) / 2)
    with pytest.raises(OutOfCapError):
        xi_function(s, [1.0], 1.0)


def test_make_chart_aliases():
    assert make_chart("sphere_stereographic", 2).geometry_kind == "sphere_stereographic"
    assert make_chart("hyperbolic", 2).curvature_bound == -1.0
    assert make_chart("sphere", 2, 2.0).curvature_bound == 4.0
    assert make_chart("flat", 2).sign == 0
