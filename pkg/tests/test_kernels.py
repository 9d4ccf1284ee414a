"""The compiled kernels against their numpy twins."""

import numpy as np
import pytest

from hmlab import DomainGrid, MapField, Potential, Region, TargetChart, kernels
from hmlab.fields import residual
from hmlab.initial import build_initial

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="extension not built")

CASES = [
    (TargetChart(2, "sphere"), Potential("cosine_of_distance", [0.5, 2.0])),
    (TargetChart(2, "hyperbolic"), Potential("quadratic_radial", [-0.5])),
    (TargetChart(3, "sphere", 0.7), Potential("quadratic_radial", [0.3])),
    (TargetChart(1), Potential("double_well_radial")),
    (TargetChart(2), Potential()),
]


def _field(chart, bc="dirichlet", region=None):
    region = region or Region.box([[0.0, 1.0], [0.0, 1.0]])
    g = DomainGrid(region, 0.05, bc=bc)
    return build_initial(g, chart, {"kind": "random", "seed": 9, "amplitude": 0.4})


def _args(f, p):
    act, nbr = f.grid.flow_stencil()
    return act, nbr, f.grid.h, f.chart.sign, f.chart.curvature_scale, *p.kernel_params()


@needs_compiled
@pytest.mark.parametrize("chart,pot", CASES)
@pytest.mark.parametrize("bc", ["dirichlet", "periodic", "free"])
def test_residual_rows_agree(chart, pot, bc):
    f = _field(chart, bc)
    a = kernels.compiled.residual_rows(f.values, *_args(f, pot))
    b = kernels.reference.residual_rows(f.values, *_args(f, pot))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("chart,pot", CASES)
def test_flow_steps_agree(chart, pot):
    f = _field(chart, region=Region.ball([0.5, 0.5], 0.5))
    act, nbr, h, *params = _args(f, pot)
    dt = 0.1 * h * h
    a, na, ba = kernels.compiled.flow_steps(f.values, act, nbr, h, dt, 40, *params)
    b, nb, bb = kernels.reference.flow_steps(f.values, act, nbr, h, dt, 40, *params)
    assert (na, ba) == (nb, bb) == (40, -1)
    assert np.allclose(a, b, rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("chart,pot", CASES[:3])
def test_residual_rows_match_field_residual(chart, pot):
    f = _field(chart)
    act, *_ = f.grid.flow_stencil()
    rows = kernels.residual_rows(f.values, *_args(f, pot))
    R = residual(f, pot).vectors
    assert np.allclose(rows, R[act], atol=1e-10)


@needs_compiled
@pytest.mark.parametrize("chart,pot", CASES)
def test_rk4_path_agrees(chart, pot):
    m = chart.dim_m
    y0 = np.linspace(0.1, 0.3, m)
    v0 = np.linspace(-0.5, 0.4, m)
    params = (chart.sign, chart.curvature_scale, *pot.kernel_params())
    a, na = kernels.compiled.rk4_path(y0, v0, 1e-2, 200, 5e-3, *params)
    b, nb = kernels.reference.rk4_path(y0, v0, 1e-2, 200, 5e-3, *params)
    assert na == nb == 200
    assert np.allclose(a, b, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("impl", ["compiled", "reference"])
def test_flow_reports_chart_exit(impl):
    backend = getattr(kernels, impl)
    if backend is None:
        pytest.skip("extension not built")
    g = DomainGrid(Region.box([[0.0, 1.0]]), 0.1)
    f = MapField(g, TargetChart(1, "hyperbolic"), np.full((g.size, 1), 0.98))
    act, nbr, h, *params = _args(f, Potential("quadratic_radial", [1.0]))
    _, done, bad = backend.flow_steps(f.values, act, nbr, h, 5.0, 3, *params)
    assert done == 0 and bad >= 0


def test_fallback_selected_by_environment():
    import subprocess
    import sys
    code = "import hmlab.kernels as k; print(k.BACKEND, k.rk4_path.__module__)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**__import__("os").environ, "HMLAB_PURE_PYTHON": "1"}, check=True)
    assert out.stdout.split() == ["python", "hmlab.kernels._reference"]


def test_flow_runs_on_fallback():
    from hmlab.flow import advance
    f = _field(TargetChart(2, "sphere"))
    pot = Potential("quadratic_radial", [-0.5])
    dt = 0.1 * f.grid.h**2
    a = advance(f, pot, dt, 10, backend=kernels.reference)
    b = advance(f, pot, dt, 10)
    assert np.allclose(a.values, b.values, rtol=1e-11, atol=1e-13)
