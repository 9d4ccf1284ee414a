import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmlab import ChartDomainError, ConfigError, DomainGrid, GridRangeError, MapField, Region, \
    TargetChart, Potential
from hmlab.fields import (differential, energy_density, field_rows, integrate, load_field_csv,
                          residual, surface_integrate, tension_field)
from hmlab.initial import build_initial, exact_solution, kink_profile, tilted_instanton

SPHERE = TargetChart(2, "sphere")


def instanton_field(h, half=4.0, tilt=0.0):
    grid = DomainGrid(Region.box([[-half, half]] * 2), h)
    return MapField(grid, SPHERE, tilted_instanton(grid.coords, tilt))


def test_grid_shapes_and_status():
    g = DomainGrid(Region.box([[0.0, 1.0], [0.0, 2.0]]), 0.25)
    assert g.shape == (5, 9) and g.size == 45
    assert g.active.sum() == 3 * 7
    p = DomainGrid(Region.box([[0.0, 1.0]]), 0.25, bc="periodic")
    assert p.shape == (4,) and p.active.all()
    assert p.nbr[0, 0, 0] == 3
    f = DomainGrid(Region.ball([0.0, 0.0], 1.0), 0.1, bc="free")
    assert f.active.all() and not f.central.all()


def test_grid_errors():
    with pytest.raises(ConfigError):
        DomainGrid(Region.box([[0.0, 1.0]]), 0.3)
    with pytest.raises(ConfigError):
        DomainGrid(Region.ball([0.0], 1.0), 0.1, bc="periodic")
    with pytest.raises(ConfigError):
        DomainGrid(Region.box([[0.0, 1.0]]), 0.1, bc="neumann")
    with pytest.raises(ConfigError):
        Region.annulus([0.0, 0.0], 2.0, 1.0)


def test_differential_exact_cases():
    g = DomainGrid(Region.box([[-1.0, 1.0], [-1.0, 1.0]]), 0.1)
    const = MapField(g, TargetChart(2), np.tile([0.3, -0.2], (g.size, 1)))
    assert np.all(differential(const) == 0)
    A = np.array([[1.0, 2.0], [-0.5, 3.0]])
    lin = MapField(g, TargetChart(2), g.coords @ A.T)
    # (n, m) per node, holding A^T; exact on every node including the boundary
    assert np.allclose(differential(lin), A.T[None], atol=1e-12)
    line = DomainGrid(Region.box([[-1.0, 1.0]]), 0.01)
    s = MapField(line, TargetChart(1), np.sin(line.coords))
    node = line.nearest_node([0.0])
    assert abs(differential(s, node)[0, 0] - 1.0) <= 1.7e-5


def test_energy_density_cases():
    g = DomainGrid(Region.box([[-1.0, 1.0], [-1.0, 1.0]]), 0.1)
    ident = MapField(g, TargetChart(2), g.coords.copy())
    assert np.allclose(energy_density(ident), 1.0)
    f = instanton_field(0.02, 1.0)
    # |dphi|**2 = 8 / (1 + r**2)**2 gives e(0) = 4
    assert energy_density(f, f.grid.nearest_node([0.0, 0.0])) == pytest.approx(4.0, rel=1e-3)


def test_tension_exact_cases():
    g = DomainGrid(Region.box([[-1.0, 1.0]]), 0.1)
    quad = MapField(g, TargetChart(1), g.coords**2)
    tau = tension_field(quad)
    assert np.allclose(tau[g.active], 2.0)
    assert tension_field(quad, g.nearest_node([0.3]))[0] == pytest.approx(2.0)
    with pytest.raises(GridRangeError):
        tension_field(quad, 0)
    g2 = DomainGrid(Region.box([[-1.0, 1.0], [-1.0, 1.0]]), 0.1)
    aff = MapField(g2, TargetChart(2), g2.coords @ np.array([[1.0, 2.0], [0.0, 1.0]]) + 1.0)
    assert np.abs(tension_field(aff)).max() < 1e-10


def test_instanton_tension_second_order():
    errs = [residual(instanton_field(h, tilt=0.15), Potential()).sup for h in (0.2, 0.1)]
    assert 1.8 <= np.log2(errs[0] / errs[1]) <= 2.2


def test_residual_cases():
    g = DomainGrid(Region.box([[-10.0, 10.0]]), 0.01)
    dw = Potential("double_well_radial")
    one = MapField(g, TargetChart(1), np.ones((g.size, 1)))
    assert residual(one, dw).sup == 0.0
    kink = MapField(g, TargetChart(1), kink_profile(g.coords))
    assert residual(kink, dw).sup <= 1e-4


def test_integrate():
    g = DomainGrid(Region.box([[-1.5, 1.5], [-1.5, 1.5]]), 0.02)
    assert integrate(g, np.ones(g.size), [0.0, 0.0], 1.0) == pytest.approx(np.pi, abs=2e-2)
    assert integrate(g, np.zeros(g.size), [0.0, 0.0], 1.0) == 0.0
    with pytest.raises(GridRangeError):
        integrate(g, np.ones(g.size), [0.0, 0.0], 2.0)
    f = instanton_field(0.02, 1.5)
    assert integrate(f.grid, energy_density(f), [0.0, 0.0], 1.0) == \
        pytest.approx(2 * np.pi, rel=0.01)


def test_whole_region_quadrature():
    ball = DomainGrid(Region.ball([0.0, 0.0, 0.0], 1.0), 0.05)
    assert integrate(ball, np.ones(ball.size)) == pytest.approx(4 * np.pi / 3, rel=2e-3)
    ann = DomainGrid(Region.annulus([0.0, 0.0], 0.5, 1.0), 0.02)
    assert integrate(ann, np.ones(ann.size)) == pytest.approx(0.75 * np.pi, rel=2e-3)


def test_surface_integrate():
    g2 = DomainGrid(Region.box([[-1.5, 1.5], [-1.5, 1.5]]), 0.1)
    assert surface_integrate(g2, np.ones(g2.size), 1.0, [0.0, 0.0]) == \
        pytest.approx(2 * np.pi, abs=1e-6)
    g3 = DomainGrid(Region.box([[-1.5, 1.5]] * 3), 0.25)
    assert surface_integrate(g3, np.ones(g3.size), 1.0, [0.0, 0.0, 0.0]) == \
        pytest.approx(4 * np.pi, abs=1e-4)
    # radial derivative energy of the instanton: d/dr 4 pi r**2 / (1 + r**2) at r = 1
    f = instanton_field(0.02, 1.5)
    x = f.grid.coords
    r = np.linalg.norm(x, axis=1)
    xhat = x / np.where(r > 0, r, 1.0)[:, None]
    dr = np.einsum("ni,nia->na", xhat, differential(f))
    lam = SPHERE.conformal_factor(f.values)
    q = lam**2 * np.sum(dr**2, axis=1)
    assert surface_integrate(f.grid, q, 1.0, [0.0, 0.0]) == pytest.approx(2 * np.pi, rel=0.01)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=30, deadline=None)
def test_interpolation_exact_on_bilinear(a, b, c):
    g = DomainGrid(Region.box([[0.0, 1.0], [0.0, 1.0]]), 0.1)
    vals = a * g.coords[:, 0] + b * g.coords[:, 1] + c * g.coords[:, 0] * g.coords[:, 1]
    pts = np.array([[0.33, 0.71], [0.05, 0.95]])
    want = a * pts[:, 0] + b * pts[:, 1] + c * pts[:, 0] * pts[:, 1]
    assert np.allclose(g.interpolate(vals, pts), want)


def test_field_validation():
    g = DomainGrid(Region.box([[0.0, 1.0]]), 0.5)
    with pytest.raises(ConfigError):
        MapField(g, TargetChart(2), np.zeros((3, 1)))
    with pytest.raises(ChartDomainError) as info:
        MapField(g, TargetChart(1, "hyperbolic"), np.array([[0.0], [0.5], [1.2]]))
    assert info.value.index == 2


def test_snapshot_roundtrip(tmp_path):
    from hmlab.harness.io import write_csv
    f = instanton_field(0.5, 2.0, tilt=0.3)
    write_csv(tmp_path / "field.csv", *field_rows(f))
    back = load_field_csv(tmp_path / "field.csv", f.grid, SPHERE)
    assert np.array_equal(back.values, f.values)


def test_initial_kinds():
    g = DomainGrid(Region.box([[-1.0, 1.0], [-1.0, 1.0]]), 0.1)
    f = build_initial(g, SPHERE, {"kind": "random", "seed": 3, "amplitude": 0.2})
    again = build_initial(g, SPHERE, {"kind": "random", "seed": 3, "amplitude": 0.2})
    assert np.array_equal(f.values, again.values)
    assert np.abs(f.values).max() <= 0.2 + 1e-12
    inst = build_initial(g, SPHERE, {"kind": "instanton", "tilt": 0.2})
    assert np.array_equal(exact_solution(g, SPHERE, {"kind": "instanton", "tilt": 0.2}),
                          inst.values)
    # tilting is an isometry of the target, so the energy density is unchanged
    flat = build_initial(g, SPHERE, {"kind": "instanton"})
    x = g.coords
    exact_e = 4 / (1 + np.sum(x * x, axis=1)) ** 2
    c = g.central
    assert np.allclose(energy_density(flat)[c], exact_e[c], rtol=0.02)
    assert np.allclose(energy_density(inst)[c], exact_e[c], rtol=0.02)
    assert exact_solution(g, SPHERE, {"kind": "random", "seed": 1}) is None
    with pytest.raises(ConfigError):
        build_initial(g, TargetChart(2), {"kind": "instanton"})
    with pytest.raises(ConfigError):
        build_initial(g, SPHERE, {"kind": "spiral"})


def test_hedgehog_lies_on_sphere_equator():
    g = DomainGrid(Region.annulus([0.0, 0.0, 0.0], 0.5, 1.0), 0.1)
    chart = TargetChart(3, "sphere")
    f = build_initial(g, chart, {"kind": "hedgehog"})
    X = chart.to_sphere(f.values)
    x = g.coords
    assert np.allclose(X[:, :3], x / np.linalg.norm(x, axis=1)[:, None])
    assert np.allclose(X[:, 3], 0.0)
