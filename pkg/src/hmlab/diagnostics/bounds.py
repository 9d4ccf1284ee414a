"""Gradient bounds and Liouville-type statements with explicit hypothesis gates.

Every check returns a :class:`BoundCheck`.  When a hypothesis fails the status
is ``NOT-APPLICABLE`` and no verdict is drawn; when the field is not a
converged solution (residual above tolerance) a violated bound is reported as
``UNCONVERGED`` rather than ``FAIL``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from hmlab import flow
from hmlab.diagnostics.local import jet
from hmlab.errors import ConfigError
from hmlab.fields import MapField, _default_center, integrate, residual
from hmlab.potentials import Potential, theorem_constants

PASS, FAIL, NA, UNCONVERGED = "PASS", "FAIL", "NOT-APPLICABLE", "UNCONVERGED"


@dataclass
class BoundCheck:
    name: str
    hypotheses: dict
    hypotheses_satisfied: bool
    lhs: float = float("nan")
    rhs: float = float("nan")
    margin: float = float("nan")
    passed: bool | None = None
    status: str = NA
    constants: dict = dc_field(default_factory=dict)
    extra: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "hypotheses": self.hypotheses,
                "hypotheses_satisfied": self.hypotheses_satisfied, "lhs": self.lhs,
                "rhs": self.rhs, "margin": self.margin, "pass": self.passed,
                "status": self.status, "constants": self.constants, "extra": self.extra}


def _verdict(passed: bool, converged: bool) -> str:
    if passed:
        return PASS
    return FAIL if converged else UNCONVERGED


def _not_applicable(name, hyp, constants=None, **extra):
    return BoundCheck(name, hyp, False, constants=constants or {}, extra=extra)


def _radial(grid, x0, a):
    x0 = _default_center(grid) if x0 is None else np.asarray(x0, dtype=float)
    r = np.linalg.norm(grid.coords - x0, axis=1)
    return x0, r, r < a


def ball_bound_rhs(r, rho, grad_norm, a, d, C2, C_L, A_V):
    """Right-hand side of the ball gradient estimate, per node."""
    s = np.sqrt(d)
    cos = np.cos(s * rho)
    w = a * a - r * r
    first = 16.0 * r * s / (C2 * w * cos)
    inner = 2 * A_V + 2 * C_L * (1 + r) / w + 16 * r * r / w**2 + 2 * s * grad_norm / cos
    return np.maximum(first, 2.0 / np.sqrt(C2) * np.sqrt(inner))


def gradient_bound_ball(field: MapField, potential: Potential, a: float, d: float, R: float,
                        x0=None, tol: float | None = None) -> BoundCheck:
    """Pointwise bound on ``|dphi|`` for maps with image in a small geodesic ball.

    Constants: ``C2 = d - B`` and ``C_L = 2n`` (exact for ``Delta r**2`` on
    flat space).  ``A_V`` is ``max(0, largest Hess V eigenvalue)`` probed over
    the image.  The reference point of the target is the chart origin.
    The auxiliary field ``F = (a**2 - r**2)**2 |dphi|**2 / xi(phi)**2`` is
    located and reported but not checked.
    """
    grid, chart = field.grid, field.chart
    n = grid.dim
    B = chart.curvature_bound
    y = field.values
    rho = chart.distance(y)
    x0, r, inside = _radial(grid, x0, a)
    hyp = {"d_positive": bool(d > 0), "B_below_d": bool(B < d),
           "R_below_cap": bool(d > 0 and R < np.pi / (2 * np.sqrt(d))),
           "image_in_ball": bool(np.max(rho) < R), "a_positive": bool(a > 0),
           "nodes_in_ball": int(inside.sum())}
    consts = {"C2": d - B, "C_L": 2 * n, "B": B, "d": d, "R": R, "a": a,
              "max_image_distance": float(np.max(rho))}
    if not all(v for k, v in hyp.items() if k != "nodes_in_ball") or not inside.any():
        return _not_applicable("gradient_bound_ball", hyp, consts)
    tc = theorem_constants(potential, chart, points=y)
    A_V = tc["A_V"]
    if not np.isfinite(A_V):
        hyp["A_V_finite"] = False
        return _not_applicable("gradient_bound_ball", hyp, consts)
    hyp["A_V_finite"] = True
    consts["A_V"] = A_V
    J = jet(field)
    lhs = np.sqrt(J.dphi_sq)
    gnorm = chart.norm(y, potential.gradient(chart, y))
    rhs = ball_bound_rhs(r[inside], rho[inside], gnorm[inside], a, d, d - B, 2 * n, A_V)
    margin = rhs - lhs[inside]
    k = int(np.argmin(margin))
    xi = chart.xi(y[inside], d)
    F = (a * a - r[inside] ** 2) ** 2 * J.dphi_sq[inside] / xi**2
    kf = int(np.argmax(F))
    converged = _is_converged(field, potential, tol)
    passed = bool(np.all(margin >= 0))
    nodes = np.flatnonzero(inside)
    return BoundCheck(
        "gradient_bound_ball", hyp, True, float(lhs[inside][k]), float(rhs[k]),
        float(margin[k]), passed, _verdict(passed, converged), consts,
        {"worst_node_x": grid.coords[nodes[k]].tolist(), "max_lhs": float(lhs[inside].max()),
         "F_max": float(F[kf]), "F_argmax_x": grid.coords[nodes[kf]].tolist(),
         "converged": converged})


def ball_bound_sequence(field: MapField, potential: Potential, a_values, d: float,
                        x0=None) -> dict:
    """Right-hand side of the ball estimate for increasing ``a`` on the nodes with ``r < min(a)``.

    Returns the per-``a`` maxima and whether the sequence decreases at every node.
    """
    grid, chart = field.grid, field.chart
    a_values = sorted(float(a) for a in a_values)
    x0, r, inside = _radial(grid, x0, a_values[0])
    y = field.values[inside]
    rho = chart.distance(y)
    gnorm = chart.norm(y, potential.gradient(chart, y))
    A_V = theorem_constants(potential, chart, points=field.values)["A_V"]
    C2 = d - chart.curvature_bound
    seq = [ball_bound_rhs(r[inside], rho, gnorm, a, d, C2, 2 * grid.dim, A_V)
           for a in a_values]
    decreasing = all(bool(np.all(seq[i + 1] <= seq[i])) for i in range(len(seq) - 1))
    limit = 8.0 / C2 * (A_V + np.sqrt(d) * gnorm / np.cos(np.sqrt(d) * rho))
    return {"a": a_values, "rhs_max": [float(s.max()) for s in seq],
            "rhs_min": [float(s.min()) for s in seq], "monotone_decreasing": decreasing,
            "corollary_limit_sq_max": float(limit.max()),
            "above_limit": bool(np.all(seq[-1] ** 2 >= limit - 1e-12))}


def gradient_bound_energy2(field: MapField, potential: Potential, a: float, x0=None,
                           tol: float | None = None, A: float = 0.0) -> BoundCheck:
    """Bound on ``|dphi|`` for strictly positive, strongly concave potentials.

    ``C3`` is the probed minimum over the image of ``-2B - 2 mu_max / V``.
    The verdict uses the first branch ``16 r / (C3 (a**2 - r**2) V)``; the
    variant carrying an extra ``|grad V|`` factor is reported as
    ``rhs_gradV_reading`` alongside.
    """
    grid, chart = field.grid, field.chart
    n = grid.dim
    y = field.values
    tc = theorem_constants(potential, chart, points=y)
    x0, r, inside = _radial(grid, x0, a)
    hyp = {"flat_domain_A": A, "V_positive": tc["sign"] == "positive",
           "strong_concavity": tc["energy2_condition"], "nodes_in_ball": int(inside.sum())}
    consts = {"C3": tc["C3"], "C_L": 2 * n, "A": A, "a": a, "B": chart.curvature_bound}
    if not (hyp["V_positive"] and hyp["strong_concavity"]) or not inside.any():
        return _not_applicable("gradient_bound_energy2", hyp, consts)
    C3 = tc["C3"]
    J = jet(field)
    lhs = np.sqrt(J.dphi_sq)[inside]
    V = potential.value(chart, y)[inside]
    gnorm = chart.norm(y, potential.gradient(chart, y))[inside]
    ri = r[inside]
    w = a * a - ri * ri
    second = 2.0 / np.sqrt(C3) * np.sqrt(2 * A + 2 * (2 * n) * (1 + ri) / w + 16 * ri**2 / w**2)
    rhs = np.maximum(16 * ri / (C3 * w * V), second)
    rhs_alt = np.maximum(16 * ri * gnorm / (C3 * w * V), second)
    margin = rhs - lhs
    k = int(np.argmin(margin))
    converged = _is_converged(field, potential, tol)
    passed = bool(np.all(margin >= 0))
    limit = 2.0 * np.sqrt(2 * A) / np.sqrt(C3)
    return BoundCheck(
        "gradient_bound_energy2", hyp, True, float(lhs[k]), float(rhs[k]), float(margin[k]),
        passed, _verdict(passed, converged), consts,
        {"rhs_gradV_reading_min_margin": float(np.min(rhs_alt - lhs)),
         "rhs_gradV_reading_pass": bool(np.all(rhs_alt >= lhs)),
         "corollary_limit": float(limit), "sup_dphi": float(lhs.max()),
         "converged": converged})


def _is_converged(field, potential, tol):
    if tol is None:
        return True
    return residual(field, potential).sup <= tol


def liouville_integrals(field: MapField, potential: Potential,
                        slack: float | None = None) -> BoundCheck:
    """``int |dphi|**2`` against ``n/(n-2) int V(phi)`` on ``n >= 3`` domains.

    The whole-space finite-energy hypothesis is represented by a free outer
    boundary; Dirichlet or periodic grids are reported as not applicable.
    At a constant limit both sides vanish up to rounding, so the default
    ``slack`` is a roundoff floor: ``1e-9`` times the integrals of the
    absolute integrands plus ``1e-10`` times the domain volume.
    """
    grid, chart = field.grid, field.chart
    n = grid.dim
    hyp = {"dim_at_least_3": n >= 3, "free_boundary": grid.bc == "free"}
    J = jet(field)
    dsq_int = integrate(grid, J.dphi_sq)
    Vphi = potential.value(chart, field.values)
    V_int = integrate(grid, Vphi)
    if slack is None:
        scale = dsq_int + (n / (n - 2) if n >= 3 else 1.0) * integrate(grid, np.abs(Vphi))
        slack = 1e-9 * scale + 1e-10 * integrate(grid, np.ones(grid.size))
    extra = {"int_dphi_sq": dsq_int}
    if n < 3:
        return _not_applicable("liouville_integrals", hyp, **extra)
    rhs = n / (n - 2) * V_int
    extra.update(int_V=V_int, rhs=rhs)
    if not hyp["free_boundary"]:
        extra["inequality_holds"] = bool(dsq_int <= rhs + slack)
        return _not_applicable("liouville_integrals", hyp, **extra)
    passed = bool(dsq_int <= rhs + slack)
    return BoundCheck("liouville_integrals", hyp, True, dsq_int, rhs, rhs + slack - dsq_int,
                      passed, PASS if passed else FAIL, {"n": n, "slack": slack}, extra)


def liouville_flow_experiment(field: MapField, potential: Potential, tol: float,
                              max_steps: int, dt_safety: float = 0.2, log_every: int = 1000,
                              probe_radius: float | None = None, critical_tol: float | None = None):
    """Run the flow from ``field`` and test that it ends at a constant map.

    Hypotheses: flat domain, nonpositive target curvature, concave potential
    (probed over the initial image and the geodesic ball containing it),
    periodic boundary.  Returns ``(BoundCheck, FlowResult | None)``.
    """
    grid, chart = field.grid, field.chart
    rho0 = float(np.max(chart.distance(field.values)))
    if probe_radius is None:
        probe_radius = rho0
    tc = theorem_constants(potential, chart, probe_radius=probe_radius, points=field.values)
    hyp = {"flat_domain": True, "nonpositive_curvature": chart.curvature_bound <= 0,
           "concave_potential": tc["concave"], "periodic": grid.bc == "periodic"}
    if not all(hyp.values()):
        return _not_applicable("liouville_flow", hyp), None
    if max_steps < 0:
        raise ConfigError("max_steps must be nonnegative")
    result = flow.run_to_convergence(field, potential, tol, max_steps, dt_safety=dt_safety,
                                     log_every=log_every)
    final = result.field
    J = jet(final)
    sup_dphi = float(np.sqrt(np.max(J.dphi_sq)))
    limit = final.values.mean(axis=0)
    grad = float(chart.norm(limit, potential.gradient(chart, limit)))
    critical_tol = 10 * tol if critical_tol is None else critical_tol
    passed = bool(result.converged and sup_dphi <= 10 * tol)
    extra = {"limit_point": limit.tolist(), "limit_distance_from_center":
             float(chart.distance(limit)), "grad_V_at_limit": grad,
             "critical_point": bool(grad <= critical_tol), "steps": result.steps,
             "converged": result.converged, "final_residual": result.final_residual}
    status = PASS if passed else (FAIL if result.converged else UNCONVERGED)
    return BoundCheck("liouville_flow", hyp, True, sup_dphi, 10 * tol, 10 * tol - sup_dphi,
                      passed, status, {"tol": tol}, extra), result
