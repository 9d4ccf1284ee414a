"""Explicit gradient flow ``d phi/dt = tau(phi) + grad V(phi)``.

This is the negative L2 gradient flow of ``E(phi) = int 1/2|dphi|^2 - V(phi)``.
Updates are done in chart coordinates by the kernels in :mod:`hmlab.kernels`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from hmlab import kernels
from hmlab.errors import ChartDomainError, ConfigError, StabilityError
from hmlab.fields import MapField, differential, energy_density, integrate, residual
from hmlab.potentials import Potential

log = logging.getLogger(__name__)


def energy(field: MapField, potential: Potential) -> float:
    """``E(phi)`` by midpoint quadrature over the whole region."""
    return _energy_and_scale(field, potential)[0]


def _energy_and_scale(field, potential):
    e = energy_density(field)
    V = potential.value(field.chart, field.values)
    return integrate(field.grid, e - V), integrate(field.grid, e + np.abs(V))


# Relative floor of the energy audit.  The audited energy uses one-sided
# boundary differences and cut-cell weights, so it is not exactly the discrete
# Lyapunov function of the stencil; near convergence the mismatch dominates.
AUDIT_FLOOR = 1e-9


def lipschitz_factor(field: MapField, potential: Potential) -> float:
    """Heuristic factor ``Lambda >= 1`` for the lower-order part of the update.

    The diffusive part alone is stable for ``dt <= h**2 / (2n)``.  ``Lambda``
    inflates that bound by the local Lipschitz constants of ``grad V`` (by
    central differences in the chart) and of the connection term, relative to
    the diffusive stiffness ``4n / h**2``.
    """
    grid, chart = field.grid, field.chart
    y = field.values[grid.active]
    if len(y) == 0:
        return 1.0
    n, h = grid.dim, grid.h
    lip_v = np.zeros(len(y))
    if potential.kind != "zero":
        eps = 1e-6
        jac = np.zeros((len(y), chart.dim_m, chart.dim_m))
        for b in range(chart.dim_m):
            shift = np.zeros(chart.dim_m)
            shift[b] = eps
            lo, hi = y - shift, y + shift
            if chart.sign < 0:
                lim = (1.0 - 1e-9) / chart.curvature_scale
                lo = _clip_norm(lo, lim)
                hi = _clip_norm(hi, lim)
            jac[:, :, b] = (potential.gradient(chart, hi) - potential.gradient(chart, lo)) / (
                2 * shift[b])
        lip_v = np.linalg.norm(jac, ord=2, axis=(1, 2))
    dphi = differential(field)[grid.active]
    slope = np.max(np.abs(dphi), axis=1).max(axis=1) if dphi.size else np.zeros(len(y))
    fnorm = np.linalg.norm(chart.log_factor_gradient(y), axis=1)
    lip_gamma = 3.0 * fnorm * slope * (2 * n / h)
    lip = float(np.max(lip_v + lip_gamma))
    return 1.0 + h * h * lip / (4 * n)


def _clip_norm(y, lim):
    r = np.linalg.norm(y, axis=1, keepdims=True)
    return np.where(r > lim, y * lim / np.maximum(r, 1e-300), y)


def stability_limit(field: MapField, potential: Potential) -> float:
    """Largest admissible explicit step ``h**2 / (2 n Lambda)``."""
    h, n = field.grid.h, field.grid.dim
    return h * h / (2 * n * lipschitz_factor(field, potential))


def stable_dt(field: MapField, potential: Potential, safety: float = 0.2) -> float:
    if not 0 < safety <= 1:
        raise ConfigError("dt_safety must lie in (0, 1]")
    return safety * stability_limit(field, potential)


def _kernel_args(field, potential):
    potential.check_chart(field.chart)
    chart = field.chart
    act, nbr = field.grid.flow_stencil()
    code, c0, c1 = potential.kernel_params()
    return act, nbr, (chart.sign, chart.curvature_scale, code, c0, c1)


def advance(field: MapField, potential: Potential, dt: float, nsteps: int,
            backend=None) -> MapField:
    """Run ``nsteps`` explicit steps without any checks beyond chart validity."""
    backend = backend or kernels.backend
    act, nbr, params = _kernel_args(field, potential)
    values, done, bad = backend.flow_steps(field.values, act, nbr, field.grid.h, dt,
                                           int(nsteps), *params)
    if bad >= 0:
        x = field.grid.coords[bad].tolist()
        raise ChartDomainError(f"flow left the chart at node {bad} (x={x}) after "
                               f"{done} steps", index=int(bad))
    return field.with_values(values)


def step(field: MapField, potential: Potential, dt: float, backend=None) -> MapField:
    """One explicit Euler step; Dirichlet nodes are left untouched."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    limit = stability_limit(field, potential)
    if dt > limit * (1 + 1e-12):
        raise ConfigError(f"dt={dt:.3g} exceeds the stability limit {limit:.3g}")
    return advance(field, potential, dt, 1, backend=backend)


@dataclass
class FlowResult:
    field: MapField
    converged: bool
    steps: int
    dt: float
    history: list = dc_field(default_factory=list)

    @property
    def final_residual(self) -> float:
        return self.history[-1][2] if self.history else float("nan")


def run_to_convergence(field: MapField, potential: Potential, tol: float,
                       max_steps: int, dt: float | None = None, dt_safety: float = 0.2,
                       log_every: int = 100, backend=None) -> FlowResult:
    """Iterate the flow until the metric residual sup-norm is at most ``tol``.

    ``history`` rows are ``(step, energy, residual_sup, residual_l2)``, one
    per logging interval.  The energy is audited once per interval: an
    increase larger than ``steps * 10 dt sup|R|**2`` plus ``AUDIT_FLOOR``
    times the energy scale, while the residual sup-norm failed to decrease,
    aborts with :class:`StabilityError`.  An unstable explicit step amplifies
    the residual; a small rise with a decaying residual is the mismatch
    between the audited quadrature and the stencil's own energy.  When ``dt``
    is not given it is recomputed from the current field every interval.
    """
    if not tol > 0:
        raise ConfigError("tol must be positive")
    if max_steps < 0:
        raise ConfigError("max_steps must be nonnegative")
    log_every = max(1, int(log_every))
    res = residual(field, potential)
    E, scale = _energy_and_scale(field, potential)
    history = [(0, E, res.sup, res.l2)]
    steps = 0
    fixed_dt = dt
    if fixed_dt is not None:
        limit = stability_limit(field, potential)
        if fixed_dt > limit:
            raise ConfigError(f"dt={fixed_dt:.3g} exceeds the stability limit {limit:.3g}")
    current_dt = fixed_dt if fixed_dt is not None else (
        stable_dt(field, potential, dt_safety) if res.sup > tol else 0.0)
    while res.sup > tol and steps < max_steps:
        if fixed_dt is None:
            current_dt = stable_dt(field, potential, dt_safety)
        chunk = min(log_every, max_steps - steps)
        new = advance(field, potential, current_dt, chunk, backend=backend)
        new_res = residual(new, potential)
        new_E, new_scale = _energy_and_scale(new, potential)
        allowed = chunk * 10.0 * current_dt * res.sup**2 + AUDIT_FLOOR * max(scale, new_scale)
        if not np.isfinite(new_E) or not np.isfinite(new_res.sup):
            raise StabilityError(f"non-finite state after step {steps + chunk}")
        if new_E - E > allowed and new_res.sup >= res.sup:
            raise StabilityError(
                f"energy increased by {new_E - E:.3e} (allowed {allowed:.3e}) "
                f"between steps {steps} and {steps + chunk}")
        steps += chunk
        field, res, E, scale = new, new_res, new_E, new_scale
        history.append((steps, E, res.sup, res.l2))
        if steps % (100 * log_every) == 0:
            log.info("step %d  E=%.12g  |R|=%.3e", steps, E, res.sup)
    return FlowResult(field, bool(res.sup <= tol), steps, float(current_dt), history)
