"""Geodesics coupled to a potential: ``nabla_{g'} g' = -grad V(g)``.

Curves on the target are integrated with the classical fourth-order
Runge-Kutta scheme on the first-order system ``(y, v)``.  The state update is
accumulated with compensated (Kahan) summation so that the energy drift of
long runs reflects the truncation error rather than rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from hmlab import kernels
from hmlab.errors import ConfigError
from hmlab.geometry import TargetChart
from hmlab.potentials import Potential


@dataclass(frozen=True)
class GeodesicState:
    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.position, dtype=float))
        v = np.atleast_1d(np.asarray(self.velocity, dtype=float))
        if y.shape != v.shape or y.ndim != 1:
            raise ConfigError("position and velocity must be vectors of equal length")
        object.__setattr__(self, "position", y)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "time", float(self.time))


def _rhs(chart: TargetChart, potential: Potential, y, v):
    f = chart.log_factor_gradient(y)
    # Gamma^c_ab v^a v^b for a conformally flat metric
    gamma_vv = 2.0 * np.dot(f, v) * v - np.dot(v, v) * f
    return -gamma_vv - potential.gradient(chart, y)


def acceleration(chart: TargetChart, potential: Potential, state: GeodesicState) -> np.ndarray:
    """``a^c = -Gamma^c_ab v^a v^b - (grad V)^c`` at the state's position."""
    chart.check(state.position)
    return _rhs(chart, potential, state.position, state.velocity)


def hamiltonian(chart: TargetChart, potential: Potential, y, v) -> np.ndarray:
    """``H = 1/2 g_y(v, v) + V(y)`` for one state or stacked states."""
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    return 0.5 * chart.inner(y, v, v) + potential.value(chart, y)


@dataclass
class Trajectory:
    """Sampled states of one integration run.

    ``times`` has shape ``(K,)``, ``positions`` and ``velocities`` ``(K, m)``
    and ``energy`` the conserved quantity ``H`` at each sample.
    ``truncated`` is set when the curve left the chart before ``t_end``.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    energy: np.ndarray
    truncated: bool = False
    message: str = dc_field(default="")

    @property
    def final(self) -> GeodesicState:
        return GeodesicState(self.positions[-1], self.velocities[-1], self.times[-1])

    def rows(self):
        """Header and rows of ``trajectory.csv``: ``t, y*, v*, H``."""
        m = self.positions.shape[1]
        header = ["t"] + [f"y{a}" for a in range(m)] + [f"v{a}" for a in range(m)] + ["H"]
        rows = [[t, *y, *v, H] for t, y, v, H in
                zip(self.times, self.positions, self.velocities, self.energy)]
        return header, rows


def integrate_trajectory(chart: TargetChart, potential: Potential, initial: GeodesicState,
                         dt: float, t_end: float, store_every: int = 1,
                         backend=None) -> Trajectory:
    """RK4 integration from ``initial.time`` to ``t_end`` with fixed step ``dt``.

    The final step is shortened to land on ``t_end`` exactly.  States are
    stored every ``store_every`` steps plus the last one.  A curve that
    leaves the chart ends early with ``truncated`` set.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if t_end < initial.time:
        raise ConfigError("t_end precedes the initial time")
    potential.check_chart(chart)
    m = chart.dim_m
    if initial.position.shape != (m,):
        raise ConfigError(f"initial state must have dimension {m}")
    chart.check(initial.position)
    store_every = max(1, int(store_every))

    backend = backend or kernels.backend
    t0 = initial.time
    nsteps = int(np.ceil((t_end - t0) / dt - 1e-12))
    last_dt = (t_end - t0) - (nsteps - 1) * dt if nsteps else dt
    code, c0, c1 = potential.kernel_params()
    S, done = backend.rk4_path(initial.position, initial.velocity, float(dt), nsteps,
                               float(last_dt), chart.sign, chart.curvature_scale,
                               code, c0, c1)
    times = t0 + dt * np.arange(done + 1, dtype=float)
    if done == nsteps and nsteps:
        times[-1] = t_end
    truncated = done < nsteps
    message = f"left the chart after t={times[-1]:.6g}" if truncated else ""
    keep = np.arange(0, done + 1, store_every)
    if keep[-1] != done:
        keep = np.append(keep, done)
    Y, Vel = S[keep, :m], S[keep, m:]
    H = hamiltonian(chart, potential, Y, Vel)
    return Trajectory(times[keep], Y, Vel, np.asarray(H, dtype=float), truncated, message)


@dataclass
class ConservationAudit:
    max_drift: float
    drift_curve: np.ndarray


def conservation_audit(trajectory: Trajectory) -> ConservationAudit:
    """``max_t |H(t) - H(0)|`` and the drift series."""
    H = np.asarray(trajectory.energy, dtype=float)
    if H.size == 0:
        raise ConfigError("empty trajectory")
    drift = H - H[0]
    return ConservationAudit(float(np.max(np.abs(drift))), drift)


def pendulum(dt: float = 1e-3, t_end: float = 10.0) -> Trajectory:
    """``u'' = sin u`` from ``u = pi/2`` at rest, i.e. ``V(u) = cos u``."""
    chart = TargetChart(1, "euclidean")
    pot = Potential("cosine_of_distance", (1.0, 1.0))
    return integrate_trajectory(chart, pot, GeodesicState([np.pi / 2], [0.0]), dt, t_end)
