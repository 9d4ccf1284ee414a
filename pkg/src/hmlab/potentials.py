"""Radially symmetric potentials on the built-in targets.

A potential is ``V(y) = v(rho(y))`` for a profile ``v`` of the distance from
the chart origin.  Value, metric gradient and covariant Hessian are all
evaluated in closed form from ``v``, ``v'`` and ``v''``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hmlab.errors import ConfigError
from hmlab.geometry import TargetChart

KINDS = ("zero", "quadratic_radial", "double_well_radial", "cosine_of_distance")

# Integer codes shared with the compiled flow kernel.
KIND_CODES = {"zero": 0, "quadratic_radial": 1, "double_well_radial": 2,
              "cosine_of_distance": 3}


@dataclass(frozen=True)
class Potential:
    """A scalar potential on a target chart.

    Coefficients per kind:

    ``zero``                 none
    ``quadratic_radial``     ``[c]``           ``V = c rho**2``
    ``double_well_radial``   none              ``V = -(1 - |y|**2)**2 / 4`` (flat targets)
    ``cosine_of_distance``   ``[c, k=1]``      ``V = c cos(k rho)``
    """

    kind: str = "zero"
    coefficients: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown potential kind {self.kind!r}")
        coeffs = tuple(float(c) for c in self.coefficients)
        if self.kind == "quadratic_radial" and len(coeffs) != 1:
            raise ConfigError("quadratic_radial takes exactly one coefficient [c]")
        if self.kind == "cosine_of_distance":
            if len(coeffs) == 1:
                coeffs = coeffs + (1.0,)
            if len(coeffs) != 2:
                raise ConfigError("cosine_of_distance takes coefficients [c] or [c, k]")
        if self.kind in ("zero", "double_well_radial") and coeffs:
            raise ConfigError(f"{self.kind} takes no coefficients")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    def kernel_params(self) -> tuple[int, float, float]:
        """``(kind_code, c0, c1)`` for the compiled flow kernel."""
        padded = tuple(self.coefficients) + (0.0, 0.0)
        return self.code, padded[0], padded[1]

    def check_chart(self, chart: TargetChart) -> None:
        if self.kind == "double_well_radial" and chart.sign != 0:
            raise ConfigError("double_well_radial is only defined on euclidean targets")

    # -- radial profile --------------------------------------------------
    def profile(self, rho):
        """Return ``(v, v'/rho, v'')`` evaluated at distance ``rho``.

        ``v'/rho`` is returned instead of ``v'`` because it stays finite at
        the origin for every built-in kind.
        """
        rho = np.asarray(rho, dtype=float)
        zero = np.zeros_like(rho)
        if self.kind == "zero":
            return zero, zero, zero
        if self.kind == "quadratic_radial":
            (c,) = self.coefficients
            return c * rho**2, zero + 2 * c, zero + 2 * c
        if self.kind == "double_well_radial":
            s = 1.0 - rho**2
            return -0.25 * s * s, s, 1.0 - 3.0 * rho**2
        c, k = self.coefficients
        # np.sinc(x) = sin(pi x) / (pi x)
        return (c * np.cos(k * rho),
                -c * k * k * np.sinc(k * rho / np.pi),
                -c * k * k * np.cos(k * rho))

    # -- evaluation ------------------------------------------------------
    def value(self, chart: TargetChart, y) -> np.ndarray:
        self.check_chart(chart)
        v, _, _ = self.profile(chart.distance(y))
        return v

    def differential(self, chart: TargetChart, y) -> np.ndarray:
        """Chart partials ``dV/dy^a``."""
        self.check_chart(chart)
        y = chart.check(y)
        t = np.sqrt(np.sum(y * y, axis=-1))
        ratio = chart.distance_ratio(t)
        _, q, _ = self.profile(t * ratio)
        lam = chart.conformal_factor(y)
        # dV/dy = v'(rho) * drho/dt * y/t = q * rho * lam * y / t
        return (q * ratio * lam)[..., None] * y

    def gradient(self, chart: TargetChart, y) -> np.ndarray:
        """Metric gradient ``g^{ab} dV/dy^b``."""
        lam = chart.conformal_factor(y)
        return self.differential(chart, y) / (lam**2)[..., None]

    def hessian(self, chart: TargetChart, y) -> np.ndarray:
        """Covariant Hessian ``d_b d_c V - Gamma^a_bc d_a V`` in chart components."""
        self.check_chart(chart)
        y = chart.check(y)
        m = chart.dim_m
        t = np.sqrt(np.sum(y * y, axis=-1))
        ratio = chart.distance_ratio(t)
        rho = t * ratio
        _, q, v2 = self.profile(rho)
        lam = chart.conformal_factor(y)
        k2 = chart.sign * chart.curvature_scale**2
        # V = w(t) with w' = v' lam, w'' = v'' lam**2 + v' dlam/dt,
        # dlam/dt = -k2 t lam**2
        w1_over_t = q * ratio * lam
        w2 = v2 * lam**2 - k2 * lam**2 * (q * rho) * t
        safe = np.where(t > 0, t, 1.0)
        yhat = np.where((t > 0)[..., None], y / safe[..., None], 0.0)
        outer = np.einsum("...a,...b->...ab", yhat, yhat)
        eye = np.eye(m)
        second = w2[..., None, None] * outer + w1_over_t[..., None, None] * (eye - outer)
        dV = w1_over_t[..., None] * y
        f = chart.log_factor_gradient(y)
        gamma_dV = (np.einsum("...c,...b->...bc", f, dV)
                    + np.einsum("...b,...c->...bc", f, dV)
                    - np.einsum("...a,...a->...", f, dV)[..., None, None] * eye)
        return second - gamma_dV

    def hessian_eigenvalues(self, chart: TargetChart, y) -> np.ndarray:
        """Eigenvalues of Hess V relative to the metric (ascending)."""
        lam = chart.conformal_factor(y)
        return np.linalg.eigvalsh(self.hessian(chart, y)) / (lam**2)[..., None]


def value(p: Potential, chart: TargetChart, y):
    return p.value(chart, y)


def metric_gradient(p: Potential, chart: TargetChart, y):
    return p.gradient(chart, y)


def covariant_hessian(p: Potential, chart: TargetChart, y):
    return p.hessian(chart, y)


def probe_points(chart: TargetChart, radius: float, count: int = 2000, seed: int = 0):
    """Deterministic sample of the closed geodesic ball ``B_radius(y0)``.

    Includes the center and points on the bounding sphere.
    """
    rng = np.random.default_rng(seed)
    m = chart.dim_m
    t_max = float(chart.chart_norm_of_distance(radius))
    if chart.sign < 0:
        t_max = min(t_max, (1.0 - 1e-12) / chart.curvature_scale)
    dirs = rng.normal(size=(count, m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = t_max * rng.random(count) ** (1.0 / m)
    radii[: count // 10] = t_max
    pts = dirs * radii[:, None]
    return np.vstack([np.zeros((1, m)), pts])


def theorem_constants(p: Potential, chart: TargetChart, probe_radius: float | None = None,
                      points=None) -> dict:
    """Hypothesis constants of the gradient estimates over a probe set.

    Either a geodesic ``probe_radius`` about the chart center or explicit chart
    ``points`` (for instance the image of a field) must be given; both may be.

    Returns a dict with

    ``A_V``
        ``max(0, largest Hess V eigenvalue)`` so that ``-Hess V >= -A_V`` on a
        flat domain.
    ``A_V_lower_reading``
        ``max(0, -smallest eigenvalue)``, the bound under the alternative
        reading ``Hess V >= -A_V``.
    ``concave``
        largest eigenvalue ``<= 0`` at every probe.
    ``sign``
        ``zero``, ``nonpositive``, ``positive`` or ``indefinite``.
    ``energy2_condition``
        ``V > 0`` and ``-Hess V - B V g`` positive definite at every probe.
    ``C3``
        ``min(-2B - 2 mu_max / V)`` over the probes when ``V > 0``, else nan.
    """
    sets = []
    if probe_radius is not None:
        sets.append(probe_points(chart, probe_radius))
    if points is not None:
        sets.append(np.asarray(points, dtype=float).reshape(-1, chart.dim_m))
    if not sets:
        raise ConfigError("theorem_constants needs a probe radius or probe points")
    pts = np.vstack(sets)
    vals = p.value(chart, pts)
    eig = p.hessian_eigenvalues(chart, pts)
    mu_max, mu_min = eig[:, -1], eig[:, 0]
    B = chart.curvature_bound
    if np.all(vals == 0):
        sign = "zero"
    elif np.all(vals <= 0):
        sign = "nonpositive"
    elif np.all(vals > 0):
        sign = "positive"
    else:
        sign = "indefinite"
    positive = bool(np.all(vals > 0))
    energy2 = positive and bool(np.all(-mu_max - B * vals > 0))
    c3 = float(np.min(-2 * B - 2 * mu_max / vals)) if positive else float("nan")
    return {
        "A_V": float(max(0.0, np.max(mu_max))),
        "A_V_lower_reading": float(max(0.0, -np.min(mu_min))),
        "max_hessian_eigenvalue": float(np.max(mu_max)),
        "concave": bool(np.all(mu_max <= 0)),
        "sign": sign,
        "energy2_condition": energy2,
        "C3": c3,
        "probe_count": int(len(pts)),
    }
