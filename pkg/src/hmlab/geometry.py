"""Constant-curvature target manifolds in a single conformal chart.

Every built-in target carries a metric of the form ``g = lam(y)**2 * I`` with

* euclidean:  ``lam = 1``
* sphere:     ``lam = 2 / (1 + k**2 |y|**2)``   (stereographic, curvature ``+k**2``)
* hyperbolic: ``lam = 2 / (1 - k**2 |y|**2)``   (Poincare ball, curvature ``-k**2``)

so the connection, the curvature bound and the distance from the chart origin
are all available in closed form.  All functions accept a single point of
shape ``(m,)`` or a stack of points of shape ``(..., m)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hmlab.errors import ChartDomainError, ConfigError, OutOfCapError

KINDS = ("euclidean", "sphere_stereographic", "hyperbolic_poincare")

_ALIASES = {
    "euclidean": "euclidean",
    "flat": "euclidean",
    "sphere": "sphere_stereographic",
    "sphere_stereographic": "sphere_stereographic",
    "hyperbolic": "hyperbolic_poincare",
    "hyperbolic_poincare": "hyperbolic_poincare",
}

_SIGN = {"euclidean": 0, "sphere_stereographic": 1, "hyperbolic_poincare": -1}


def _atan_ratio(x):
    """``atan(x) / x`` with the removable singularity at 0 filled in."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0.0, 1.0, x)
    return np.where(np.abs(x) < 1e-8, 1.0 - x * x / 3.0, np.arctan(safe) / safe)


def _atanh_ratio(x):
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0.0, 1.0, x)
    with np.errstate(divide="ignore"):
        return np.where(np.abs(x) < 1e-8, 1.0 + x * x / 3.0, np.arctanh(safe) / safe)


@dataclass(frozen=True)
class TargetChart:
    """A chart-parametrized constant-curvature Riemannian target.

    Parameters
    ----------
    dim_m : int
        Target dimension.
    geometry_kind : str
        ``euclidean``, ``sphere_stereographic`` or ``hyperbolic_poincare``
        (the short forms ``sphere`` and ``hyperbolic`` are accepted).
    curvature_scale : float
        ``k > 0``; sectional curvature is ``+k**2``, ``0`` or ``-k**2``.
    """

    dim_m: int
    geometry_kind: str = "euclidean"
    curvature_scale: float = 1.0

    def __post_init__(self):
        kind = _ALIASES.get(str(self.geometry_kind))
        if kind is None:
            raise ConfigError(f"unknown target kind {self.geometry_kind!r}")
        object.__setattr__(self, "geometry_kind", kind)
        if int(self.dim_m) < 1:
            raise ConfigError("target dimension must be positive")
        object.__setattr__(self, "dim_m", int(self.dim_m))
        if not self.curvature_scale > 0:
            raise ConfigError("curvature_scale must be positive")
        object.__setattr__(self, "curvature_scale", float(self.curvature_scale))

    # -- constants -----------------------------------------------------
    @property
    def sign(self) -> int:
        """+1 for the sphere, -1 for hyperbolic space, 0 for flat space."""
        return _SIGN[self.geometry_kind]

    @property
    def curvature_bound(self) -> float:
        """The exact sectional curvature, used as the upper bound ``B``."""
        return self.sign * self.curvature_scale**2

    @property
    def center(self) -> np.ndarray:
        """Reference point ``y0`` of the distance function (the chart origin)."""
        return np.zeros(self.dim_m)

    @property
    def chart_radius(self) -> float:
        """Euclidean radius of the validity region in chart coordinates."""
        if self.sign < 0:
            return 1.0 / self.curvature_scale
        return np.inf

    # -- validation ----------------------------------------------------
    def check(self, y) -> np.ndarray:
        """Return ``y`` as a float array, raising if any point is invalid."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1:] != (self.dim_m,):
            raise ConfigError(
                f"chart point has trailing dimension {y.shape[-1:]} != ({self.dim_m},)")
        bad = ~np.all(np.isfinite(y), axis=-1)
        if self.sign < 0:
            k2 = self.curvature_scale**2
            bad |= k2 * np.sum(y * y, axis=-1) >= 1.0
        if np.any(bad):
            index = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.ndim else None
            raise ChartDomainError(
                f"point outside the {self.geometry_kind} chart (first offender {index})",
                index=index)
        return y

    # -- metric and connection -----------------------------------------
    def conformal_factor(self, y) -> np.ndarray:
        """``lam(y)`` such that ``g(y) = lam**2 I``."""
        y = self.check(y)
        if self.sign == 0:
            return np.ones(y.shape[:-1])
        t2 = np.sum(y * y, axis=-1)
        return 2.0 / (1.0 + self.sign * self.curvature_scale**2 * t2)

    def log_factor_gradient(self, y) -> np.ndarray:
        """Chart gradient of ``log lam``: ``-sign k**2 lam y``."""
        y = self.check(y)
        if self.sign == 0:
            return np.zeros_like(y)
        lam = self.conformal_factor(y)
        return -self.sign * self.curvature_scale**2 * lam[..., None] * y

    def metric(self, y) -> np.ndarray:
        lam = self.conformal_factor(y)
        return (lam**2)[..., None, None] * np.eye(self.dim_m)

    def christoffel(self, y) -> np.ndarray:
        """``Gamma[..., a, b, c]`` from the closed-form conformal factor.

        For ``g = exp(2f) I``:  ``Gamma^a_bc = d_ab f_c + d_ac f_b - d_bc f_a``.
        """
        f = self.log_factor_gradient(y)
        eye = np.eye(self.dim_m)
        return (np.einsum("ab,...c->...abc", eye, f)
                + np.einsum("ac,...b->...abc", eye, f)
                - np.einsum("bc,...a->...abc", eye, f))

    # -- distance ------------------------------------------------------
    def distance(self, y) -> np.ndarray:
        """Geodesic distance ``rho(y0, y)`` from the chart origin."""
        y = self.check(y)
        t = np.sqrt(np.sum(y * y, axis=-1))
        return t * self.distance_ratio(t)

    def distance_ratio(self, t) -> np.ndarray:
        """``rho / |y|`` as a function of ``t = |y|`` (finite at 0)."""
        t = np.asarray(t, dtype=float)
        k = self.curvature_scale
        if self.sign == 0:
            return np.ones_like(t)
        if self.sign > 0:
            return 2.0 * _atan_ratio(k * t)
        return 2.0 * _atanh_ratio(k * t)

    def chart_norm_of_distance(self, rho) -> np.ndarray:
        """Inverse of the radial distance: chart radius ``|y|`` at distance ``rho``."""
        rho = np.asarray(rho, dtype=float)
        k = self.curvature_scale
        if self.sign == 0:
            return rho
        if self.sign > 0:
            return np.tan(k * rho / 2.0) / k
        return np.tanh(k * rho / 2.0) / k

    def xi(self, y, d: float) -> np.ndarray:
        """``sqrt(d) cos(sqrt(d) rho(y))``; raises outside the open cap."""
        if not d > 0:
            raise ConfigError("d must be positive")
        rho = self.distance(y)
        arg = np.sqrt(d) * rho
        if np.any(arg >= np.pi / 2):
            raise OutOfCapError(
                f"sqrt(d)*rho = {np.max(arg):.6g} >= pi/2: xi is not positive")
        return np.sqrt(d) * np.cos(arg)

    def norm(self, y, v) -> np.ndarray:
        """Length of the tangent vector ``v`` at ``y``."""
        lam = self.conformal_factor(y)
        return lam * np.sqrt(np.sum(np.asarray(v) ** 2, axis=-1))

    def inner(self, y, u, v) -> np.ndarray:
        lam = self.conformal_factor(y)
        return lam**2 * np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    # -- embedding helpers (sphere only) --------------------------------
    def to_sphere(self, y) -> np.ndarray:
        """Inverse stereographic projection onto the sphere of radius ``1/k``."""
        if self.sign <= 0:
            raise ConfigError("to_sphere requires a sphere chart")
        y = self.check(y)
        k = self.curvature_scale
        t2 = np.sum(y * y, axis=-1, keepdims=True) * k * k
        head = 2.0 * y / (1.0 + t2)
        tail = (t2 - 1.0) / (1.0 + t2) / k
        return np.concatenate([head, tail], axis=-1)

    def from_sphere(self, X) -> np.ndarray:
        if self.sign <= 0:
            raise ConfigError("from_sphere requires a sphere chart")
        X = np.asarray(X, dtype=float)
        k = self.curvature_scale
        return X[..., :-1] / (1.0 - k * X[..., -1:])


def make_chart(kind: str, dim: int, curvature_scale: float = 1.0) -> TargetChart:
    return TargetChart(dim_m=dim, geometry_kind=kind, curvature_scale=curvature_scale)


def metric_at(chart: TargetChart, y) -> np.ndarray:
    return chart.metric(y)


def christoffel_at(chart: TargetChart, y) -> np.ndarray:
    return chart.christoffel(y)


def distance_from_center(chart: TargetChart, y) -> np.ndarray:
    return chart.distance(y)


def xi_function(chart: TargetChart, y, d: float) -> np.ndarray:
    return chart.xi(y, d)
