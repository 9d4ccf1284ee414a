"""Monotonicity of scaled ball energies and the underlying flux identity."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from math import gamma, pi

import numpy as np

from hmlab.diagnostics.local import jet
from hmlab.errors import GridRangeError
from hmlab.fields import MapField, _default_center, integrate, surface_integrate
from hmlab.potentials import Potential

COLUMNS = ("r", "M", "dM_dr", "identity_lhs", "identity_rhs", "identity_scale",
           "improved_lhs", "improved_rhs")


def ball_volume(n: int, r: float) -> float:
    return pi ** (n / 2) / gamma(n / 2 + 1) * r**n


def calibrate_quadrature(grid, radii, center=None) -> float:
    """Largest relative error of ``integrate(1, B_r)`` against ``|B_r|``.

    Balls meeting the inner hole of an annulus or leaving the grid are skipped.
    """
    if center is None:
        center = _default_center(grid)
    worst = 0.0
    for r in radii:
        if not grid.region.contains_ball(center, r):
            continue
        exact = ball_volume(grid.dim, r)
        if grid.region.kind == "annulus":
            exact -= ball_volume(grid.dim, min(r, grid.region.inner))
        if exact <= 0:
            continue
        got = integrate(grid, np.ones(grid.size), center, r)
        worst = max(worst, abs(got - exact) / exact)
    return worst


@dataclass
class MonotonicityTable:
    rows: list
    center: list
    epsilon_quad: float
    calibration_error: float
    inner_radius: float | None
    improved_constant: float | None
    skipped: list = dc_field(default_factory=list)

    def column(self, name):
        k = COLUMNS.index(name)
        return np.array([row[k] for row in self.rows], dtype=float)

    def monotone(self) -> bool:
        """``dM/dr >= -epsilon_quad`` at every valid row."""
        d = self.column("dM_dr")
        return bool(np.all(d[np.isfinite(d)] >= -self.epsilon_quad))

    def identity_gaps(self) -> np.ndarray:
        """``|lhs - rhs|`` relative to the largest of ``|lhs|``, ``|rhs|`` and
        ``identity_scale`` (the flux computed with absolute values)."""
        lhs, rhs = self.column("identity_lhs"), self.column("identity_rhs")
        scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), self.column("identity_scale"))
        return np.abs(lhs - rhs) / np.maximum(scale, 1e-300)

    def improved_violations(self) -> int:
        lhs, rhs = self.column("improved_lhs"), self.column("improved_rhs")
        ok = np.isfinite(lhs) & np.isfinite(rhs)
        return int(np.sum(lhs[ok] < rhs[ok]))

    def to_dict(self):
        return {"columns": list(COLUMNS), "rows": self.rows, "center": self.center,
                "epsilon_quad": self.epsilon_quad, "calibration_error": self.calibration_error,
                "inner_radius": self.inner_radius, "improved_constant": self.improved_constant,
                "skipped": self.skipped}


def monotonicity_table(field: MapField, potential: Potential, radii, center=None,
                       improved=None, n_ang=None) -> MonotonicityTable:
    """Scaled energies ``M(r) = r**(2-n) int_{B_r} (1/2|dphi|**2 - V)`` and the flux identity.

    Parameters
    ----------
    radii : sequence of float
        Increasing radii.  Radii whose ball leaves the grid are skipped and
        listed in ``skipped``.
    improved : dict, optional
        ``{"d": d, "A_V": A, "constant": C}`` to evaluate the weighted bound
        ``d/dr r**-n E(r) >= -C r**(-n-1) int (A + sqrt(d)|grad V|/cos(sqrt(d) rho))``.

    Notes
    -----
    On an annulus the balls are replaced by shells ``r_in' <= |x| <= r`` with
    ``r_in' = inner + 3h``.  The flux through the inner sphere is then added
    to ``identity_rhs`` so both sides remain comparable.
    """
    grid, chart = field.grid, field.chart
    n, h = grid.dim, grid.h
    if center is None:
        center = _default_center(grid)
    center = np.asarray(center, dtype=float)
    radii = [float(r) for r in radii]
    J = jet(field)
    y = field.values
    Vphi = potential.value(chart, y)
    eV = 0.5 * J.dphi_sq - Vphi
    rel = grid.coords - center
    dist = np.linalg.norm(rel, axis=1)
    xhat = np.where(dist[:, None] > 0, rel / np.where(dist > 0, dist, 1.0)[:, None], 0.0)
    dr = np.einsum("ni,nia->na", xhat, J.dphi)
    dr_sq = J.lam**2 * np.sum(dr * dr, axis=1)
    flux_density = eV - dr_sq
    flux_scale = np.abs(eV) + dr_sq

    r_in = None
    if grid.region.kind == "annulus":
        r_in = grid.region.inner + 3 * h

    weight = None
    if improved is not None:
        d = float(improved["d"])
        rho = chart.distance(y)
        cosv = np.cos(np.sqrt(d) * rho)
        gnorm = chart.norm(y, potential.gradient(chart, y))
        weight = float(improved["A_V"]) + np.sqrt(d) * gnorm / cosv

    def vol(q, r):
        total = integrate(grid, q, center, r)
        if r_in is not None:
            total -= integrate(grid, q, center, r_in)
        return total

    valid, skipped = [], []
    for r in radii:
        if not grid.region.contains_ball(center, r) or (r_in is not None and r <= r_in):
            skipped.append(r)
        else:
            valid.append(r)
    rows = []
    E_vals, M_vals = [], []
    for r in valid:
        E = vol(eV, r)
        E_vals.append(E)
        M_vals.append(r ** (2 - n) * E)
        lhs = r * surface_integrate(grid, flux_density, r, center, n_ang)
        rhs = (n - 2) * E - 2.0 * vol(Vphi, r)
        if r_in is not None:
            rhs += r_in * surface_integrate(grid, flux_density, r_in, center, n_ang)
        scale = r * surface_integrate(grid, flux_scale, r, center, n_ang)
        rows.append([r, M_vals[-1], np.nan, lhs, rhs, scale, np.nan, np.nan])
    if len(valid) >= 2:
        rr = np.array(valid)
        dM = np.gradient(np.array(M_vals), rr)
        scaled = np.array(E_vals) * rr ** (-n)
        dS = np.gradient(scaled, rr)
        for k, row in enumerate(rows):
            row[2] = float(dM[k])
            if weight is not None:
                row[6] = float(dS[k])
                row[7] = float(-improved["constant"] * rr[k] ** (-n - 1) * vol(weight, rr[k]))
    calib = calibrate_quadrature(grid, valid, center)
    if len(valid) >= 2:
        min_gap = float(np.min(np.diff(valid)))
        eps = 5.0 * calib * float(np.max(np.abs(M_vals))) / min_gap
    else:
        eps = 0.0
    return MonotonicityTable(rows, center.tolist(), eps, calib, r_in,
                             None if improved is None else float(improved["constant"]), skipped)


def energy_in_ball(field: MapField, potential: Potential, r: float, center=None) -> float:
    """``int_{B_r} (1/2 |dphi|**2 - V(phi))``."""
    J = jet(field)
    eV = 0.5 * J.dphi_sq - potential.value(field.chart, field.values)
    if not field.grid.region.contains_ball(
            _default_center(field.grid) if center is None else center, r):
        raise GridRangeError(f"ball of radius {r} leaves the grid")
    return integrate(field.grid, eV, center, r)
