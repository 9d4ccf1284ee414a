"""Pointwise identities evaluated on a discretized map.

All quantities use second-order central differences.  First derivatives come
from :attr:`DomainGrid.derivative_ops` (one-sided next to the boundary);
everything involving second derivatives of derived quantities is only
evaluated on ``deep`` nodes, whose whole two-ring stencil is central.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hmlab.fields import MapField, differential
from hmlab.potentials import Potential


def _norms(values, grid, mask):
    """``(sup, l2)`` of a node quantity restricted to ``mask``."""
    v = np.abs(np.asarray(values, dtype=float))
    if not np.any(mask):
        return 0.0, 0.0
    return float(np.max(v[mask])), float(np.sqrt(np.sum(grid.weights[mask] * v[mask] ** 2)))


def _gamma(f, u, w):
    """``Gamma^a_bc u^b w^c`` for a conformally flat metric, row-wise."""
    fu = np.sum(f * u, axis=-1, keepdims=True)
    fw = np.sum(f * w, axis=-1, keepdims=True)
    uw = np.sum(u * w, axis=-1, keepdims=True)
    return fu * w + fw * u - uw * f


def _laplacian(grid, q):
    """3-point-per-axis Laplacian of a node quantity; valid on central nodes."""
    q = np.asarray(q, dtype=float)
    nbr = np.where(grid.nbr >= 0, grid.nbr, np.arange(grid.size)[:, None, None])
    out = -2.0 * grid.dim * q
    for axis in range(grid.dim):
        out = out + q[nbr[:, axis, 0]] + q[nbr[:, axis, 1]]
    return out / grid.h**2


def _grad(grid, q):
    """Chart-free gradient ``(N, n, ...)`` of a node quantity."""
    return np.stack([op @ q for op in grid.derivative_ops], axis=1)


@dataclass
class Jet:
    """First and second derivatives of a field plus metric data per node."""

    dphi: np.ndarray       # (N, n, m)
    hess: np.ndarray       # (N, n, n, m), valid on deep nodes
    lam: np.ndarray        # (N,)
    f: np.ndarray          # (N, m), gradient of log lam
    gram: np.ndarray       # (N, n, n), g(d_i phi, d_j phi)

    @property
    def dphi_sq(self) -> np.ndarray:
        return np.trace(self.gram, axis1=1, axis2=2)


def jet(field: MapField) -> Jet:
    grid, chart = field.grid, field.chart
    y = field.values
    dphi = differential(field)
    n = grid.dim
    hess = np.zeros((grid.size, n, n, chart.dim_m))
    nbr = np.where(grid.nbr >= 0, grid.nbr, np.arange(grid.size)[:, None, None])
    for i in range(n):
        hess[:, i, i] = (y[nbr[:, i, 1]] + y[nbr[:, i, 0]] - 2.0 * y) / grid.h**2
        for j in range(i + 1, n):
            mixed = grid.derivative_ops[j] @ dphi[:, i, :]
            hess[:, i, j] = mixed
            hess[:, j, i] = mixed
    lam = chart.conformal_factor(y)
    f = chart.log_factor_gradient(y)
    gram = lam[:, None, None] ** 2 * np.einsum("nia,nja->nij", dphi, dphi)
    return Jet(dphi, hess, lam, f, gram)


# -- P-function ------------------------------------------------------------

@dataclass
class PFunction:
    values: np.ndarray
    min: float
    max: float
    modica_applicable: bool
    modica_slack: float
    modica_holds: bool | None

    def to_dict(self):
        return {"min": self.min, "max": self.max, "modica_applicable": self.modica_applicable,
                "modica_slack": self.modica_slack, "modica_holds": self.modica_holds,
                "max_sign": "positive" if self.max > 0 else "nonpositive"}


def p_function(field: MapField, potential: Potential, slack: float = 1e-4) -> PFunction:
    """``P = 1/2 |dphi|**2 + V(phi)`` per node.

    For scalar targets the Modica regime ``max P <= slack`` is also checked;
    for vector targets only the sign of ``max P`` is meaningful.
    """
    J = jet(field)
    P = 0.5 * J.dphi_sq + potential.value(field.chart, field.values)
    scalar = field.chart.dim_m == 1
    pmax = float(np.max(P))
    holds = bool(pmax <= slack) if scalar else None
    return PFunction(P, float(np.min(P)), pmax, scalar, float(slack), holds)


# -- Bochner formula -------------------------------------------------------

@dataclass
class Bochner:
    residual: np.ndarray
    sup: float
    l2: float
    nodes: int
    skipped: int
    terms: dict

    def to_dict(self):
        return {"sup": self.sup, "l2": self.l2, "nodes": self.nodes, "skipped": self.skipped,
                "terms_sup": {k: float(np.max(np.abs(v))) if v.size else 0.0
                              for k, v in self.terms.items()}}


def _discrete_tension(J: Jet) -> np.ndarray:
    """``tau`` from the central jet; valid on central nodes."""
    tau = np.einsum("niia->na", J.hess)
    for i in range(J.dphi.shape[1]):
        d = J.dphi[:, i]
        tau = tau + _gamma(J.f, d, d)
    return tau


def bochner_terms(field: MapField, J: Jet | None = None) -> dict:
    """Every term of the Bochner formula on a flat domain, per node.

    Keys: ``lap_e`` (``Delta 1/2 |dphi|**2``), ``hess_sq`` (``|nabla dphi|**2``),
    ``curvature`` (``<R(dphi_i, dphi_j) dphi_i, dphi_j>``, sectional-curvature
    sign convention), ``tau_term`` (``<nabla tau, dphi>``).
    """
    grid, chart = field.grid, field.chart
    J = J or jet(field)
    n = grid.dim
    e = 0.5 * J.dphi_sq
    lap_e = _laplacian(grid, e)
    lam2 = J.lam**2
    hess_sq = np.zeros(grid.size)
    for i in range(n):
        for j in range(n):
            cov = J.hess[:, i, j] + _gamma(J.f, J.dphi[:, i], J.dphi[:, j])
            hess_sq += lam2 * np.sum(cov * cov, axis=1)
    dsq = J.dphi_sq
    curvature = chart.curvature_bound * (dsq**2 - np.sum(J.gram**2, axis=(1, 2)))
    tau = _discrete_tension(J)
    dtau = _grad(grid, tau)
    tau_term = np.zeros(grid.size)
    for i in range(n):
        cov = dtau[:, i] + _gamma(J.f, J.dphi[:, i], tau)
        tau_term += lam2 * np.sum(cov * J.dphi[:, i], axis=1)
    return {"lap_e": lap_e, "hess_sq": hess_sq, "curvature": curvature, "tau_term": tau_term}


def bochner_residual(field: MapField, potential: Potential | None = None) -> Bochner:
    """``Delta e - (|nabla dphi|**2 - <R dphi, dphi> + <nabla tau, dphi>)`` on deep nodes.

    The identity holds for every smooth map, so the residual measures the
    discretization error alone.  Nodes without a full two-ring stencil are
    skipped and counted.  ``potential`` is accepted for interface symmetry;
    ``tau`` is taken from the field itself.
    """
    grid = field.grid
    terms = bochner_terms(field)
    res = terms["lap_e"] - (terms["hess_sq"] - terms["curvature"] + terms["tau_term"])
    mask = grid.deep
    res = np.where(mask, res, 0.0)
    sup, l2 = _norms(res, grid, mask)
    return Bochner(res, sup, l2, int(mask.sum()), int(grid.size - mask.sum()),
                   {k: v[mask] for k, v in terms.items()})


def kato_check(field: MapField, tol: float = 1e-12) -> dict:
    """``|nabla dphi| >= |nabla |dphi||`` on deep nodes with ``|dphi| > 0``."""
    grid = field.grid
    J = jet(field)
    n = grid.dim
    lam2 = J.lam**2
    hess_norm = np.zeros(grid.size)
    for i in range(n):
        for j in range(n):
            cov = J.hess[:, i, j] + _gamma(J.f, J.dphi[:, i], J.dphi[:, j])
            hess_norm += lam2 * np.sum(cov * cov, axis=1)
    hess_norm = np.sqrt(hess_norm)
    norm = np.sqrt(J.dphi_sq)
    grad_norm = np.linalg.norm(_grad(grid, norm), axis=1)
    use = grid.deep & (norm > tol)
    gap = hess_norm[use] - grad_norm[use]
    return {"nodes": int(use.sum()), "excluded_zero_dphi": int((grid.deep & ~(norm > tol)).sum()),
            "min_gap": float(np.min(gap)) if gap.size else 0.0,
            "violations": int(np.sum(gap < -1e-8 * np.maximum(1.0, hess_norm[use])))}


def bochner_p_lemma(field: MapField, potential: Potential) -> dict:
    """Margins of the lower bound for ``Delta P`` on a flat domain.

    Two readings of the mixed term are evaluated: ``printed`` divides
    ``<nabla P, nabla V(phi)>`` by ``|dphi|``, ``squared`` by ``|dphi|**2``
    (the form produced by expanding Kato's inequality).  Logged only.
    """
    grid, chart = field.grid, field.chart
    J = jet(field)
    y = field.values
    Vphi = potential.value(chart, y)
    P = 0.5 * J.dphi_sq + Vphi
    lapP = _laplacian(grid, P)
    gP = _grad(grid, P)
    gV = _grad(grid, Vphi)
    grad_sq = np.sum(potential.gradient(chart, y) ** 2, axis=1) * J.lam**2
    dsq = J.dphi_sq
    curvature = chart.curvature_bound * (dsq**2 - np.sum(J.gram**2, axis=(1, 2)))
    use = grid.deep & (dsq > 1e-24)
    out = {"nodes": int(use.sum()), "excluded_zero_dphi": int((grid.deep & ~(dsq > 1e-24)).sum())}
    if not np.any(use):
        out.update(printed_min_margin=None, squared_min_margin=None)
        return out
    ds = dsq[use]
    pp = np.sum(gP[use] ** 2, axis=1)
    pv = np.sum(gP[use] * gV[use], axis=1)
    vv = np.sum(gV[use] ** 2, axis=1)
    base = -curvature[use] + pp / ds + vv / ds - grad_sq[use]
    printed = lapP[use] - (base - 2.0 * pv / np.sqrt(ds))
    squared = lapP[use] - (base - 2.0 * pv / ds)
    out.update(printed_min_margin=float(np.min(printed)),
               printed_violations=int(np.sum(printed < 0)),
               squared_min_margin=float(np.min(squared)),
               squared_violations=int(np.sum(squared < 0)))
    return out


# -- stress-energy tensor ---------------------------------------------------

@dataclass
class StressEnergy:
    tensor: np.ndarray          # (N, n, n)
    divergence: np.ndarray      # (N, n), zero off the evaluation mask
    sup: float
    div_sup: float
    div_l2: float
    nodes: int

    def to_dict(self):
        return {"sup": self.sup, "div_sup": self.div_sup, "div_l2": self.div_l2,
                "nodes": self.nodes}


def stress_energy(field: MapField, potential: Potential) -> StressEnergy:
    """``S_ij = (1/2 |dphi|**2 - V) delta_ij - g(d_i phi, d_j phi)`` and its divergence.

    ``sup`` is the largest Frobenius norm over all nodes; the divergence
    is evaluated on central nodes.
    """
    grid = field.grid
    J = jet(field)
    n = grid.dim
    Vphi = potential.value(field.chart, field.values)
    S = (0.5 * J.dphi_sq - Vphi)[:, None, None] * np.eye(n) - J.gram
    div = np.zeros((grid.size, n))
    for j, op in enumerate(grid.derivative_ops):
        div += op @ S[:, :, j]
    mask = grid.central
    div[~mask] = 0.0
    dn = np.linalg.norm(div, axis=1)
    sup, l2 = _norms(dn, grid, mask)
    return StressEnergy(S, div, float(np.max(np.linalg.norm(S, axis=(1, 2)))), sup, l2,
                        int(mask.sum()))
