"""Discretized maps on uniform grids over flat Euclidean regions.

Nodes whose cell ``x + [-h/2, h/2]^n`` meets the region take part in the
discretization; their values are stored compressed, one row per node, in the
order of ``DomainGrid.nodes``.  Nodes are classified as

``ACTIVE``
    unknowns of the flow; under Dirichlet conditions these have both axis
    neighbours in every direction.
``BOUNDARY``
    Dirichlet nodes, held fixed.

Quadrature is the cell-fraction weighted midpoint rule; fractions of cut cells
are obtained by ``4**n`` point subsampling.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from hmlab.errors import ChartDomainError, ConfigError, GridRangeError
from hmlab.geometry import TargetChart

EXTERIOR, BOUNDARY, ACTIVE = 0, 1, 2
BOUNDARY_CONDITIONS = ("dirichlet", "periodic", "free")
SUBSAMPLES = 4


@dataclass(frozen=True)
class Region:
    """``box`` (extents), ``ball`` (center, radius) or ``annulus`` (center, inner, outer)."""

    kind: str
    extents: tuple = ()
    center: tuple = ()
    radius: float = 0.0
    inner: float = 0.0

    @classmethod
    def box(cls, extents):
        ext = tuple((float(lo), float(hi)) for lo, hi in extents)
        if any(hi <= lo for lo, hi in ext):
            raise ConfigError("box extents must satisfy lo < hi")
        return cls("box", extents=ext)

    @classmethod
    def ball(cls, center, radius):
        if not radius > 0:
            raise ConfigError("ball radius must be positive")
        return cls("ball", center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def annulus(cls, center, inner, outer):
        if not 0 < inner < outer:
            raise ConfigError("annulus radii must satisfy 0 < inner < outer")
        return cls("annulus", center=tuple(map(float, center)), radius=float(outer),
                   inner=float(inner))

    @property
    def dim(self) -> int:
        return len(self.extents) if self.kind == "box" else len(self.center)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            lo = np.array([e[0] for e in self.extents])
            hi = np.array([e[1] for e in self.extents])
            return np.all((x >= lo) & (x <= hi), axis=-1)
        r = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        inside = r <= self.radius
        if self.kind == "annulus":
            inside &= r >= self.inner
        return inside

    def contains_ball(self, center, r) -> bool:
        """Whether the closed ball ``B_r(center)`` lies in the region's outer hull."""
        center = np.asarray(center, dtype=float)
        tol = 1e-12
        if self.kind == "box":
            lo = np.array([e[0] for e in self.extents])
            hi = np.array([e[1] for e in self.extents])
            return bool(np.all(center - r >= lo - tol) and np.all(center + r <= hi + tol))
        return bool(np.linalg.norm(center - np.asarray(self.center)) + r <= self.radius + tol)


def _cell_offsets(dim: int, h: float) -> np.ndarray:
    ticks = ((np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES - 0.5) * h
    return np.array(list(itertools.product(ticks, repeat=dim)))


class DomainGrid:
    """Uniform grid of spacing ``h`` over a region in ``R^n`` (``n <= 3``).

    Parameters
    ----------
    region : Region
    h : float
    bc : {"dirichlet", "periodic", "free"}
        ``periodic`` is only available for boxes; the box is then the period
        cell and its upper faces are identified with the lower ones.
    """

    def __init__(self, region: Region, h: float, bc: str = "dirichlet"):
        if bc not in BOUNDARY_CONDITIONS:
            raise ConfigError(f"unknown boundary condition {bc!r}")
        if not h > 0:
            raise ConfigError("grid spacing must be positive")
        n = region.dim
        if not 1 <= n <= 3:
            raise ConfigError("domain dimension must be 1, 2 or 3")
        if bc == "periodic" and region.kind != "box":
            raise ConfigError("periodic boundary conditions need a box region")
        self.region = region
        self.h = float(h)
        self.bc = bc
        self.dim = n

        if region.kind == "box":
            counts = []
            for lo, hi in region.extents:
                cells = (hi - lo) / h
                N = int(round(cells))
                if abs(N - cells) > 1e-6 * max(1.0, cells):
                    raise ConfigError(f"h={h} does not divide the box extent {hi - lo}")
                counts.append(N if bc == "periodic" else N + 1)
            self.origin = np.array([lo for lo, _ in region.extents])
            self.shape = tuple(counts)
        else:
            K = int(np.ceil(region.radius / h)) + 1
            self.origin = np.asarray(region.center) - K * h
            self.shape = (2 * K + 1,) * n
        self._build()

    # -- construction --------------------------------------------------
    def _build(self):
        n, h = self.dim, self.h
        axes = [self.origin[i] + h * np.arange(self.shape[i]) for i in range(n)]
        full_coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        frac = self._region_fractions(full_coords)
        nodes = np.flatnonzero(frac > 0)
        self.nodes = nodes
        self.coords = full_coords[nodes]
        self.fractions = frac[nodes]
        self.weights = self.fractions * h**n
        pos = -np.ones(int(np.prod(self.shape)), dtype=np.int64)
        pos[nodes] = np.arange(len(nodes))
        self._pos = pos

        multi = np.array(np.unravel_index(nodes, self.shape)).T
        self._multi = multi
        N = len(nodes)
        nbr = -np.ones((N, n, 2), dtype=np.int64)
        nbr2 = -np.ones((N, n, 2), dtype=np.int64)
        periodic = self.bc == "periodic"
        for axis in range(n):
            for side, step in ((0, -1), (1, 1)):
                for dist, table in ((1, nbr), (2, nbr2)):
                    m = multi.copy()
                    m[:, axis] += step * dist
                    if periodic:
                        m[:, axis] %= self.shape[axis]
                        ok = np.ones(N, dtype=bool)
                    else:
                        ok = (m[:, axis] >= 0) & (m[:, axis] < self.shape[axis])
                    flat = np.zeros(N, dtype=np.int64)
                    flat[ok] = np.ravel_multi_index(m[ok].T, self.shape)
                    idx = np.where(ok, pos[flat], -1)
                    table[:, axis, side] = idx
        self.nbr = nbr
        self.nbr2 = nbr2
        self.central = np.all(nbr >= 0, axis=(1, 2))
        if self.bc == "dirichlet":
            status = np.where(self.central, ACTIVE, BOUNDARY)
        else:
            status = np.full(N, ACTIVE)
        self.status = status.astype(np.int8)
        self.active = self.status == ACTIVE
        deep = self.central.copy()
        for axis in range(n):
            for side in range(2):
                j = nbr[:, axis, side]
                deep &= np.where(j >= 0, self.central[np.maximum(j, 0)], False)
        self.deep = deep

        # Flow stencil: missing neighbours are mirrored (zero normal derivative).
        ghost = nbr.copy()
        for side in range(2):
            missing = ghost[:, :, side] < 0
            ghost[:, :, side] = np.where(missing, nbr[:, :, 1 - side], ghost[:, :, side])
        both = ghost < 0
        ghost[both] = np.broadcast_to(np.arange(N)[:, None, None], ghost.shape)[both]
        self.ghost_nbr = ghost

    def _region_fractions(self, coords):
        region = self.region
        n, h = self.dim, self.h
        if region.kind == "box":
            if self.bc == "periodic":
                return np.ones(len(coords))
            frac = np.ones(len(coords))
            for axis, (lo, hi) in enumerate(region.extents):
                x = coords[:, axis]
                edge = np.isclose(x, lo, atol=1e-9 * h) | np.isclose(x, hi, atol=1e-9 * h)
                frac *= np.where(edge, 0.5, 1.0)
            return frac
        r = np.linalg.norm(coords - np.asarray(region.center), axis=1)
        half = 0.5 * h * np.sqrt(n)
        inside = r + half <= region.radius
        outside = r - half >= region.radius
        if region.kind == "annulus":
            inside &= r - half >= region.inner
            outside |= r + half <= region.inner
        frac = np.where(inside, 1.0, 0.0)
        cut = ~inside & ~outside
        frac[cut] = _subsample_fraction(coords[cut], h, region.contains)
        return frac

    # -- indexing --------------------------------------------------------
    @property
    def size(self) -> int:
        return len(self.nodes)

    def node_index(self, node) -> int:
        """Compressed index of a node given as int (compressed) or grid multi-index."""
        if isinstance(node, (int, np.integer)):
            if not 0 <= node < self.size:
                raise GridRangeError(f"node {node} out of range")
            return int(node)
        multi = tuple(int(i) for i in node)
        if len(multi) != self.dim or any(not 0 <= i < s for i, s in zip(multi, self.shape)):
            raise GridRangeError(f"grid index {multi} outside shape {self.shape}")
        j = self._pos[np.ravel_multi_index(multi, self.shape)]
        if j < 0:
            raise GridRangeError(f"grid node {multi} is exterior")
        return int(j)

    def nearest_node(self, x) -> int:
        x = np.asarray(x, dtype=float)
        multi = np.rint((x - self.origin) / self.h).astype(int)
        return self.node_index(tuple(multi))

    def to_full(self, values, fill=np.nan) -> np.ndarray:
        """Scatter compressed node values onto the full rectangular grid."""
        values = np.asarray(values)
        tail = values.shape[1:]
        out = np.full((int(np.prod(self.shape)),) + tail, fill, dtype=float)
        out[self.nodes] = values
        return out.reshape(self.shape + tail)

    # -- difference operators --------------------------------------------
    @cached_property
    def derivative_ops(self) -> list:
        """Sparse first-derivative matrices, one per axis.

        Central differences where both neighbours exist, second-order
        one-sided differences otherwise (first order if only one neighbour).
        """
        N, h = self.size, self.h
        rows_all = np.arange(N)
        ops = []
        for axis in range(self.dim):
            lo, hi = self.nbr[:, axis, 0], self.nbr[:, axis, 1]
            lo2, hi2 = self.nbr2[:, axis, 0], self.nbr2[:, axis, 1]
            rows, cols, vals = [], [], []

            def add(mask, entries):
                r = rows_all[mask]
                for col, w in entries:
                    rows.append(r)
                    cols.append(col[mask])
                    vals.append(np.full(r.size, w))

            both = (lo >= 0) & (hi >= 0)
            add(both, [(hi, 0.5 / h), (lo, -0.5 / h)])
            fwd2 = ~both & (hi >= 0) & (hi2 >= 0)
            add(fwd2, [(rows_all, -1.5 / h), (hi, 2.0 / h), (hi2, -0.5 / h)])
            bwd2 = ~both & ~fwd2 & (lo >= 0) & (lo2 >= 0)
            add(bwd2, [(rows_all, 1.5 / h), (lo, -2.0 / h), (lo2, 0.5 / h)])
            fwd1 = ~both & ~fwd2 & ~bwd2 & (hi >= 0)
            add(fwd1, [(rows_all, -1.0 / h), (hi, 1.0 / h)])
            bwd1 = ~both & ~fwd2 & ~bwd2 & ~fwd1 & (lo >= 0)
            add(bwd1, [(rows_all, 1.0 / h), (lo, -1.0 / h)])
            ops.append(sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(N, N)))
        return ops

    @cached_property
    def laplacian_op(self) -> sp.csr_matrix:
        """Standard ``2n+1``-point Laplacian on active rows (ghost-mirrored)."""
        N, h = self.size, self.h
        act = np.flatnonzero(self.active)
        rows, cols, vals = [act], [act], [np.full(act.size, -2.0 * self.dim / h**2)]
        for axis in range(self.dim):
            for side in range(2):
                rows.append(act)
                cols.append(self.ghost_nbr[act, axis, side])
                vals.append(np.full(act.size, 1.0 / h**2))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, N))

    @cached_property
    def ghost_derivative_ops(self) -> list:
        """Central differences on the flow stencil (mirrored ghosts)."""
        N, h = self.size, self.h
        act = np.flatnonzero(self.active)
        ops = []
        for axis in range(self.dim):
            rows = np.concatenate([act, act])
            cols = np.concatenate([self.ghost_nbr[act, axis, 1], self.ghost_nbr[act, axis, 0]])
            vals = np.concatenate([np.full(act.size, 0.5 / h), np.full(act.size, -0.5 / h)])
            ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(N, N)))
        return ops

    def flow_stencil(self):
        """``(active_indices, neighbour_table)`` for the flow kernels.

        ``neighbour_table[k, 2*axis + side]`` is the compressed index of the
        lower (``side=0``) or upper neighbour of active node ``k``.
        """
        act = np.flatnonzero(self.active).astype(np.int64)
        table = self.ghost_nbr[act].reshape(len(act), 2 * self.dim).astype(np.int64)
        return np.ascontiguousarray(act), np.ascontiguousarray(table)

    # -- quadrature ------------------------------------------------------
    def ball_weights(self, center, r) -> np.ndarray:
        """Quadrature weights of ``B_r(center)`` intersected with the region."""
        center = np.asarray(center, dtype=float)
        if r < 0:
            raise GridRangeError("negative radius")
        if not self.region.contains_ball(center, r):
            raise GridRangeError(f"ball of radius {r} about {center.tolist()} leaves the grid")
        d = np.linalg.norm(self.coords - center, axis=1)
        half = 0.5 * self.h * np.sqrt(self.dim)
        frac = np.where(d + half <= r, self.fractions, 0.0)
        cut = (d + half > r) & (d - half < r)
        if np.any(cut):
            region = self.region

            def indicator(x):
                return (np.linalg.norm(x - center, axis=-1) <= r) & region.contains(x)

            frac[cut] = _subsample_fraction(self.coords[cut], self.h, indicator)
        return frac * self.h**self.dim

    def interpolate(self, values, points) -> np.ndarray:
        """Multilinear interpolation of node values at arbitrary points."""
        values = np.asarray(values, dtype=float)
        full = self.to_full(values).reshape((-1,) + values.shape[1:])
        points = np.atleast_2d(np.asarray(points, dtype=float))
        s = (points - self.origin) / self.h
        i0 = np.floor(s).astype(np.int64)
        t = s - i0
        shape = np.array(self.shape)
        out = np.zeros((len(points),) + values.shape[1:])
        for corner in itertools.product((0, 1), repeat=self.dim):
            c = np.array(corner)
            idx = i0 + c
            if self.bc == "periodic":
                idx %= shape
            elif np.any(idx < 0) or np.any(idx >= shape):
                raise GridRangeError("interpolation point outside the grid")
            w = np.prod(np.where(c == 1, t, 1.0 - t), axis=1)
            vals = full[np.ravel_multi_index(idx.T, self.shape)]
            if np.any(np.isnan(vals[w > 0])):
                raise GridRangeError("interpolation stencil touches exterior nodes")
            vals = np.where(np.isnan(vals), 0.0, vals)
            out += w.reshape((-1,) + (1,) * (values.ndim - 1)) * vals
        return out


def _subsample_fraction(coords, h, indicator) -> np.ndarray:
    if len(coords) == 0:
        return np.zeros(0)
    offsets = _cell_offsets(coords.shape[1], h)
    pts = coords[:, None, :] + offsets[None, :, :]
    return indicator(pts).mean(axis=1)


@dataclass
class MapField:
    """Chart values of a map from the grid's nodes into a target chart."""

    grid: DomainGrid
    chart: TargetChart
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.size, self.chart.dim_m):
            raise ConfigError(
                f"field values have shape {values.shape}, expected "
                f"({self.grid.size}, {self.chart.dim_m})")
        try:
            self.chart.check(values)
        except ChartDomainError as exc:
            node = exc.index[0] if exc.index else None
            where = "" if node is None else f" at x={self.grid.coords[node].tolist()}"
            raise ChartDomainError(f"field leaves the chart{where}", index=node) from None
        self.values = values

    @classmethod
    def from_function(cls, grid, chart, func):
        """Sample ``func(coords) -> (N, m)`` at every node."""
        return cls(grid, chart, np.asarray(func(grid.coords), dtype=float))

    def with_values(self, values) -> "MapField":
        return MapField(self.grid, self.chart, values)

    def copy(self) -> "MapField":
        return MapField(self.grid, self.chart, self.values.copy())


# -- differential operators on fields -------------------------------------

def differential(field: MapField, node=None) -> np.ndarray:
    """First partials ``d_i phi^a`` as ``(N, n, m)``, or ``(n, m)`` at one node."""
    d = np.stack([op @ field.values for op in field.grid.derivative_ops], axis=1)
    if node is None:
        return d
    return d[field.grid.node_index(node)]


def energy_density(field: MapField, node=None, dphi=None) -> np.ndarray:
    """``1/2 g_ab d_i phi^a d_i phi^b``."""
    if dphi is None:
        dphi = differential(field)
    lam = field.chart.conformal_factor(field.values)
    e = 0.5 * lam**2 * np.sum(dphi * dphi, axis=(1, 2))
    if node is None:
        return e
    return e[field.grid.node_index(node)]


def dphi_norm_sq(field: MapField, dphi=None) -> np.ndarray:
    return 2.0 * energy_density(field, dphi=dphi)


def tension_field(field: MapField, node=None) -> np.ndarray:
    """``Delta phi^a + Gamma^a_bc d_i phi^b d_i phi^c`` on active nodes (zero elsewhere)."""
    grid = field.grid
    y = field.values
    lap = grid.laplacian_op @ y
    f = field.chart.log_factor_gradient(y)
    tau = lap
    for op in grid.ghost_derivative_ops:
        d = op @ y
        fd = np.sum(f * d, axis=1, keepdims=True)
        tau = tau + 2.0 * fd * d - f * np.sum(d * d, axis=1, keepdims=True)
    tau[~grid.active] = 0.0
    if node is None:
        return tau
    j = grid.node_index(node)
    if not grid.active[j]:
        raise GridRangeError("tension is only defined on active nodes")
    return tau[j]


@dataclass
class Residual:
    vectors: np.ndarray
    norms: np.ndarray
    sup: float
    l2: float


def residual(field: MapField, potential) -> Residual:
    """``R = tau(phi) + grad V(phi)`` with metric norms over active nodes."""
    grid = field.grid
    R = tension_field(field) + potential.gradient(field.chart, field.values)
    R[~grid.active] = 0.0
    norms = field.chart.norm(field.values, R)
    norms[~grid.active] = 0.0
    act = grid.active
    sup = float(np.max(norms[act])) if np.any(act) else 0.0
    l2 = float(np.sqrt(np.sum(grid.weights[act] * norms[act] ** 2)))
    return Residual(R, norms, sup, l2)


def integrate(grid: DomainGrid, quantity, center=None, r=None) -> float:
    """Midpoint quadrature of a node quantity over the region or ``B_r(center)``."""
    q = np.asarray(quantity, dtype=float)
    if q.shape[0] != grid.size:
        raise ConfigError("quantity does not match the grid")
    if r is None:
        w = grid.weights
    else:
        if center is None:
            center = _default_center(grid)
        w = grid.ball_weights(center, r)
    mask = w > 0
    return float(np.sum(w[mask] * q[mask]))


def _default_center(grid):
    if grid.region.kind == "box":
        return np.array([(lo + hi) / 2 for lo, hi in grid.region.extents])
    return np.asarray(grid.region.center)


def sphere_quadrature(dim: int, center, r: float, n_ang: int):
    """Quadrature nodes and weights on the sphere ``|x - center| = r``.

    ``n = 1``: the two endpoints (counting measure).
    ``n = 2``: Gauss-Legendre in the angle.
    ``n = 3``: Gauss-Legendre in ``cos(theta)`` times equispaced longitude.
    """
    center = np.asarray(center, dtype=float)
    if dim == 1:
        return center + np.array([[-r], [r]]), np.ones(2)
    if dim == 2:
        xi, wi = np.polynomial.legendre.leggauss(n_ang)
        theta = np.pi * (xi + 1.0)
        pts = center + r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return pts, np.pi * wi * r
    xi, wi = np.polynomial.legendre.leggauss(n_ang)
    n_phi = 2 * n_ang
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    ct, ph = np.meshgrid(xi, phi, indexing="ij")
    st = np.sqrt(1.0 - ct**2)
    pts = center + r * np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    w = (wi[:, None] * np.full(n_phi, 2 * np.pi / n_phi)[None, :]).reshape(-1) * r * r
    return pts, w


def surface_integrate(grid: DomainGrid, quantity, r: float, center=None, n_ang=None) -> float:
    """Integral over ``|x - center| = r`` of a multilinearly interpolated node quantity."""
    if center is None:
        center = _default_center(grid)
    if not grid.region.contains_ball(center, r):
        raise GridRangeError(f"sphere of radius {r} leaves the grid")
    if n_ang is None:
        n_ang = max(64, int(np.ceil(8 * r / grid.h)))
    pts, w = sphere_quadrature(grid.dim, center, r, n_ang)
    vals = grid.interpolate(np.asarray(quantity, dtype=float), pts)
    return float(np.sum(w * vals))


# -- snapshots ---------------------------------------------------------------

def field_rows(field: MapField):
    """Header and rows of the node snapshot: coordinates, chart values, status."""
    n, m = field.grid.dim, field.chart.dim_m
    header = [f"x{i}" for i in range(n)] + [f"y{a}" for a in range(m)] + ["status"]
    names = {ACTIVE: "active", BOUNDARY: "boundary"}
    rows = []
    for x, y, s in zip(field.grid.coords, field.values, field.grid.status):
        rows.append([*x, *y, names[int(s)]])
    return header, rows


def load_field_csv(path, grid: DomainGrid, chart: TargetChart) -> MapField:
    """Read a snapshot written by the harness back onto ``grid``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n, m = grid.dim, chart.dim_m
        if len(header) != n + m + 1:
            raise ConfigError("snapshot header does not match grid and chart dimensions")
        data = np.array([[float(v) for v in row[: n + m]] for row in reader])
    if len(data) != grid.size or not np.allclose(data[:, :n], grid.coords):
        raise ConfigError("snapshot nodes do not match the grid")
    return MapField(grid, chart, data[:, n:])
