"""Named initial and boundary data for experiments.

Each builder maps node coordinates ``(N, n)`` to chart values ``(N, m)``.
``exact_solution`` returns the closed form for the data that are exact
solutions (kink, instanton, hedgehog, constants), used for deviation checks.
"""

from __future__ import annotations

import numpy as np

from hmlab.errors import ConfigError
from hmlab.fields import DomainGrid, MapField
from hmlab.geometry import TargetChart

KINDS = ("constant", "linear", "kink", "instanton", "hedgehog", "random")


def kink_profile(x):
    """``tanh(x / sqrt 2)``: solves ``u'' = u**3 - u``."""
    return np.tanh(np.asarray(x) / np.sqrt(2.0))


def tilted_instanton(x, tilt: float = 0.0, k: float = 1.0):
    """Inverse stereographic projection followed by a rotation of the sphere.

    The rotation by ``tilt`` about the first embedding axis is an isometry, so
    the energy density ``4 / (1 + |x|**2)**2`` (for ``k = 1``) does not depend
    on it, while the chart representation stops being linear.
    """
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    X = np.stack([2 * x[..., 0], 2 * x[..., 1], r2 - 1.0], axis=-1) / (1.0 + r2)[..., None]
    c, s = np.cos(tilt), np.sin(tilt)
    Y = np.stack([X[..., 0], c * X[..., 1] - s * X[..., 2], s * X[..., 1] + c * X[..., 2]],
                 axis=-1)
    return Y[..., :2] / (1.0 - Y[..., 2])[..., None] / k


def hedgehog(x, center, m: int, k: float = 1.0):
    """``(x - c)/|x - c|`` placed on the equator ``|y| = 1/k`` of the chart."""
    x = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(r == 0):
        raise ConfigError("hedgehog data are singular at the center")
    n = x.shape[-1]
    if m < n:
        raise ConfigError("hedgehog needs target dimension >= domain dimension")
    out = np.zeros(x.shape[:-1] + (m,))
    out[..., :n] = x / r / k
    return out


def smooth_noise(grid: DomainGrid, m: int, rng, passes: int = 2) -> np.ndarray:
    """Gaussian noise smoothed ``passes`` times by ``[1/4, 1/2, 1/4]`` per axis."""
    full = rng.normal(size=grid.shape + (m,))
    for _ in range(passes):
        for axis in range(grid.dim):
            if grid.bc == "periodic":
                lo = np.roll(full, 1, axis=axis)
                hi = np.roll(full, -1, axis=axis)
            else:
                padded = np.concatenate(
                    [np.take(full, [1], axis=axis), full,
                     np.take(full, [-2 if full.shape[axis] > 1 else 0], axis=axis)], axis=axis)
                lo = np.take(padded, np.arange(0, full.shape[axis]), axis=axis)
                hi = np.take(padded, np.arange(2, full.shape[axis] + 2), axis=axis)
            full = 0.25 * lo + 0.5 * full + 0.25 * hi
    values = full.reshape(-1, m)[grid.nodes]
    values = values - values.mean(axis=0)
    scale = np.max(np.linalg.norm(values, axis=1))
    return values / scale if scale > 0 else values


def build_initial(grid: DomainGrid, chart: TargetChart, init: dict) -> MapField:
    """Construct the initial field from an ``[init]`` config section."""
    kind = init.get("kind", "constant")
    m = chart.dim_m
    x = grid.coords
    k = chart.curvature_scale
    if kind == "constant":
        value = np.asarray(init.get("value", [0.0] * m), dtype=float)
        values = np.broadcast_to(value, (grid.size, m)).copy()
    elif kind == "linear":
        A = np.asarray(init["matrix"], dtype=float).reshape(m, grid.dim)
        b = np.asarray(init.get("offset", [0.0] * m), dtype=float)
        values = x @ A.T + b
    elif kind == "kink":
        if m != 1:
            raise ConfigError("kink data need a one-dimensional target")
        axis = int(init.get("axis", 0))
        values = kink_profile(x[:, axis])[:, None]
    elif kind == "instanton":
        if grid.dim != 2 or m != 2 or chart.sign <= 0:
            raise ConfigError("instanton data need a 2D domain and a 2-sphere target")
        values = tilted_instanton(x, float(init.get("tilt", 0.0)), k)
    elif kind == "hedgehog":
        if chart.sign <= 0:
            raise ConfigError("hedgehog data need a sphere target")
        center = init.get("center", [0.0] * grid.dim)
        values = hedgehog(x, center, m, k)
    elif kind == "random":
        rng = np.random.default_rng(int(init["seed"]))
        amp = float(init.get("amplitude", 0.3))
        center = np.asarray(init.get("center", [0.0] * m), dtype=float)
        values = center + amp * smooth_noise(grid, m, rng, int(init.get("passes", 2)))
        if init.get("boundary") == "center":
            values[~grid.active] = center
    else:
        raise ConfigError(f"unknown init kind {kind!r}")
    field = MapField(grid, chart, values)
    if "perturb" in init:
        field = perturb(field, float(init["perturb"]), int(init.get("perturb_seed", 0)))
    return field


def perturb(field: MapField, amplitude: float, seed: int, passes: int = 2) -> MapField:
    """Add smoothed noise of the given sup amplitude to the active nodes."""
    rng = np.random.default_rng(seed)
    noise = smooth_noise(field.grid, field.chart.dim_m, rng, passes)
    values = field.values.copy()
    act = field.grid.active
    values[act] += amplitude * noise[act]
    return field.with_values(values)


def exact_solution(grid: DomainGrid, chart: TargetChart, init: dict):
    """Closed-form solution matching the init data, or ``None``."""
    kind = init.get("kind")
    if kind in ("kink", "instanton", "hedgehog", "constant"):
        return build_initial(grid, chart, {k: v for k, v in init.items() if k != "perturb"}).values
    return None
