"""Experiment configuration: TOML sections with typed, closed key sets.

Sections: ``experiment``, ``domain``, ``target``, ``potential``, ``init``,
``flow``, ``diagnostics``, ``bounds``, ``refine``, ``assertions``.  Unknown
sections or keys are validation errors so that typos never pass silently.
"""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from hmlab.errors import ConfigError, LabError
from hmlab.fields import Region

MAX_TARGET_DIM = 8
DEFAULT_NODE_CAP = 4_000_000

DIAGNOSTICS = ("p_function", "bochner", "stress_energy", "monotonicity", "kato", "bochner_p",
               "gradient_bound_ball", "gradient_bound_energy2", "liouville_integrals",
               "liouville_flow")

_SCHEMA = {
    "experiment": {"name": str, "description": str},
    "domain": {"region": str, "extents": list, "center": list, "radius": float,
               "inner": float, "h": float, "bc": str},
    "target": {"kind": str, "dim": int, "curvature_scale": float},
    "potential": {"kind": str, "coefficients": list},
    "init": {"kind": str, "value": list, "matrix": list, "offset": list, "axis": int,
             "tilt": float, "center": list, "seed": int, "amplitude": float, "passes": int,
             "boundary": str, "perturb": float, "perturb_seed": int},
    "flow": {"enabled": bool, "tol": float, "max_steps": int, "dt_safety": float,
             "log_every": int, "dt": float},
    "diagnostics": {"run": list, "radii": list, "center": list, "modica_slack": float,
                    "n_ang": int},
    "bounds": {"a": float, "d": float, "R": float, "x0": list, "a_sequence": list},
    "refine": {"levels": int, "metrics": list, "node_cap": int, "flow": bool},
    "assertions": {"residual_max": float, "deviation_max": float, "modica": bool,
                   "bochner_order_min": float, "residual_order_min": float,
                   "stress_div_order_min": float, "stress_energy_sup_max": float,
                   "stress_div_sup_max": float, "M_check": list, "monotone": bool,
                   "identity_rtol": float, "energy_dissipation": bool,
                   "ball_bound_monotone_in_a": bool, "limit_center_tol": float,
                   "constant_limit": bool, "liouville_integrals_max": float},
}

REFINE_METRICS = ("residual_sup", "bochner_sup", "stress_div_sup", "identity_gap")


class ParseError(LabError):
    """The configuration text is not valid TOML."""

    exit_code = 2


@dataclass
class Config:
    data: dict
    source: str
    text: str

    def section(self, name) -> dict:
        return self.data.get(name, {})

    @property
    def name(self) -> str:
        return self.section("experiment").get("name") or "experiment"

    def with_h(self, h: float) -> "Config":
        data = copy.deepcopy(self.data)
        data["domain"]["h"] = float(h)
        return Config(data, self.source, self.text)


def bundled_path(name: str):
    """Path of a config shipped with the package (``name`` without ``.toml``)."""
    base = resources.files("hmlab") / "configs"
    cand = base / (name if name.endswith(".toml") else name + ".toml")
    return cand if cand.is_file() else None


def resolve(path_or_name) -> str:
    """Accept a file path or the name of a bundled config."""
    p = os.fspath(path_or_name)
    if os.path.isfile(p):
        return p
    bundled = bundled_path(os.path.basename(p))
    if bundled is not None:
        return str(bundled)
    raise ConfigError(f"no config file or bundled config named {p!r}")


def load(path_or_name) -> Config:
    path = resolve(path_or_name)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cfg = parse(text, source=path)
    if "name" not in cfg.data.setdefault("experiment", {}):
        cfg.data["experiment"]["name"] = os.path.splitext(os.path.basename(path))[0]
    return cfg


def parse(text: str, source: str = "<string>") -> Config:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from None
    cfg = Config(data, source, text)
    validate(cfg)
    return cfg


def _check_types(data):
    for sec, body in data.items():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for key, val in body.items():
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            want = _SCHEMA[sec][key]
            if want is float and isinstance(val, int) and not isinstance(val, bool):
                body[key] = float(val)
            elif want is int and isinstance(val, bool) or not isinstance(body[key], want):
                raise ConfigError(f"[{sec}].{key} must be of type {want.__name__}")


def build_region(dom: dict) -> Region:
    kind = dom.get("region", "box")
    if kind == "box":
        if "extents" not in dom:
            raise ConfigError("box domains need 'extents'")
        return Region.box(dom["extents"])
    if kind == "ball":
        return Region.ball(dom.get("center", [0.0]), dom.get("radius", 1.0))
    if kind == "annulus":
        return Region.annulus(dom.get("center", [0.0]), dom.get("inner", 0.5),
                              dom.get("radius", 1.0))
    raise ConfigError(f"unknown region {kind!r}")


def estimated_nodes(dom: dict) -> int:
    """Number of nodes of the bounding grid, computed without building it."""
    region = build_region(dom)
    h = float(dom["h"])
    if region.kind == "box":
        return int(np.prod([round((hi - lo) / h) + 1 for lo, hi in region.extents]))
    K = int(np.ceil(region.radius / h)) + 1
    return (2 * K + 1) ** region.dim


def validate(cfg: Config) -> None:
    """Structural and hypothesis pre-checks run before any computation."""
    data = cfg.data
    _check_types(data)
    for required in ("domain", "target"):
        if required not in data:
            raise ConfigError(f"missing section [{required}]")
    dom = data["domain"]
    if "h" not in dom or not dom["h"] > 0:
        raise ConfigError("[domain].h must be positive")
    region = build_region(dom)
    if not 1 <= region.dim <= 3:
        raise ConfigError("domain dimension must be 1, 2 or 3")
    tgt = data["target"]
    m = tgt.get("dim", 1)
    if not 1 <= m <= MAX_TARGET_DIM:
        raise ConfigError(f"target dimension must lie in 1..{MAX_TARGET_DIM}")
    cap = data.get("refine", {}).get("node_cap", DEFAULT_NODE_CAP)
    if estimated_nodes(dom) > cap:
        raise ConfigError(f"grid would have {estimated_nodes(dom)} nodes, above the cap {cap}")
    init = data.get("init", {})
    if init.get("kind") == "random" and "seed" not in init:
        raise ConfigError("random initial data need an explicit [init].seed")
    fl = data.get("flow", {})
    if fl.get("enabled", True):
        if not fl.get("tol", 1e-8) > 0:
            raise ConfigError("[flow].tol must be positive")
        if not 0 < fl.get("dt_safety", 0.2) <= 1:
            raise ConfigError("[flow].dt_safety must lie in (0, 1]")
        if fl.get("max_steps", 1) < 0:
            raise ConfigError("[flow].max_steps must be nonnegative")
    diag = data.get("diagnostics", {})
    for name in diag.get("run", []):
        if name not in DIAGNOSTICS:
            raise ConfigError(f"unknown diagnostic {name!r}; choose from {DIAGNOSTICS}")
    b = data.get("bounds", {})
    if "d" in b and not b["d"] > 0:
        raise ConfigError("[bounds].d must be positive")
    if "R" in b and "d" in b and not b["R"] < np.pi / (2 * np.sqrt(b["d"])):
        raise ConfigError(f"[bounds].R = {b['R']} must be below pi/(2 sqrt d) = "
                          f"{np.pi / (2 * np.sqrt(b['d'])):.6g}")
    if "gradient_bound_ball" in diag.get("run", []) and not {"a", "d", "R"} <= set(b):
        raise ConfigError("gradient_bound_ball needs [bounds] a, d and R")
    if "gradient_bound_energy2" in diag.get("run", []) and "a" not in b:
        raise ConfigError("gradient_bound_energy2 needs [bounds].a")
    ref = data.get("refine", {})
    for metric in ref.get("metrics", []):
        if metric not in REFINE_METRICS:
            raise ConfigError(f"unknown refinement metric {metric!r}")
    if "levels" in ref and ref["levels"] < 1:
        raise ConfigError("[refine].levels must be at least 1")
