"""Experiment execution, refinement studies and suites."""

from __future__ import annotations

import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from hmlab import flow
from hmlab.diagnostics import (FAIL, NA, PASS, UNCONVERGED, ball_bound_sequence,
                               basic_report, bochner_p_lemma, bochner_residual,
                               gradient_bound_ball, gradient_bound_energy2, kato_check,
                               liouville_flow_experiment, liouville_integrals,
                               monotonicity_table, p_function, stress_energy)
from hmlab.diagnostics.monotonicity import COLUMNS as MONO_COLUMNS
from hmlab.errors import ChartDomainError, ConfigError, LabError
from hmlab.fields import DomainGrid, field_rows, residual
from hmlab.geometry import TargetChart
from hmlab.harness import config as cfgmod
from hmlab.harness.io import atomic_write, to_json, write_csv, write_json
from hmlab.initial import build_initial, exact_solution
from hmlab.potentials import Potential, theorem_constants

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ARTIFACT_ENV = "HMLAB_ARTIFACT_ROOT"


def artifact_root() -> str:
    return os.environ.get(ARTIFACT_ENV, os.path.join(os.getcwd(), "artifacts"))


@dataclass
class Assertion:
    status: str
    anchor: str
    name: str
    detail: str

    def line(self) -> str:
        return f"{self.status:<15}[{self.anchor}] {self.name}: {self.detail}"

    def to_dict(self):
        return {"status": self.status, "anchor": self.anchor, "name": self.name,
                "detail": self.detail}


@dataclass
class RunResult:
    name: str
    exit_code: int
    out_dir: str
    assertions: list = dc_field(default_factory=list)
    report: dict = dc_field(default_factory=dict)
    error: str = ""

    def counts(self) -> dict:
        out = {PASS: 0, FAIL: 0, NA: 0, UNCONVERGED: 0}
        for a in self.assertions:
            out[a.status] = out.get(a.status, 0) + 1
        return out


# -- building blocks ---------------------------------------------------------

@dataclass
class Setup:
    grid: DomainGrid
    chart: TargetChart
    potential: Potential
    field: object
    exact: np.ndarray | None


def build(cfg: cfgmod.Config) -> Setup:
    dom, tgt = cfg.section("domain"), cfg.section("target")
    chart = TargetChart(tgt.get("dim", 1), tgt.get("kind", "euclidean"),
                        tgt.get("curvature_scale", 1.0))
    pot = cfg.section("potential")
    potential = Potential(pot.get("kind", "zero"), tuple(pot.get("coefficients", ())))
    potential.check_chart(chart)
    grid = DomainGrid(cfgmod.build_region(dom), dom["h"], dom.get("bc", "dirichlet"))
    init = cfg.section("init")
    try:
        field0 = build_initial(grid, chart, init)
    except ChartDomainError as exc:
        raise ConfigError(f"initial data are not chart-valid: {exc}") from None
    return Setup(grid, chart, potential, field0, exact_solution(grid, chart, init))


def _ok(cond) -> str:
    return PASS if cond else FAIL


def _g(x) -> str:
    return format(float(x), ".3e")


def orders(errors) -> list:
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return [float(np.log2(e[i] / e[i + 1])) for i in range(len(e) - 1)]


def _metric(name, field, potential, cfg):
    if name == "residual_sup":
        return residual(field, potential).sup
    if name == "bochner_sup":
        return bochner_residual(field, potential).sup
    if name == "stress_div_sup":
        return stress_energy(field, potential).div_sup
    if name == "identity_gap":
        diag = cfg.section("diagnostics")
        table = monotonicity_table(field, potential, diag.get("radii", []),
                                   diag.get("center"), n_ang=diag.get("n_ang"))
        gaps = table.identity_gaps()
        return float(np.max(gaps)) if gaps.size else float("nan")
    raise ConfigError(f"unknown refinement metric {name!r}")


def refinement_study(cfg: cfgmod.Config, levels: int, metrics=None) -> dict:
    """Evaluate error metrics at ``h, h/2, ...`` and their empirical orders.

    Unless ``[refine].flow`` is true the metrics are evaluated on the initial
    data of each level (exact solutions where available), so only the
    discretization error enters.
    """
    if levels < 2:
        raise ConfigError("a refinement study needs at least 2 levels")
    ref = cfg.section("refine")
    metrics = list(metrics or ref.get("metrics") or ["residual_sup"])
    for m in metrics:
        if m not in cfgmod.REFINE_METRICS:
            raise ConfigError(f"unknown refinement metric {m!r}")
    cap = ref.get("node_cap", cfgmod.DEFAULT_NODE_CAP)
    h0 = cfg.section("domain")["h"]
    hs = [h0 / 2**k for k in range(levels)]
    for h in hs:
        level_cfg = cfg.with_h(h)
        n = cfgmod.estimated_nodes(level_cfg.section("domain"))
        if n > cap:
            raise ConfigError(f"refinement level h={h:g} needs {n} nodes, above the cap {cap}")
    table = {m: [] for m in metrics}
    use_flow = ref.get("flow", False)
    for h in hs:
        s = build(cfg.with_h(h))
        field = s.field
        if use_flow:
            fl = cfg.section("flow")
            field = flow.run_to_convergence(field, s.potential, fl.get("tol", 1e-8),
                                            fl.get("max_steps", 1_000_000),
                                            dt_safety=fl.get("dt_safety", 0.2),
                                            log_every=fl.get("log_every", 1000)).field
        for m in metrics:
            table[m].append(float(_metric(m, field, s.potential, cfg)))
    return {"h": hs, "errors": table, "orders": {m: orders(v) for m, v in table.items()},
            "flow": use_flow}


# -- experiment ----------------------------------------------------------------

def _history_rows(history):
    return ["step", "energy", "residual_sup", "residual_l2"], [list(r) for r in history]


def run_experiment(cfg: cfgmod.Config, out_dir: str | None = None) -> RunResult:
    """Run one configured experiment and write its artifacts.

    Library errors are turned into exit codes and an ``ERROR`` line in
    ``summary.txt``; the exception message is kept in ``RunResult.error``.
    """
    name = cfg.name
    out_dir = out_dir or os.path.join(artifact_root(), name)
    os.makedirs(out_dir, exist_ok=True)
    atomic_write(os.path.join(out_dir, "config.toml"), cfg.text)
    write_json(os.path.join(out_dir, "config_resolved.json"), cfg.data)
    try:
        return _run(cfg, out_dir)
    except LabError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        atomic_write(os.path.join(out_dir, "summary.txt"),
                     f"experiment {name}\nERROR          {msg}\nexit {exc.exit_code}\n")
        return RunResult(name, exc.exit_code, out_dir, error=msg)


def _run(cfg, out_dir) -> RunResult:
    s = build(cfg)
    grid, chart, potential = s.grid, s.chart, s.potential
    fl = cfg.section("flow")
    diag = cfg.section("diagnostics")
    bnd = cfg.section("bounds")
    asr = cfg.section("assertions")
    run = list(diag.get("run", []))
    tol = fl.get("tol", 1e-8)
    assertions: list[Assertion] = []
    report = {"schema_version": SCHEMA_VERSION, "experiment": cfg.name,
              "config": cfg.data}
    field = s.field
    flow_info = {"enabled": bool(fl.get("enabled", True))}
    history = []
    liouville_check = None

    if "liouville_flow" in run:
        liouville_check, result = liouville_flow_experiment(
            field, potential, tol, fl.get("max_steps", 1_000_000), fl.get("dt_safety", 0.2),
            fl.get("log_every", 1000))
        if result is not None:
            field, history = result.field, result.history
            flow_info.update(converged=result.converged, steps=result.steps, dt=result.dt,
                             final_residual=result.final_residual)
    elif flow_info["enabled"] and fl.get("max_steps", 1_000_000) > 0:
        result = flow.run_to_convergence(field, potential, tol, fl.get("max_steps", 1_000_000),
                                         dt=fl.get("dt"), dt_safety=fl.get("dt_safety", 0.2),
                                         log_every=fl.get("log_every", 1000))
        field, history = result.field, result.history
        flow_info.update(converged=result.converged, steps=result.steps, dt=result.dt,
                         final_residual=result.final_residual)
    else:
        res = residual(field, potential)
        history = [(0, flow.energy(field, potential), res.sup, res.l2)]
        flow_info.update(converged=None, steps=0, final_residual=res.sup)
    report["flow"] = flow_info
    write_csv(os.path.join(out_dir, "flow_history.csv"), *_history_rows(history))
    converged = flow_info.get("converged")
    if converged is not None:
        assertions.append(Assertion(PASS if converged else UNCONVERGED, "flow", "convergence",
                                    f"residual {_g(flow_info['final_residual'])} vs tol "
                                    f"{_g(tol)} after {flow_info['steps']} steps"))

    if not run and not asr:
        return _finish(cfg, out_dir, assertions, None)

    rep = basic_report(field, potential)
    res = residual(field, potential)
    report_extra = rep.extra
    report_extra["residual_sup"] = res.sup
    report_extra["theorem_constants_image"] = theorem_constants(potential, chart,
                                                                points=field.values)

    pfun = stress = table = None
    if "p_function" in run or "modica" in asr:
        pfun = p_function(field, potential, diag.get("modica_slack", 1e-4))
        rep.p_field_extrema = pfun.to_dict()
        write_csv(os.path.join(out_dir, "p_field.csv"),
                  [f"x{i}" for i in range(grid.dim)] + ["P"],
                  [[*x, p] for x, p in zip(grid.coords, pfun.values)])
    if "bochner" in run:
        rep.bochner_residual_norms = bochner_residual(field, potential).to_dict()
    if "kato" in run:
        report_extra["kato"] = kato_check(field)
    if "bochner_p" in run:
        report_extra["bochner_p"] = bochner_p_lemma(field, potential)
    if "stress_energy" in run or {"stress_energy_sup_max", "stress_div_sup_max"} & set(asr):
        stress = stress_energy(field, potential)
        rep.stress_energy_div_norms = stress.to_dict()
        write_csv(os.path.join(out_dir, "stress_energy_div.csv"),
                  [f"x{i}" for i in range(grid.dim)] + [f"div{i}" for i in range(grid.dim)]
                  + ["norm"],
                  [[*x, *d, float(np.linalg.norm(d))]
                   for x, d in zip(grid.coords, stress.divergence)])
    if "monotonicity" in run:
        improved = _improved_params(field, potential, bnd)
        table = monotonicity_table(field, potential, diag.get("radii", []), diag.get("center"),
                                   improved=improved, n_ang=diag.get("n_ang"))
        rep.monotonicity_table = table.to_dict()
        report_extra["improved_monotonicity_violations"] = (
            table.improved_violations() if improved else None)
        write_csv(os.path.join(out_dir, "monotonicity.csv"),
                  list(MONO_COLUMNS), table.rows)

    checks = []
    if "gradient_bound_ball" in run:
        checks.append(("gradient-bound-ball", gradient_bound_ball(
            field, potential, bnd["a"], bnd["d"], bnd["R"], bnd.get("x0"),
            tol=tol if converged is not None else None)))
    if "gradient_bound_energy2" in run:
        checks.append(("gradient-bound-energy2", gradient_bound_energy2(
            field, potential, bnd["a"], bnd.get("x0"),
            tol=tol if converged is not None else None)))
    if "liouville_integrals" in run:
        chk = liouville_integrals(field, potential)
        checks.append(("liouville-integral", chk))
        rep.liouville_integrals = {"int_dphi_sq": chk.extra.get("int_dphi_sq"),
                                   "rhs": chk.extra.get("rhs"),
                                   "inequality_holds": chk.passed
                                   if chk.hypotheses_satisfied
                                   else chk.extra.get("inequality_holds"),
                                   "status": chk.status}
    if liouville_check is not None:
        checks.append(("liouville-concave", liouville_check))
    for anchor, chk in checks:
        rep.bound_checks.append(chk)
        detail = (f"lhs {_g(chk.lhs)} rhs {_g(chk.rhs)} margin {_g(chk.margin)}"
                  if chk.hypotheses_satisfied else
                  "hypotheses not met: " + ", ".join(k for k, v in chk.hypotheses.items()
                                                     if v is False))
        if chk.constants:
            detail += " | constants " + ", ".join(
                f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}"
                for k, v in chk.constants.items())
        assertions.append(Assertion(chk.status, anchor, chk.name, detail))

    refine = None
    ref = cfg.section("refine")
    if ref.get("levels", 1) >= 2:
        refine = refinement_study(cfg, ref["levels"])
        report["refinement"] = refine
        _write_refinement(out_dir, refine)

    assertions += _assertions(cfg, asr, s, field, res, history, flow_info, pfun, stress, table,
                              refine, rep, bnd, potential)
    report["diagnostics"] = rep.to_dict()
    write_csv(os.path.join(out_dir, "field.csv"), *field_rows(field))
    return _finish(cfg, out_dir, assertions, report)


def _improved_params(field, potential, bnd):
    if not {"d", "R"} <= set(bnd):
        return None
    chart = field.chart
    d = bnd["d"]
    C2 = d - chart.curvature_bound
    if C2 <= 0 or np.max(chart.distance(field.values)) >= bnd["R"]:
        return None
    A_V = theorem_constants(potential, chart, points=field.values)["A_V"]
    # twice the constant 8 / C2 obtained from the ball estimate as a -> infinity
    return {"d": d, "A_V": A_V, "constant": 16.0 / C2}


def _write_refinement(out_dir, refine):
    metrics = list(refine["errors"])
    rows = []
    for k, h in enumerate(refine["h"]):
        row = [h]
        for m in metrics:
            row.append(refine["errors"][m][k])
            row.append(refine["orders"][m][k - 1] if k else float("nan"))
        rows.append(row)
    header = ["h"] + [c for m in metrics for c in (m, f"{m}_order")]
    write_csv(os.path.join(out_dir, "refinement.csv"), header, rows)


def _order_assertion(refine, metric, minimum, anchor, name):
    if refine is None or metric not in refine["orders"]:
        return Assertion(FAIL, anchor, name, f"refinement metric {metric} was not computed")
    o = refine["orders"][metric]
    errs = ", ".join(_g(e) for e in refine["errors"][metric])
    return Assertion(_ok(len(o) > 0 and min(o) >= minimum), anchor, name,
                     f"orders {', '.join(f'{x:.3f}' for x in o)} >= {minimum} (errors {errs})")


def _assertions(cfg, asr, s, field, res, history, flow_info, pfun, stress, table, refine, rep,
                bnd, potential):
    out = []
    conv = flow_info.get("converged")
    if "residual_max" in asr:
        v = asr["residual_max"]
        st = _ok(res.sup <= v)
        if st == FAIL and conv is False:
            st = UNCONVERGED
        out.append(Assertion(st, "euler-lagrange", "residual", f"sup {_g(res.sup)} <= {_g(v)}"))
    if "deviation_max" in asr:
        if s.exact is None:
            out.append(Assertion(NA, "exact-solution", "deviation", "no closed form available"))
        else:
            dev = float(np.max(np.abs(field.values - s.exact)))
            out.append(Assertion(_ok(dev <= asr["deviation_max"]), "exact-solution", "deviation",
                                 f"sup {_g(dev)} <= {_g(asr['deviation_max'])}"))
    if asr.get("modica"):
        if not pfun.modica_applicable:
            out.append(Assertion(NA, "modica", "max P",
                                 f"vector target; max P = {_g(pfun.max)} recorded only"))
        else:
            out.append(Assertion(_ok(pfun.modica_holds), "modica", "max P",
                                 f"{_g(pfun.max)} <= {_g(pfun.modica_slack)}"))
    if "residual_order_min" in asr:
        out.append(_order_assertion(refine, "residual_sup", asr["residual_order_min"],
                                    "euler-lagrange", "residual order"))
    if "bochner_order_min" in asr:
        out.append(_order_assertion(refine, "bochner_sup", asr["bochner_order_min"],
                                    "bochner-formula", "Bochner residual order"))
    if "stress_div_order_min" in asr:
        out.append(_order_assertion(refine, "stress_div_sup", asr["stress_div_order_min"],
                                    "stress-energy-divergence", "div S order"))
    if "stress_energy_sup_max" in asr:
        out.append(Assertion(_ok(stress.sup <= asr["stress_energy_sup_max"]),
                             "stress-energy-conformal", "sup |S|",
                             f"{_g(stress.sup)} <= {_g(asr['stress_energy_sup_max'])}"))
    if "stress_div_sup_max" in asr:
        out.append(Assertion(_ok(stress.div_sup <= asr["stress_div_sup_max"]),
                             "stress-energy-divergence", "sup |div S|",
                             f"{_g(stress.div_sup)} <= {_g(asr['stress_div_sup_max'])}"))
    if "M_check" in asr:
        r, expected, rtol = (float(v) for v in asr["M_check"])
        if table is None:
            out.append(Assertion(FAIL, "monotonicity", "M(r)", "monotonicity table missing"))
        else:
            rr = table.column("r")
            hit = np.flatnonzero(np.isclose(rr, r))
            if hit.size == 0:
                out.append(Assertion(FAIL, "monotonicity", f"M({r:g})", "radius not in table"))
            else:
                M = table.column("M")[hit[0]]
                out.append(Assertion(_ok(abs(M - expected) <= rtol * abs(expected)),
                                     "monotonicity", f"M({r:g})",
                                     f"{M:.8g} vs {expected:.8g} (rtol {rtol:g})"))
    if asr.get("monotone"):
        sign = theorem_constants(potential, s.chart, points=field.values)["sign"]
        if table is None:
            out.append(Assertion(FAIL, "monotonicity", "dM/dr", "monotonicity table missing"))
        elif sign not in ("zero", "nonpositive"):
            out.append(Assertion(NA, "monotonicity", "dM/dr", f"V has sign {sign} on the image"))
        else:
            d = table.column("dM_dr")
            out.append(Assertion(_ok(table.monotone()), "monotonicity", "dM/dr >= -eps_quad",
                                 f"min {_g(np.nanmin(d))}, eps_quad {_g(table.epsilon_quad)}"))
    if "identity_rtol" in asr:
        if table is None or not table.rows:
            out.append(Assertion(FAIL, "pre-monotonicity", "flux identity", "no table rows"))
        else:
            gaps = table.identity_gaps()
            out.append(Assertion(_ok(np.max(gaps) <= asr["identity_rtol"]), "pre-monotonicity",
                                 "flux identity",
                                 f"max relative gap {_g(np.max(gaps))} <= "
                                 f"{_g(asr['identity_rtol'])} at r = "
                                 + ", ".join(f"{r:g}" for r in table.column("r"))))
    if asr.get("energy_dissipation"):
        E = np.array([h[1] for h in history])
        inc = float(np.max(np.diff(E))) if E.size > 1 else 0.0
        floor = flow.AUDIT_FLOOR * float(np.max(np.abs(E)) + 1.0)
        out.append(Assertion(_ok(inc <= floor), "energy-dissipation", "E non-increasing",
                             f"largest increase {_g(inc)} <= {_g(floor)} over {E.size} samples"))
    if asr.get("ball_bound_monotone_in_a"):
        seq = ball_bound_sequence(field, potential, bnd.get("a_sequence", [bnd["a"]]),
                                  bnd["d"], bnd.get("x0"))
        rep.extra["ball_bound_sequence"] = seq
        out.append(Assertion(_ok(seq["monotone_decreasing"]), "gradient-bound-ball-limit",
                             "rhs decreasing in a",
                             "max rhs " + ", ".join(_g(v) for v in seq["rhs_max"])
                             + " for a = " + ", ".join(f"{a:g}" for a in seq["a"])))
    lcheck = next((b for b in rep.bound_checks if b.name == "liouville_flow"), None)
    if "limit_center_tol" in asr:
        if lcheck is None or not lcheck.hypotheses_satisfied:
            out.append(Assertion(NA, "liouville-concave", "limit at maximizer",
                                 "experiment not applicable"))
        else:
            dist = lcheck.extra["limit_distance_from_center"]
            out.append(Assertion(_ok(dist <= asr["limit_center_tol"]), "liouville-concave",
                                 "limit at maximizer",
                                 f"distance {_g(dist)} <= {_g(asr['limit_center_tol'])}"))
    if asr.get("constant_limit"):
        tol = cfg.section("flow").get("tol", 1e-8)
        out.append(Assertion(_ok(rep.sup_dphi <= 10 * tol), "liouville-integral",
                             "constant limit", f"sup |dphi| {_g(rep.sup_dphi)} <= {_g(10 * tol)}"))
    if "liouville_integrals_max" in asr:
        li = rep.liouville_integrals or {}
        v = asr["liouville_integrals_max"]
        a, b = li.get("int_dphi_sq", np.nan), li.get("rhs", np.nan)
        out.append(Assertion(_ok(abs(a) <= v and abs(b) <= v), "liouville-integral",
                             "integrals vanish", f"|{_g(a)}|, |{_g(b)}| <= {_g(v)}"))
    return out


def _finish(cfg, out_dir, assertions, report) -> RunResult:
    lines = [f"experiment {cfg.name}"] + [a.line() for a in assertions]
    result = RunResult(cfg.name, 0, out_dir, assertions, report or {})
    counts = result.counts()
    result.exit_code = 1 if counts[FAIL] else 0
    lines.append("totals " + " ".join(f"{k}={v}" for k, v in counts.items()))
    lines.append(f"exit {result.exit_code}")
    if report is not None:
        report["assertions"] = [a.to_dict() for a in assertions]
        write_json(os.path.join(out_dir, "report.json"), report)
    atomic_write(os.path.join(out_dir, "summary.txt"), "\n".join(lines) + "\n")
    return result


# -- suites ----------------------------------------------------------------------

def _suite_worker(path, root):
    cfg = cfgmod.load(path)
    res = run_experiment(cfg, os.path.join(root, cfg.name))
    return res.name, res.exit_code, res.counts(), res.error


def load_manifest(path) -> list:
    text = open(path, encoding="utf-8").read()
    try:
        data = cfgmod.tomllib.loads(text)
    except cfgmod.tomllib.TOMLDecodeError as exc:
        raise cfgmod.ParseError(f"{path}: {exc}") from None
    entries = data.get("suite", {}).get("configs", [])
    if not isinstance(entries, list):
        raise ConfigError("[suite].configs must be a list")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for entry in entries:
        cand = os.path.join(base, entry)
        out.append(cand if os.path.isfile(cand) else cfgmod.resolve(entry))
    return out


def suite(paths, root=None, workers=None) -> tuple[int, list]:
    """Run configs in parallel processes; exit code 1 iff any FAIL or error."""
    root = root or artifact_root()
    for p in paths:
        cfgmod.load(p)  # validate everything before any compute
    results = []
    if paths:
        workers = workers or min(len(paths), os.cpu_count() or 1)
        if workers == 1:
            results = [_suite_worker(p, root) for p in paths]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_suite_worker, paths, [root] * len(paths)))
    lines = []
    bad = False
    for name, code, counts, err in results:
        bad |= code != 0
        tail = f" error: {err}" if err else ""
        lines.append(f"{name:<24} exit {code} " +
                     " ".join(f"{k}={v}" for k, v in counts.items()) + tail)
    total = {k: sum(c[k] for _, _, c, _ in results) for k in (PASS, FAIL, NA, UNCONVERGED)}
    lines.append("totals " + " ".join(f"{k}={v}" for k, v in total.items()))
    code = 1 if bad else 0
    lines.append(f"exit {code}")
    os.makedirs(root, exist_ok=True)
    atomic_write(os.path.join(root, "suite_summary.txt"), "\n".join(lines) + "\n")
    return code, results


def print_summary(out_dir, stream=None):
    stream = stream or sys.stdout
    with open(os.path.join(out_dir, "summary.txt")) as fh:
        stream.write(fh.read())


__all__ = ["Assertion", "RunResult", "artifact_root", "build", "orders", "refinement_study",
           "run_experiment", "suite", "to_json"]
