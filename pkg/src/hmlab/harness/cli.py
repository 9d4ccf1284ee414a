"""Command line entry point ``lab``.

Exit codes: 0 success, 1 at least one FAIL, 2 config parse error,
3 validation error, 4 chart exit, 5 numerical instability.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from hmlab import kernels
from hmlab.errors import LabError
from hmlab.geodesics import GeodesicState, conservation_audit, integrate_trajectory
from hmlab.geometry import TargetChart
from hmlab.harness import config as cfgmod
from hmlab.harness import runner
from hmlab.harness.io import write_csv, write_json
from hmlab.potentials import Potential


def _cmd_run(args):
    cfg = cfgmod.load(args.config)
    res = runner.run_experiment(cfg, args.out)
    runner.print_summary(res.out_dir)
    if res.error:
        print(res.error, file=sys.stderr)
    return res.exit_code


def _cmd_refine(args):
    cfg = cfgmod.load(args.config)
    study = runner.refinement_study(cfg, args.levels, args.metric or None)
    out = args.out or os.path.join(runner.artifact_root(), cfg.name + "-refine")
    runner._write_refinement(out, study)
    write_json(os.path.join(out, "refinement.json"),
               {"schema_version": runner.SCHEMA_VERSION, "experiment": cfg.name, **study})
    print(f"{'h':>12} " + " ".join(f"{m:>22}" for m in study["errors"]))
    for k, h in enumerate(study["h"]):
        cells = []
        for m in study["errors"]:
            o = study["orders"][m][k - 1] if k else float("nan")
            cells.append(f"{study['errors'][m][k]:>12.4e} ({o:5.2f})")
        print(f"{h:>12.6g} " + " ".join(f"{c:>22}" for c in cells))
    return 0


def _cmd_suite(args):
    paths = runner.load_manifest(args.manifest)
    code, _ = runner.suite(paths, args.out, args.workers)
    with open(os.path.join(args.out or runner.artifact_root(), "suite_summary.txt")) as fh:
        sys.stdout.write(fh.read())
    return code


def _cmd_geodesic(args):
    chart = TargetChart(args.dim, args.target, args.curvature_scale)
    pot = Potential(args.potential, tuple(args.coefficients))
    y0 = np.array(args.position, dtype=float)
    v0 = np.array(args.velocity, dtype=float)
    traj = integrate_trajectory(chart, pot, GeodesicState(y0, v0), args.dt, args.t_end,
                                store_every=args.store_every)
    audit = conservation_audit(traj)
    out = args.out or os.path.join(runner.artifact_root(), "geodesic")
    write_csv(os.path.join(out, "trajectory.csv"), *traj.rows())
    print(f"steps {len(traj.times) - 1}  t_end {traj.times[-1]:.17g}  "
          f"max |H - H0| {audit.max_drift:.3e}  truncated {traj.truncated}")
    if traj.truncated:
        print(traj.message, file=sys.stderr)
        return 4
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log flow progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config", help="config file or bundled config name")
    r.add_argument("--out", help="artifact directory (default: $HMLAB_ARTIFACT_ROOT/<name>)")
    r.set_defaults(func=_cmd_run)

    f = sub.add_parser("refine", help="refinement study at h, h/2, ...")
    f.add_argument("config")
    f.add_argument("--levels", type=int, default=3)
    f.add_argument("--metric", action="append", choices=cfgmod.REFINE_METRICS)
    f.add_argument("--out")
    f.set_defaults(func=_cmd_refine)

    s = sub.add_parser("suite", help="run every config of a manifest")
    s.add_argument("manifest")
    s.add_argument("--workers", type=int)
    s.add_argument("--out", help="artifact root for the suite")
    s.set_defaults(func=_cmd_suite)

    g = sub.add_parser("geodesic", help="integrate a geodesic with potential")
    g.add_argument("--target", default="euclidean")
    g.add_argument("--dim", type=int, default=1)
    g.add_argument("--curvature-scale", type=float, default=1.0)
    g.add_argument("--potential", default="zero")
    g.add_argument("--coefficients", type=float, nargs="*", default=[])
    g.add_argument("--position", type=float, nargs="+", required=True)
    g.add_argument("--velocity", type=float, nargs="+", required=True)
    g.add_argument("--dt", type=float, default=1e-3)
    g.add_argument("--t-end", type=float, default=1.0)
    g.add_argument("--store-every", type=int, default=1)
    g.add_argument("--out")
    g.set_defaults(func=_cmd_geodesic)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger(__name__).debug("flow backend: %s", kernels.BACKEND)
    try:
        return args.func(args)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
