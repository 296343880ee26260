"""Command line entry point: ``maxchoice simulate|theory|clt|verify``.

Exit status is 0 when every check passes, 1 on a statistical failure and 2
on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import clt_theory, maxdeg_theory
from .config import ConfigError, load_config
from .harness import hub_report, run_ensemble, run_single, verify_clt, verify_onestep

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def cmd_simulate(args, cfg):
    run = cfg.run
    os.makedirs(args.out, exist_ok=True)
    if run.replicas == 1:
        traj = run_single(run, out=os.path.join(args.out, "trajectory.csv"),
                          snapshot=os.path.join(args.out, "snapshot.csv") if args.snapshot else None)
        print(f"n={int(traj.n[-1])} M={int(traj.M[-1])} leader changes={traj.total_leader_changes}")
    else:
        res = run_ensemble(run, out_dir=args.out, workers=args.workers)
        print(f"{len(res.trajectories)} replicas written to {args.out}")
    return EXIT_OK


def cmd_theory(args, cfg):
    report = maxdeg_theory.classify_regime(cfg.run.params)
    print(report.text())
    print()
    print(report.CSV_HEADER)
    print(report.csv_row())
    return EXIT_OK


def cmd_clt(args, cfg):
    report = clt_theory.clt_report(args.k, cfg.run.params)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "rho_star.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l", "x_star_l", "residual"])
        for l, (x, r) in enumerate(zip(report.rho.values, report.rho.residuals), start=1):
            w.writerow([l, repr(float(x)), repr(float(r))])
    with open(os.path.join(args.out, "matrices.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["matrix", "row", "col", "value"])
        for name, mat in (("jacobian", report.jacobian), ("noise", report.noise), ("limit", report.limit)):
            for i in range(report.k):
                for j in range(report.k):
                    w.writerow([name, i + 1, j + 1, repr(float(mat[i, j]))])
    print(report.text())
    return EXIT_OK


def cmd_verify(args, cfg):
    v = cfg.verify
    params = cfg.run.params
    if args.check == "onestep":
        if "degrees" not in v:
            raise ConfigError("[verify] needs `degrees` for the one-step check")
        rep = verify_onestep(v["degrees"], params, int(v.get("trials", 10**6)), seed=cfg.run.master_seed,
                             enumerate_check=len(v["degrees"]) <= 12 and params.d.max_value <= 6)
        lines, ok = rep.lines(), rep.passed
    elif args.check == "clt":
        rep = verify_clt(params, int(v.get("k", 1)), int(v.get("n", 10**5)), int(v.get("replicas", 4000)),
                         seed=cfg.run.master_seed, workers=args.workers or cfg.run.workers)
        lines, ok = rep.lines(), rep.passed
    else:
        res = run_ensemble(cfg.run, workers=args.workers)
        hub = hub_report(res.trajectories)
        threshold = float(v.get("hub_threshold", 0.9))
        ok = hub.stable_fraction >= threshold and hub.trend_ok
        lines = hub.lines() + [f"threshold {threshold:g}, decade trend "
                               f"{'non-increasing' if hub.trend_ok else 'increasing'}",
                               "PASS" if ok else "FAIL"]
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxchoice", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="grow trees and write trajectory CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--snapshot", action="store_true", help="also write the final vertex_id,degree table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("theory", help="regime and maximal-degree prediction")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("clt", help="fixed point, Jacobian, noise and limit covariance")
    p.add_argument("--config", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("verify", help="statistical checks of simulation against theory")
    p.add_argument("check", choices=["onestep", "clt", "hub"])
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
