"""Command-line front end.

Subcommands: validate (instance file checks), solve (one relaxation level,
with certificate extraction on infeasibility), round (the rounding
heuristic with CSV/JSON/figure reports), and reproduce (the scripted
experiment families).

Exit codes: 0 success/feasible, 2 invalid input, 3 certified infeasible,
4 undetermined.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import certify, conic, plots, relax, reproduce, rounding
from .instance import (AmbiguousSpectrumError, InvalidInstanceError,
                       load_instance, residuals, CandidateSolution)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_UNDETERMINED = 4


def _load(path):
    try:
        return load_instance(path), None
    except FileNotFoundError:
        return None, f"no such file: {path}"
    except json.JSONDecodeError as exc:
        return None, f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
    except (InvalidInstanceError, AmbiguousSpectrumError) as exc:
        return None, f"invalid instance: {exc}"


def cmd_validate(args) -> int:
    inst, err = _load(args.path)
    if err:
        print(err, file=sys.stderr)
        return EXIT_INVALID
    print(f"valid instance: n={inst.n}, q={inst.q}, ell={inst.ell}, "
          f"label={inst.label!r}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst, err = _load(args.path)
    if err:
        print(err, file=sys.stderr)
        return EXIT_INVALID
    os.makedirs(args.out, exist_ok=True)
    try:
        program, layout = relax.build_level(inst, args.level, size_cap=args.size_cap)
    except relax.MomentSizeError as exc:
        print(f"refusing to build: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sol = conic.solve(program, eps=args.eps, max_iter=args.max_iter, seed=args.seed)

    if sol.status == conic.OPTIMAL:
        point = relax.decode(layout, sol.x)
        rec = residuals(inst, CandidateSolution(Z=point.Z, X=point.X))
        out_path = os.path.join(args.out, "solution.json")
        with open(out_path, "w") as f:
            json.dump({
                "level": args.level, "status": sol.status,
                "Z": [Zi.tolist() for Zi in point.Z], "X": point.X.tolist(),
                "membership_residuals": rec.as_dict(),
                "solver_residuals": sol.residual_report(),
                "iterations": sol.iterations,
            }, f, indent=1)
        print(f"feasible at {args.level}: wrote {out_path} "
              f"(membership residual {rec.max():.2e})")
        return EXIT_OK

    if sol.status == conic.PRIMAL_INFEASIBLE:
        ok, rep = conic.verify_farkas(program, sol.certificate, certify.VERIFY_TOL)
        cert_path = os.path.join(args.out, "certificate.json")
        if args.level == relax.LEVEL_R1:
            res = certify.certify_r1_infeasible(inst, eps=args.eps,
                                                max_iter=args.max_iter)
            if res.found:
                certify.save_cert1(inst, res, cert_path)
                print(f"certified infeasible at r1: structured certificate "
                      f"passed verification (residuals {res.residuals}); "
                      f"wrote {cert_path}")
                return EXIT_INFEASIBLE
        if ok:
            report = certify.FarkasReport(level=args.level, verified=True,
                                          solver_status=sol.status, residuals=rep,
                                          witness=sol.certificate)
            certify.save_farkas(inst, report, cert_path)
            print(f"certified infeasible at {args.level}: Farkas witness "
                  f"verified (dual distance {rep['dual_dist']:.2e}); wrote {cert_path}")
            return EXIT_INFEASIBLE
        print("solver reported infeasibility but the witness failed "
              "re-verification; treating as undetermined", file=sys.stderr)
        return EXIT_UNDETERMINED

    print(f"undetermined: solver status {sol.status} after {sol.iterations} "
          f"iterations ({sol.message})")
    return EXIT_UNDETERMINED


def cmd_round(args) -> int:
    inst, err = _load(args.path)
    if err:
        print(err, file=sys.stderr)
        return EXIT_INVALID
    os.makedirs(args.out, exist_ok=True)
    try:
        report = rounding.round_many(inst, args.level, trials=args.trials,
                                     base_seed=args.seed, eps=args.eps,
                                     max_iter=args.max_iter, tau=args.tau,
                                     jobs=args.jobs)
    except relax.MomentSizeError as exc:
        print(f"refusing to build: {exc}", file=sys.stderr)
        return EXIT_INVALID
    base = os.path.join(args.out, f"round_{args.level}")
    report.save_csv(base + ".csv")
    report.save_json(base + ".json")
    plots.render_success_rates({args.level: (report.successes, report.trials)},
                               base + ".png",
                               title=f"rounding success, {inst.label}")
    print(f"{report.successes}/{report.trials} trials accepted at {args.level}; "
          f"wrote {base}.csv/.json/.png")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = args.out
    common = dict(jobs=args.jobs)
    if args.experiment == "grid-s3":
        summary = reproduce.experiment_grid_s3(
            out, ell=args.l, seed=args.seed, resolution=args.resolution, **common)
    elif args.experiment in ("sturm5-int", "sturm5-squares"):
        summary = reproduce.experiment_sturm5(
            out, variant=args.experiment.split("-")[1], trials=args.trials,
            base_seed=args.seed, **common)
    elif args.experiment in ("toeplitz5", "toeplitz8"):
        summary = reproduce.experiment_toeplitz(
            out, n=int(args.experiment[-1]), trials=args.trials,
            base_seed=args.seed, **common)
    elif args.experiment == "octahedral":
        summary = reproduce.experiment_octahedral(
            out, n=args.n, p=args.p, seeds=args.seeds, **common)
    elif args.experiment == "prop2":
        lo, hi = args.ell_range
        summary = reproduce.experiment_prop2(
            out, n=args.n, ell_lo=lo, ell_hi=hi, reps=args.reps,
            base_seed=args.seed, **common)
    else:
        print(f"unknown experiment {args.experiment!r}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps(summary, indent=1, default=str))
    return EXIT_OK


def _ell_range(text: str):
    try:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO..HI, e.g. 8..15")
    if lo > hi:
        raise argparse.ArgumentTypeError("range must satisfy LO <= HI")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ieprelax",
        description="Semidefinite relaxations, infeasibility certificates, and "
                    "rounding heuristics for affine inverse eigenvalue problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("validate", help="check an instance JSON file")
    pv.add_argument("path")
    pv.set_defaults(func=cmd_validate)

    def solver_flags(p):
        p.add_argument("--eps", type=float, default=conic.DEFAULT_EPS)
        p.add_argument("--max-iter", type=int, default=conic.DEFAULT_MAX_ITER)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--size-cap", type=int, default=relax.MOMENT_SIZE_CAP,
                       help="refuse moment blocks larger than this order")

    ps = sub.add_parser("solve", help="solve one relaxation level")
    ps.add_argument("path")
    ps.add_argument("--level", choices=relax.LEVELS, default=relax.LEVEL_R1)
    solver_flags(ps)
    ps.set_defaults(func=cmd_solve)

    pr = sub.add_parser("round", help="random-functional rounding trials")
    pr.add_argument("path")
    pr.add_argument("--level", choices=relax.LEVELS, default=relax.LEVEL_R1)
    pr.add_argument("--trials", type=int, default=100)
    pr.add_argument("--tau", type=float, default=rounding.ACCEPT_TOL,
                    help="acceptance tolerance on residuals and spectrum")
    pr.add_argument("--jobs", type=int, default=1)
    solver_flags(pr)
    pr.set_defaults(func=cmd_round)

    pp = sub.add_parser("reproduce", help="run a scripted experiment")
    pp.add_argument("experiment",
                    choices=["grid-s3", "sturm5-int", "sturm5-squares",
                             "toeplitz5", "toeplitz8", "octahedral", "prop2"])
    pp.add_argument("--out", default="reports", help="output directory")
    pp.add_argument("--jobs", type=int, default=1)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--l", type=int, choices=(2, 3), default=3,
                    help="random constraint count for grid-s3")
    pp.add_argument("--resolution", type=int, default=21)
    pp.add_argument("--trials", type=int, default=100)
    pp.add_argument("--n", type=int, default=None)
    pp.add_argument("--p", type=float, default=0.2)
    pp.add_argument("--seeds", type=int, default=10)
    pp.add_argument("--ell-range", type=_ell_range, default=(8, 15))
    pp.add_argument("--reps", type=int, default=20)
    pp.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "reproduce":
        if args.n is None:
            args.n = 20 if args.experiment == "octahedral" else 5
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
