"""Command line: ``deal run|theorem1|gradcheck|report``.

Exit codes: 0 success, 1 gradient check failed, 2 configuration error,
3 runtime failure inside an experiment cell.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from .. import grad as ad
from ..errors import ConfigError
from ..numerics import Rng
from ..svd_analysis import theorem1_demo
from .config import ExperimentConfig
from .experiment import OUT_ENV, RESULTS, SUMMARY, CellFailure, out_dir_for, read_records, run_experiment, summary_table

EXIT_OK, EXIT_GRAD, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
THEOREM1_STREAM = 9200


def _cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.workers is not None:
            cfg.workers = args.workers
        cfg.cells()
    except ConfigError as e:
        print(f"config error [{e.key}]: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = out_dir_for(cfg, args.out)
    try:
        records = run_experiment(cfg, out)
    except CellFailure as e:
        print(f"runtime error in {e.cell_id}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(summary_table(records))
    print(f"\n{len(records)} records -> {out / RESULTS}; summary -> {out / SUMMARY}")
    return EXIT_OK


def _cmd_theorem1(args) -> int:
    if not (1 <= args.rank_x < min(args.n_x, args.r)) or args.trials < 1 or any(s < 0 for s in args.noise):
        print("invalid dimensions: need 1 <= rank_x < min(n_x, r), trials >= 1, noise >= 0", file=sys.stderr)
        return EXIT_CONFIG
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for level, noise in enumerate(args.noise):
            for trial in range(args.trials):
                rng = Rng(args.seed, (THEOREM1_STREAM, level, trial))
                angle = theorem1_demo(args.n_x, args.r, args.rank_x, noise, rng)
                rec = {"noise_std": noise, "trial": trial, "angle": angle, "n_x": args.n_x, "r": args.r,
                       "rank_x": args.rank_x, "seed": args.seed}
                out.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


@contextmanager
def corrupted_adjoint(op: str, factor: float = 1.5):
    """Temporarily scale one primitive's adjoint (negative control for gradcheck)."""
    if op not in ad.ADJOINTS:
        raise KeyError(f"no adjoint registered for {op!r}")
    original = ad.ADJOINTS[op]

    def broken(g, node):
        return [None if x is None else factor * x for x in original(g, node)]

    ad.ADJOINTS[op] = broken
    try:
        yield
    finally:
        ad.ADJOINTS[op] = original


def gradcheck_report(seed: int, seeds: int) -> tuple[int, list[str]]:
    from ..gradcheck import TOLERANCE, run_suite, worst

    cases = run_suite(seeds=range(seed, seed + seeds))
    lines = [f"n={c.n:<3} r={c.r:<2} K={c.layers} seed={c.seed}: max rel err {c.max_rel_error:.3e} ({c.worst_param})"
             for c in cases]
    w = worst(cases)
    ok = w.max_rel_error <= TOLERANCE
    lines.append(f"worst offender: {w.worst_param} (n={w.n}, r={w.r}, K={w.layers}, seed={w.seed}) "
                 f"rel err {w.max_rel_error:.3e} -> {'PASS' if ok else 'FAIL'} at {TOLERANCE:g}")
    return (EXIT_OK if ok else EXIT_GRAD), lines


def _cmd_gradcheck(args) -> int:
    if args.corrupt:
        with corrupted_adjoint(args.corrupt):
            code, lines = gradcheck_report(args.seed, args.seeds)
    else:
        code, lines = gradcheck_report(args.seed, args.seeds)
    print("\n".join(lines))
    return code


def _cmd_report(args) -> int:
    try:
        records = read_records(args.results)
    except (OSError, json.JSONDecodeError) as e:
        print(f"cannot read {args.results}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(summary_table(records))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deal", description="Continual LoRA fine-tuning experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config")
    run.add_argument("--out", help=f"output directory (overrides {OUT_ENV} and the config)")
    run.add_argument("--workers", type=int)
    run.set_defaults(func=_cmd_run)

    th = sub.add_parser("theorem1", help="principal-angle samples as JSON Lines")
    th.add_argument("--n-x", type=int, default=12)
    th.add_argument("--r", type=int, default=8)
    th.add_argument("--rank-x", type=int, default=3)
    th.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.5])
    th.add_argument("--trials", type=int, default=100)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--output", help="write here instead of stdout")
    th.set_defaults(func=_cmd_theorem1)

    gc = sub.add_parser("gradcheck", help="reverse-mode vs central-difference audit")
    gc.add_argument("--seed", type=int, default=0, help="first seed")
    gc.add_argument("--seeds", type=int, default=5, help="number of seeds")
    gc.add_argument("--corrupt", metavar="PRIMITIVE", help=argparse.SUPPRESS)
    gc.set_defaults(func=_cmd_gradcheck)

    rp = sub.add_parser("report", help="summary table from a results file")
    rp.add_argument("results")
    rp.set_defaults(func=_cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
