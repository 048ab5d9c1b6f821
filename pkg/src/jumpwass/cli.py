"""Command-line front end.

::

    jumpwass verify    --scenario S.json [--seed N] [--paths N] [--steps N] [--threads N] [--out DIR] [--format json|csv]
    jumpwass constants --scenario S.json [...]
    jumpwass sweep     --scenario S.json --param xstar.sigma.c --values 0.1,0.2,0.3 [...]
    jumpwass distances --scenario S.json [...]

Exit codes: ``0`` success (all verdicts pass or inconclusive), ``1`` a bound
inequality is violated (artifacts are written first), ``2`` invalid input or
a failed run.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .pipeline import (EXIT_OK, REPORT_COLUMNS, SWEEP_COLUMNS, format_cell, dumps_json, provenance, run_constants,
                       run_distances, run_sweep, run_verify)
from .scenario import ScenarioError, load_scenario

__all__ = ["main", "build_parser"]

EXIT_ERROR = 2
log = logging.getLogger("jumpwass")


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, metavar="PATH", help="scenario JSON file")
    common.add_argument("--seed", type=_u64, help="override grid.seed")
    common.add_argument("--paths", type=_positive, help="override grid.n_paths")
    common.add_argument("--steps", type=_positive, help="override grid.n_steps")
    common.add_argument("--threads", type=_positive, help="worker threads for path simulation")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides outputs.dir)")
    common.add_argument("--format", choices=("json", "csv"), help="format of the summary printed to stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="jumpwass", description="Wasserstein bounds for jump-diffusions")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="simulate, evaluate all bounds and their verdicts")
    sub.add_parser("constants", parents=[common], help="estimate (or load cached) flow constants of X*")
    sw = sub.add_parser("sweep", parents=[common], help="re-run verify over values of one scenario field")
    sw.add_argument("--param", required=True, help="dotted scenario field, e.g. xstar.sigma.c")
    sw.add_argument("--values", required=True, type=_float_list, help="comma-separated values")
    sub.add_parser("distances", parents=[common], help="distances between terminal laws and jump measures")
    return parser


def _emit_rows(columns, rows, fmt: str) -> None:
    if fmt == "csv":
        w = csv.writer(sys.stdout)
        w.writerow(columns)
        for r in rows:
            w.writerow([format_cell(r.get(c)) for c in columns])
    else:
        sys.stdout.write(dumps_json(rows if len(rows) != 1 else rows[0]))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        scenario = load_scenario(args.scenario).with_overrides(
            seed=args.seed, paths=args.paths, steps=args.steps, threads=args.threads, out=args.out, fmt=args.format)
    except (OSError, ScenarioError) as exc:
        print(f"jumpwass: {exc}", file=sys.stderr)
        return EXIT_ERROR
    fmt = scenario.outputs.format
    try:
        if args.command == "verify":
            res = run_verify(scenario)
            if fmt == "csv":
                row = dict(provenance(scenario), n_paths=scenario.grid.n_paths,
                           aborted=res.report.metadata["aborted"], **res.report.csv_row())
                _emit_rows(REPORT_COLUMNS, [row], "csv")
            else:
                sys.stdout.write(dumps_json(res.report.to_json()))
            for name, verdict in sorted(res.report.verdicts.items()):
                log.info("%s: %s", name, verdict)
            if res.exit_code != EXIT_OK:
                print("jumpwass: bound violated: " + ", ".join(
                    k for k, v in sorted(res.report.verdicts.items()) if v == "violated"), file=sys.stderr)
            return res.exit_code
        if args.command == "constants":
            consts, hit = run_constants(scenario)
            log.info("constants cache %s", "hit" if hit else "miss")
            out = dict(consts.to_json(), cache_hit=hit)
            if fmt == "csv":
                _emit_rows(("A1", "A2", "B1", "B2", "B3", "C1", "C2", "C3"), [out], "csv")
            else:
                sys.stdout.write(dumps_json(out))
            return EXIT_OK
        if args.command == "sweep":
            rows = run_sweep(scenario, args.param, args.values)
            _emit_rows(SWEEP_COLUMNS, rows, fmt)
            return EXIT_OK
        if args.command == "distances":
            out = run_distances(scenario)
            if fmt == "csv":
                _emit_rows(tuple(out), [out], "csv")
            else:
                sys.stdout.write(json.dumps(out, sort_keys=True, indent=2) + "\n")
            return EXIT_OK
    except (ScenarioError, ValueError, RuntimeError) as exc:
        print(f"jumpwass: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
