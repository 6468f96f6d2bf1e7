"""Command-line entry point.

Subcommands::

    bidirelay solve instance.json [--scheme proposed] [--out result.json]
    bidirelay sweep scenario.json [--seed S] [--trials T] [--threads K] [--out table.csv]
    bidirelay outage scenario.json ...
    bidirelay region scenario.json ...
    bidirelay oracle-check scenario.json ...

Exit status is 0 on success, 1 when ``oracle-check`` finds a mismatch and 2
for bad input or any other error (with a message on stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .experiments import runner
from .experiments.scenario import ScenarioConfig
from .solver.core import SCHEME_ROLES
from .types import MODES, ProblemInstance, Role

log = logging.getLogger("bidirelay")


def _json_float(x: float):
    return float(format(x, ".9g")) if math.isfinite(x) else None


def _outcome_doc(inst: ProblemInstance, scheme: str, out) -> dict:
    p1, p2 = out.allocation.power_arrays()
    return {
        "scheme": scheme,
        "status": out.status,
        "outage": out.outage,
        "rate_a": _json_float(out.rate_a),
        "rate_b": _json_float(out.rate_b),
        "objective": _json_float(out.objective),
        "dual_value": _json_float(out.dual_value),
        "gap_estimate": _json_float(out.gap_estimate),
        "iterations": out.iterations,
        "per_mode_rates": {f"{u}/{m}": _json_float(out.per_mode_rates[(u, m)])
                           for u in ("A", "B") for m in MODES},
        "node_power_used": {k: _json_float(v) for k, v in out.allocation.node_power_used.items()},
        "roles": [Role(r).label for r in out.allocation.roles()],
        "power_first": [_json_float(v) for v in p1],
        "power_second": [_json_float(v) for v in p2],
    }


def cmd_solve(args) -> int:
    inst = ProblemInstance.load(args.path)
    out = runner.run_scheme(inst, args.scheme)
    text = json.dumps(_outcome_doc(inst, args.scheme, out), indent=1) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise runner.OutputError(f"cannot write {args.out}: {exc}") from exc
    return 0


def _scenario(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.path)
    return cfg.with_overrides(seed=args.seed, n_trials=args.trials)


def _destination(args, cfg: ScenarioConfig):
    return args.out if args.out is not None else cfg.output


def cmd_sweep(args) -> int:
    cfg = _scenario(args)
    errors: list[str] = []
    table = runner.sweep(cfg, threads=args.threads, errors=errors)
    for msg in errors:
        log.warning("trial failed: %s", msg)
    if args.command == "outage":
        table = runner.outage_table(table)
    runner.emit_csv(table, _destination(args, cfg))
    return 0


def cmd_region(args) -> int:
    cfg = _scenario(args)
    runner.emit_csv(runner.region_table(cfg, threads=args.threads), _destination(args, cfg))
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _scenario(args)
    table = runner.oracle_table(cfg, threads=args.threads, tol=args.tol)
    runner.emit_csv(table, _destination(args, cfg))
    rows = table.as_dicts()
    bad = [r for r in rows if not (r["within_tol"] and r["below_dual"])]
    worst = max((r["rel_gap"] for r in rows), default=0.0)
    log.info("oracle-check: %d instances, worst relative gap %.4g", len(rows), worst)
    if bad:
        log.error("oracle-check: %d of %d instances outside tolerance %.3g",
                  len(bad), len(rows), args.tol)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bidirelay", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("path", help="instance JSON")
    p.add_argument("--scheme", choices=sorted(SCHEME_ROLES), default="proposed")
    p.add_argument("--out", default=None, help="output JSON (default stdout)")
    p.set_defaults(func=cmd_solve)

    for name, func, text in (
        ("sweep", cmd_sweep, "Monte Carlo sweep, one CSV row per cell and scheme"),
        ("outage", cmd_sweep, "outage fractions of a sweep"),
        ("region", cmd_region, "equal-power set-basis versus pairing comparison"),
        ("oracle-check", cmd_oracle_check, "solver versus exhaustive search on small instances"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("path", help="scenario JSON")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--trials", type=int, default=None, help="override n_trials")
        p.add_argument("--out", default=None, help="output CSV (default: scenario output or stdout)")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        if name == "oracle-check":
            p.add_argument("--tol", type=float, default=0.05, help="relative gap tolerance")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        # bad input files, invalid settings and unwritable outputs
        print(f"bidirelay {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"bidirelay {args.command}: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
