"""Monte Carlo sweeps over SNR, QoS and relay position, written as CSV.

Work is split into one unit per (relay position, trial): the unit draws the
channels once and solves every (SNR, QoS, scheme) combination on them.  Units
run in a process pool when more than one worker is requested; results are
keyed and reduced in a fixed order, so the CSV bytes do not depend on the
number of workers or on scheduling.
"""

from __future__ import annotations

import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import oracle
from ..channel import generate_channels
from ..solver.core import SCHEME_ROLES, SolverOptions, solve
from ..solver.verify import budget_excess, coupling_violation
from ..types import MODES, ProblemInstance, Role, SolveOutcome
from .scenario import ScenarioConfig

_MODE_KEY = {"direct": "direct", "one-way": "oneway", "two-way": "twoway"}
_MODE_OF_ROLE = np.array([0, 0, 1, 1, 1, 1, 2, 2, 3])  # last bucket: idle


class OutputError(OSError):
    pass


@dataclass(frozen=True)
class ResultTable:
    """Column names and rows of a result CSV."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...] = ()

    def as_dicts(self) -> list[dict]:
        return [dict(zip(self.columns, row)) for row in self.rows]


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def csv_text(table: ResultTable) -> str:
    """CSV rendering of ``table``: header, then one line per row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def emit_csv(table: ResultTable, path: str | Path | None) -> str:
    """Write ``table`` as CSV (floats with 9 significant digits).

    ``path`` of ``None`` or ``"-"`` writes to standard output.  Returns the
    text written.
    """
    text = csv_text(table)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return text
    path = Path(path)
    try:
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write results to {path}: {exc}") from exc
    return text


def read_csv(path: str | Path) -> ResultTable:
    """Parse a file written by :func:`emit_csv`; numeric fields become floats."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = tuple(next(reader))
        rows = []
        for raw in reader:
            row = []
            for v in raw:
                try:
                    row.append(float(v))
                except ValueError:
                    row.append(v)
            rows.append(tuple(row))
    return ResultTable(columns, tuple(rows))


def run_scheme(inst: ProblemInstance, scheme: str, **options) -> SolveOutcome:
    """Solve ``inst`` with the role set of ``scheme``.

    ``"proposed"`` uses all eight roles, ``"BM2"`` drops two-way relaying
    (seven multipliers) and ``"BM1"`` keeps direct transmission only (four).
    """
    return solve(inst, SolverOptions.for_scheme(scheme, **options))


def instance_for(cfg: ScenarioConfig, channels, snr_db: float,
                 qos: tuple[float, float]) -> ProblemInstance:
    p = 10.0 ** (snr_db / 10.0)
    return ProblemInstance(channels, cfg.weights[0], cfg.weights[1], qos[0], qos[1], p, p, p)


# ---------------------------------------------------------------------------
# sweep

SWEEP_COLUMNS = (
    "scheme", "snr_db", "relay_pos", "r_a", "r_b", "n_trials", "n_failed", "n_outage",
    "outage_frac", "mean_sum_rate", "mean_sum_rate_served", "mean_rate_a", "mean_rate_b",
    "subc_direct", "subc_oneway", "subc_twoway", "subc_idle",
    "share_direct", "share_oneway", "share_twoway",
    "rate_a_direct", "rate_a_oneway", "rate_a_twoway",
    "rate_b_direct", "rate_b_oneway", "rate_b_twoway",
    "mean_iterations", "converged_frac", "certified_frac", "mean_gap", "max_budget_excess",
    "max_coupling_violation", "flag",
)


def _trial_record(inst: ProblemInstance, out: SolveOutcome) -> dict:
    counts = np.bincount(_MODE_OF_ROLE[out.allocation.roles()], minlength=4)
    return {
        "ok": True,
        "outage": out.outage,
        "rate_a": out.rate_a,
        "rate_b": out.rate_b,
        "modes": {(u, m): out.per_mode_rates[(u, m)] for u in ("A", "B") for m in MODES},
        "counts": counts.tolist(),
        "iterations": out.iterations,
        "converged": out.converged,
        "certified": out.status == "infeasible",
        "gap": out.gap_estimate,
        "budget_excess": budget_excess(inst, out),
        "coupling": coupling_violation(inst, out),
    }


def _run_unit(args) -> list[tuple[tuple, dict]]:
    cfg, position, trial = args
    channels = generate_channels(cfg.channel_config(position, trial))
    results = []
    for snr in cfg.snr_grid:
        for qos in cfg.qos:
            inst = instance_for(cfg, channels, snr, qos)
            for scheme in cfg.schemes:
                key = (scheme, snr, position, qos)
                try:
                    out = run_scheme(inst, scheme, iter_cap=cfg.iter_cap, stop_tol=cfg.stop_tol)
                    rec = _trial_record(inst, out)
                except Exception as exc:  # a failed trial is flagged, the sweep goes on
                    rec = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
                results.append((key, rec))
    return results


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else math.nan


def _aggregate(key: tuple, recs: list[dict], n_trials: int) -> tuple:
    scheme, snr, position, (r_a, r_b) = key
    ok = [r for r in recs if r["ok"]]
    served = [r for r in ok if not r["outage"]]
    n_outage = sum(r["outage"] for r in ok)
    sums = [r["rate_a"] + r["rate_b"] for r in ok]
    served_sums = [r["rate_a"] + r["rate_b"] for r in served]

    counts = [_mean([r["counts"][i] for r in served]) for i in range(4)]
    mode_tot = {m: math.fsum(r["modes"][(u, m)] for r in served for u in ("A", "B")) for m in MODES}
    grand = math.fsum(mode_tot.values())
    shares = [mode_tot[m] / grand if grand > 0 else math.nan for m in MODES]
    per_user = [_mean([r["modes"][(u, m)] for r in served]) for u in ("A", "B") for m in MODES]
    flag = "ok" if len(ok) == len(recs) else ("failed" if not ok else "partial")
    return (
        scheme, snr, position, r_a, r_b, n_trials, len(recs) - len(ok), n_outage,
        n_outage / len(ok) if ok else math.nan,
        _mean(sums), _mean(served_sums),
        _mean([r["rate_a"] for r in ok]), _mean([r["rate_b"] for r in ok]),
        *counts, *shares, *per_user,
        _mean([r["iterations"] for r in ok]),
        _mean([float(r["converged"]) for r in ok]),
        _mean([float(r["certified"]) for r in ok]),
        _mean([r["gap"] for r in served]),
        max((r["budget_excess"] for r in ok), default=math.nan),
        max((r["coupling"] for r in ok), default=math.nan),
        flag,
    )


def _map_units(fn, units: list, threads: int) -> Iterable:
    if threads <= 1 or len(units) <= 1:
        return map(fn, units)
    pool = ProcessPoolExecutor(max_workers=threads)
    try:
        return list(pool.map(fn, units, chunksize=max(1, len(units) // (4 * threads))))
    finally:
        pool.shutdown()


_SCHEME_ORDER = {s: i for i, s in enumerate(("proposed", "BM2", "BM1"))}


def _cell_order(key: tuple) -> tuple:
    scheme, snr, position, qos = key
    return (position, qos, snr, _SCHEME_ORDER[scheme])


def sweep(cfg: ScenarioConfig, threads: int = 1, errors: list | None = None) -> ResultTable:
    """Run every cell of the scenario and aggregate one row per cell and scheme.

    Rows are sorted by relay position, QoS point, SNR and scheme.  Trials that
    raise are counted in ``n_failed`` and their messages appended to
    ``errors`` when given.
    """
    units = [(cfg, pos, t) for pos in cfg.relay_positions for t in range(cfg.n_trials)]
    cells: dict[tuple, list[dict]] = {}
    for unit_results in _map_units(_run_unit, units, threads):
        for key, rec in unit_results:
            cells.setdefault(key, []).append(rec)
            if not rec["ok"] and errors is not None:
                errors.append(f"{key}: {rec['error']}")
    rows = [_aggregate(k, cells[k], cfg.n_trials) for k in sorted(cells, key=_cell_order)]
    return ResultTable(SWEEP_COLUMNS, tuple(rows))


OUTAGE_COLUMNS = ("scheme", "snr_db", "relay_pos", "r_a", "r_b", "n_trials", "n_failed",
                  "n_outage", "outage_frac", "mean_sum_rate", "mean_sum_rate_served")


def outage_table(table: ResultTable) -> ResultTable:
    """The outage-related columns of a sweep table."""
    idx = [table.columns.index(c) for c in OUTAGE_COLUMNS]
    return ResultTable(OUTAGE_COLUMNS, tuple(tuple(row[i] for i in idx) for row in table.rows))


# ---------------------------------------------------------------------------
# equal-power region comparison

REGION_COLUMNS = ("snr_db", "relay_pos", "n_subcarriers", "n_trials", "mean_set_basis",
                  "mean_pairing", "gain", "n_containment_violations")


def _region_unit(args):
    cfg, position, trial = args
    channels = generate_channels(cfg.channel_config(position, trial))
    out = []
    for snr in cfg.snr_grid:
        inst = instance_for(cfg, channels, snr, (0.0, 0.0))
        out.append(((snr, position), (oracle.best_set_basis(inst)[0],
                                      oracle.pairing_baseline(inst))))
    return out


def region_table(cfg: ScenarioConfig, threads: int = 1) -> ResultTable:
    """Equal-power set-basis versus pairing two-way sum rates, one row per cell."""
    units = [(cfg, pos, t) for pos in cfg.relay_positions for t in range(cfg.n_trials)]
    cells: dict[tuple, list] = {}
    for res in _map_units(_region_unit, units, threads):
        for key, vals in res:
            cells.setdefault(key, []).append(vals)
    rows = []
    for snr, pos in sorted(cells, key=lambda k: (k[1], k[0])):
        vals = cells[(snr, pos)]
        sb = _mean([v[0] for v in vals])
        pr = _mean([v[1] for v in vals])
        bad = sum(v[0] < v[1] - 1e-9 * max(1.0, v[1]) for v in vals)
        rows.append((snr, pos, cfg.n_subcarriers, len(vals), sb, pr,
                     sb / pr - 1.0 if pr > 0 else math.nan, bad))
    return ResultTable(REGION_COLUMNS, tuple(rows))


# ---------------------------------------------------------------------------
# solver versus exhaustive search

ORACLE_COLUMNS = ("scheme", "snr_db", "relay_pos", "r_a", "r_b", "trial", "solver_objective",
                  "dual_value", "oracle_objective", "rel_gap", "within_tol", "below_dual",
                  "budget_excess", "coupling_violation")


def _oracle_unit(args):
    cfg, position, trial, tol = args
    channels = generate_channels(cfg.channel_config(position, trial))
    out = []
    for snr in cfg.snr_grid:
        for qos in cfg.qos:
            inst = instance_for(cfg, channels, snr, qos)
            for scheme in cfg.schemes:
                res = run_scheme(inst, scheme, iter_cap=cfg.iter_cap, stop_tol=cfg.stop_tol)
                _, best = oracle.exhaustive_solve(inst, qos=qos != (0.0, 0.0),
                                                  roles=tuple(Role(r) for r in SCHEME_ROLES[scheme]))
                if math.isfinite(best) and best > 0:
                    rel = (best - res.primal_objective) / best
                else:
                    rel = 0.0 if res.primal_objective <= 0 else math.nan
                out.append(((position, qos, snr, _SCHEME_ORDER[scheme], trial), (
                    scheme, snr, position, qos[0], qos[1], trial, res.primal_objective,
                    res.dual_value, best, rel, rel <= tol,
                    res.primal_objective <= res.dual_value + 1e-6,
                    budget_excess(inst, res), coupling_violation(inst, res))))
    return out


def oracle_table(cfg: ScenarioConfig, threads: int = 1, tol: float = 0.05) -> ResultTable:
    """Per-trial comparison of the solver's primal objective with exhaustive search.

    Needs ``cfg.n_subcarriers <= oracle.MAX_EXHAUSTIVE_N``.
    """
    if cfg.n_subcarriers > oracle.MAX_EXHAUSTIVE_N:
        raise oracle.TooLarge(f"oracle-check needs n_subcarriers <= {oracle.MAX_EXHAUSTIVE_N}")
    units = [(cfg, pos, t, tol) for pos in cfg.relay_positions for t in range(cfg.n_trials)]
    keyed = [item for res in _map_units(_oracle_unit, units, threads) for item in res]
    keyed.sort(key=lambda kv: kv[0])
    return ResultTable(ORACLE_COLUMNS, tuple(row for _, row in keyed))
