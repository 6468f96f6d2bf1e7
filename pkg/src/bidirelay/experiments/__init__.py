"""Scenario-driven Monte Carlo experiments."""

from .runner import (ResultTable, csv_text, emit_csv, oracle_table, outage_table, read_csv,
                     region_table, run_scheme, sweep)
from .scenario import ScenarioConfig, ScenarioError, trial_seed

__all__ = ["ResultTable", "ScenarioConfig", "ScenarioError", "csv_text", "emit_csv",
           "oracle_table", "outage_table", "read_csv", "region_table", "run_scheme", "sweep",
           "trial_seed"]
