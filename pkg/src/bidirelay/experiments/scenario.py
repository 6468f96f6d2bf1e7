"""Scenario files for the Monte Carlo sweeps.

A scenario is a JSON object; every key is optional::

    {
      "schemes": ["proposed", "BM2", "BM1"],
      "snr_grid": [10, 15, 20, 25, 30],
      "n_trials": 50,
      "qos": [5, 5],                       # or a list of pairs
      "qos_split": {"total": 100, "fractions": [0.2, 0.5, 0.8]},
      "relay_positions": [0.5],
      "n_subcarriers": 256,
      "weights": [1, 1],
      "seed": 1,
      "output": "results.csv"
    }

``qos_split`` adds the points ``(f * total, (1 - f) * total)`` for each
fraction ``f`` to the QoS grid.  ``snr_grid`` is the per-node power budget in
dB with unit noise power, the same for A, B and R.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

from ..channel import SUI6_PROFILE, ChannelConfig
from ..solver.core import SCHEME_ROLES
from ..types import InvariantViolation, NodeGeometry


class ScenarioError(InvariantViolation):
    pass


def _pairs(value) -> tuple[tuple[float, float], ...]:
    if value and not isinstance(value[0], (list, tuple)):
        value = [value]
    out = []
    for pair in value:
        if len(pair) != 2:
            raise ScenarioError("qos", f"QoS points are (r_a, r_b) pairs, got {pair!r}")
        out.append((float(pair[0]), float(pair[1])))
    return tuple(out)


@dataclass(frozen=True)
class ScenarioConfig:
    """Grid, trial count and channel settings of one sweep."""

    schemes: tuple[str, ...] = ("proposed", "BM2", "BM1")
    snr_grid: tuple[float, ...] = (20.0,)
    n_trials: int = 10
    qos: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    relay_positions: tuple[float, ...] = (0.5,)
    n_subcarriers: int = 256
    weights: tuple[float, float] = (1.0, 1.0)
    length_km: float = 2.0
    pathloss_exponent: float = 3.5
    tap_profile: tuple[tuple[int, float], ...] = SUI6_PROFILE
    seed: int = 0
    output: str | None = None
    iter_cap: int = 5000
    stop_tol: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "relay_positions", tuple(float(p) for p in self.relay_positions))
        object.__setattr__(self, "qos", _pairs(self.qos))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.schemes or any(s not in SCHEME_ROLES for s in self.schemes):
            raise ScenarioError("schemes", f"schemes must be drawn from {sorted(SCHEME_ROLES)}")
        if int(self.n_trials) < 1:
            raise ScenarioError("n_trials", "n_trials must be >= 1")
        if not self.snr_grid or not all(math.isfinite(s) for s in self.snr_grid):
            raise ScenarioError("snr_grid", "SNR values must be finite and non-empty")
        if not self.relay_positions or not all(0.0 < p < 1.0 for p in self.relay_positions):
            raise ScenarioError("relay_positions", "relay positions must lie in (0, 1)")
        if not self.qos or any(r < 0 or not math.isfinite(r) for pair in self.qos for r in pair):
            raise ScenarioError("qos", "rate floors must be finite and >= 0")
        if len(self.weights) != 2 or any(not w > 0 for w in self.weights):
            raise ScenarioError("weights", "two positive weights required")
        if not 0 <= int(self.seed) < 2**63:
            raise ScenarioError("seed", "seed must be a non-negative 63-bit integer")
        # validates n_subcarriers against the tap profile as a side effect
        try:
            self.channel_config(self.relay_positions[0], 0)
        except ScenarioError:
            raise
        except InvariantViolation as exc:
            raise ScenarioError("channel", str(exc)) from exc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScenarioConfig":
        doc = dict(doc)
        kw = {}
        if "scheme" in doc:
            kw["schemes"] = (doc.pop("scheme"),)
        if "schemes" in doc:
            kw["schemes"] = tuple(doc.pop("schemes"))
        qos = list(_pairs(doc.pop("qos"))) if "qos" in doc else []
        split = doc.pop("qos_split", None)
        if split is not None:
            total = float(split["total"])
            qos += [(f * total, (1.0 - f) * total) for f in map(float, split["fractions"])]
        if qos:
            kw["qos"] = tuple(qos)
        if "tap_profile" in doc:
            kw["tap_profile"] = tuple((int(d), float(p)) for d, p in doc.pop("tap_profile"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ScenarioError("schema", f"unknown scenario keys: {sorted(unknown)}")
        kw.update(doc)
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvariantViolation):
                raise
            raise ScenarioError("schema", str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ScenarioError("io", f"cannot read scenario {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError("schema", f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ScenarioError("schema", f"{path} must hold a JSON object")
        return cls.from_dict(doc)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def channel_config(self, position: float, trial: int) -> ChannelConfig:
        geometry = NodeGeometry.on_segment(position, self.length_km)
        return ChannelConfig(geometry=geometry, n_subcarriers=int(self.n_subcarriers),
                             pathloss_exponent=self.pathloss_exponent,
                             tap_profile=self.tap_profile,
                             seed=trial_seed(self.seed, position, trial))


def trial_seed(master: int, position: float, trial: int) -> int:
    """Channel seed of one trial, a hash of the master seed and the trial's coordinates.

    The SNR, QoS point and scheme are deliberately left out so that every
    scheme and every point of those grids sees the same fading draws; adding
    grid points never changes existing cells.
    """
    key = f"{int(master)}|{float(position)!r}|{int(trial)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
