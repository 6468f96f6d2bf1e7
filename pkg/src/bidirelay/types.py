"""Domain data model for the three-node bidirectional relay system.

Nodes are ``A`` and ``B`` (the two users) and ``R`` (the relay).  Channels are
stored as squared magnitudes ``|h|^2`` per directed link and subcarrier, with
the receiver noise variance normalised to one.  Every rate is in bits per OFDM
symbol (log base 2).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

LINKS = ("AB", "BA", "AR", "BR", "RA", "RB")
"""Directed links, ``"AR"`` meaning transmitter A, receiver R."""

USERS = ("A", "B")
NODES = ("A", "B", "R")
MODES = ("direct", "one-way", "two-way")

# Number of dual variables in the full problem and their canonical order.
DUAL_NAMES = (
    "lam_b1_a", "lam_b1_b", "lam_c1_a", "lam_c1_b", "lam_ab_c",
    "mu_a", "mu_b", "alpha_a", "alpha_b", "alpha_r",
)


class InvariantViolation(ValueError):
    """Raised when a domain object is constructed in an invalid state.

    ``name`` identifies the rule that failed so callers can tell violations
    apart without parsing the message.
    """

    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.name = name


class Role(IntEnum):
    """Per-subcarrier role.  The integer value is the tie-break priority."""

    DT_A = 0
    DT_B = 1
    OW1_A = 2
    OW1_B = 3
    OW2_A = 4
    OW2_B = 5
    TW1 = 6
    TW2 = 7
    IDLE = 8

    @property
    def label(self) -> str:
        return self.name.replace("_", "-")

    @property
    def mode(self) -> str | None:
        if self in (Role.DT_A, Role.DT_B):
            return "direct"
        if self in (Role.OW1_A, Role.OW1_B, Role.OW2_A, Role.OW2_B):
            return "one-way"
        if self in (Role.TW1, Role.TW2):
            return "two-way"
        return None

    @classmethod
    def from_label(cls, label: str) -> "Role":
        return cls[label.replace("-", "_")]


ACTIVE_ROLES = tuple(Role)[:8]

# Which node pays for the power on a subcarrier holding this role.  TW1 is
# split between A and B and handled separately.
PAYER = {
    Role.DT_A: "A", Role.OW1_A: "A",
    Role.DT_B: "B", Role.OW1_B: "B",
    Role.OW2_A: "R", Role.OW2_B: "R", Role.TW2: "R",
}


def _finite_nonneg(x: float) -> bool:
    return math.isfinite(x) and x >= 0.0


@dataclass(frozen=True)
class NodeGeometry:
    """Positions of A, B and R on a line, in kilometres."""

    pos_a: float = 0.0
    pos_b: float = 2.0
    pos_r: float = 1.0

    def __post_init__(self):
        for name in ("pos_a", "pos_b", "pos_r"):
            if not math.isfinite(getattr(self, name)):
                raise InvariantViolation("finite_position", f"{name} is not finite")
        if self.pos_a == self.pos_b:
            raise InvariantViolation("distinct_users", "A and B coincide")

    @classmethod
    def on_segment(cls, fraction: float, length_km: float = 2.0) -> "NodeGeometry":
        """Relay at ``fraction`` of the way from A to B."""
        return cls(0.0, length_km, fraction * length_km)

    def distance(self, u: str, v: str) -> float:
        pos = {"A": self.pos_a, "B": self.pos_b, "R": self.pos_r}
        return abs(pos[u] - pos[v])


class ChannelRealization:
    """Squared channel magnitudes for the six directed links.

    The gains are held in a read-only ``(6, N)`` float64 array whose rows
    follow :data:`LINKS`; :meth:`gain` returns one row.
    """

    __slots__ = ("_gains",)

    def __init__(self, gains: Mapping[str, Sequence[float]] | np.ndarray,
                 n_subcarriers: int | None = None):
        if isinstance(gains, np.ndarray):
            arr = np.array(gains, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] != len(LINKS):
                raise InvariantViolation("link_set", f"expected shape (6, N), got {arr.shape}")
        else:
            missing = set(LINKS) - set(gains)
            extra = set(gains) - set(LINKS)
            if missing or extra:
                raise InvariantViolation(
                    "link_set", f"missing={sorted(missing)} unexpected={sorted(extra)}")
            n = n_subcarriers if n_subcarriers is not None else len(gains[LINKS[0]])
            rows = []
            for link in LINKS:
                row = np.asarray(gains[link], dtype=np.float64).ravel()
                if row.size != n:
                    raise InvariantViolation(
                        "gain_length", f"link {link} has {row.size} gains, expected {n}")
                rows.append(row)
            arr = np.vstack(rows)
        n = arr.shape[1]
        if n_subcarriers is not None and n != n_subcarriers:
            raise InvariantViolation("gain_length", f"expected N={n_subcarriers}, got {n}")
        if n < 1:
            raise InvariantViolation("positive_n", "at least one subcarrier required")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvariantViolation("gain_range", "gains must be finite and >= 0")
        arr.setflags(write=False)
        self._gains = arr

    @property
    def n_subcarriers(self) -> int:
        return self._gains.shape[1]

    @property
    def array(self) -> np.ndarray:
        return self._gains

    def gain(self, link: str) -> np.ndarray:
        return self._gains[LINKS.index(link)]

    def as_dict(self) -> dict[str, list[float]]:
        return {link: self._gains[i].tolist() for i, link in enumerate(LINKS)}

    def permuted(self, order: Sequence[int]) -> "ChannelRealization":
        return ChannelRealization(self._gains[:, list(order)])

    def swapped_users(self) -> "ChannelRealization":
        """Relabel A as B and B as A."""
        swap = {"AB": "BA", "BA": "AB", "AR": "BR", "BR": "AR", "RA": "RB", "RB": "RA"}
        return ChannelRealization({link: self.gain(swap[link]) for link in LINKS})

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ChannelRealization) and np.array_equal(self._gains, other._gains)

    def __repr__(self) -> str:
        return f"ChannelRealization(n_subcarriers={self.n_subcarriers})"


@dataclass(frozen=True)
class ProblemInstance:
    """One fading frame plus weights, QoS floors and power budgets."""

    channels: ChannelRealization
    w_a: float = 1.0
    w_b: float = 1.0
    r_a: float = 0.0
    r_b: float = 0.0
    p_a: float = 100.0
    p_b: float = 100.0
    p_r: float = 100.0

    def __post_init__(self):
        validate_instance(self)

    @property
    def n(self) -> int:
        return self.channels.n_subcarriers

    @property
    def weights(self) -> tuple[float, float]:
        return (self.w_a, self.w_b)

    @property
    def budgets(self) -> tuple[float, float, float]:
        return (self.p_a, self.p_b, self.p_r)

    @property
    def qos(self) -> tuple[float, float]:
        return (self.r_a, self.r_b)

    def replace(self, **changes) -> "ProblemInstance":
        fields_ = dict(channels=self.channels, w_a=self.w_a, w_b=self.w_b, r_a=self.r_a,
                       r_b=self.r_b, p_a=self.p_a, p_b=self.p_b, p_r=self.p_r)
        fields_.update(changes)
        return ProblemInstance(**fields_)

    def swapped_users(self) -> "ProblemInstance":
        return ProblemInstance(self.channels.swapped_users(), self.w_b, self.w_a,
                               self.r_b, self.r_a, self.p_b, self.p_a, self.p_r)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "w": [self.w_a, self.w_b],
            "r": [self.r_a, self.r_b],
            "p": [self.p_a, self.p_b, self.p_r],
            "gains": self.channels.as_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ProblemInstance":
        try:
            n = int(doc["n"])
            w_a, w_b = (float(v) for v in doc["w"])
            r_a, r_b = (float(v) for v in doc.get("r", (0.0, 0.0)))
            p_a, p_b, p_r = (float(v) for v in doc["p"])
            gains = doc["gains"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantViolation("schema", f"malformed instance document: {exc}") from exc
        return cls(ChannelRealization(gains, n), w_a, w_b, r_a, r_b, p_a, p_b, p_r)

    def dump(self, path: str | Path) -> None:
        # repr-exact floats, so load(dump(x)) == x bit for bit
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "ProblemInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ProblemInstance) and self.to_dict() == other.to_dict()


def validate_instance(inst: ProblemInstance) -> ProblemInstance:
    """Check every instance invariant; return ``inst`` unchanged if all hold."""
    if not isinstance(inst.channels, ChannelRealization):
        raise InvariantViolation("channels_type", "channels must be a ChannelRealization")
    for name in ("p_a", "p_b", "p_r"):
        v = getattr(inst, name)
        if not (math.isfinite(v) and v > 0):
            raise InvariantViolation("positive_budget", f"{name}={v} must be > 0")
    for name in ("r_a", "r_b"):
        if not _finite_nonneg(getattr(inst, name)):
            raise InvariantViolation("nonneg_qos", f"{name} must be finite and >= 0")
    for name in ("w_a", "w_b"):
        if not _finite_nonneg(getattr(inst, name)):
            raise InvariantViolation("nonneg_weight", f"{name} must be finite and >= 0")
    if inst.w_a + inst.w_b <= 0:
        raise InvariantViolation("positive_weight_sum", "w_a + w_b must be > 0")
    return inst


@dataclass(frozen=True)
class DualPoint:
    """The ten stored Lagrange multipliers.

    The second-hop multipliers are derived, never stored, so the bounded-dual
    identities hold exactly by construction.
    """

    lam_b1_a: float
    lam_b1_b: float
    lam_c1_a: float
    lam_c1_b: float
    lam_ab_c: float
    mu_a: float
    mu_b: float
    alpha_a: float
    alpha_b: float
    alpha_r: float
    w_a: float = 1.0
    w_b: float = 1.0

    def __post_init__(self):
        for name in DUAL_NAMES:
            v = getattr(self, name)
            if not _finite_nonneg(v):
                raise InvariantViolation("nonneg_multiplier", f"{name}={v} must be >= 0")
        for k in ("a", "b"):
            level = self.level(k)
            if getattr(self, f"lam_b1_{k}") > level:
                raise InvariantViolation("one_way_bound", f"lam_b1_{k} exceeds w_{k} + mu_{k}")
            if getattr(self, f"lam_c1_{k}") + self.lam_ab_c > level:
                raise InvariantViolation(
                    "two_way_bound", f"lam_c1_{k} + lam_ab_c exceeds w_{k} + mu_{k}")

    @classmethod
    def from_vector(cls, x: Sequence[float], w_a: float = 1.0, w_b: float = 1.0) -> "DualPoint":
        return cls(*(float(v) for v in x), w_a=w_a, w_b=w_b)

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in DUAL_NAMES])

    def level(self, k: str) -> float:
        """``w_k + mu_k``, the water level numerator of user ``k``."""
        k = k.lower()
        return getattr(self, f"w_{k}") + getattr(self, f"mu_{k}")

    def lam_b2(self, k: str) -> float:
        return self.level(k) - getattr(self, f"lam_b1_{k.lower()}")

    def lam_c2(self, k: str) -> float:
        return self.level(k) - getattr(self, f"lam_c1_{k.lower()}") - self.lam_ab_c

    xi = lam_c2


@dataclass(frozen=True)
class SubcarrierDecision:
    """Role of one subcarrier and the power(s) spent on it.

    ``powers`` is empty for IDLE, a pair ``(p_A->R, p_B->R)`` for TW1 and a
    single value otherwise.
    """

    role: Role
    powers: tuple[float, ...] = ()

    def __post_init__(self):
        role = Role(self.role)
        object.__setattr__(self, "role", role)
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        expected = 0 if role is Role.IDLE else 2 if role is Role.TW1 else 1
        if len(self.powers) != expected:
            raise InvariantViolation(
                "power_arity", f"{role.label} carries {expected} powers, got {len(self.powers)}")
        if not all(_finite_nonneg(p) for p in self.powers):
            raise InvariantViolation("nonneg_power", "powers must be finite and >= 0")

    def charges(self) -> dict[str, float]:
        """Power charged to each node by this subcarrier."""
        out = {"A": 0.0, "B": 0.0, "R": 0.0}
        if self.role is Role.TW1:
            out["A"], out["B"] = self.powers
        elif self.role is not Role.IDLE:
            out[PAYER[self.role]] = self.powers[0]
        return out


def _node_totals(decisions: Sequence[SubcarrierDecision]) -> dict[str, float]:
    # math.fsum: exact, so the stored totals are reproducible from decisions
    parts = {"A": [], "B": [], "R": []}
    for d in decisions:
        for node, p in d.charges().items():
            parts[node].append(p)
    return {node: math.fsum(v) for node, v in parts.items()}


@dataclass(frozen=True)
class Allocation:
    """Per-subcarrier decisions and the resulting per-node power totals."""

    decisions: tuple[SubcarrierDecision, ...]
    node_power_used: Mapping[str, float] = field(default=None)

    def __post_init__(self):
        decisions = tuple(self.decisions)
        object.__setattr__(self, "decisions", decisions)
        totals = _node_totals(decisions)
        if self.node_power_used is None:
            object.__setattr__(self, "node_power_used", MappingProxyType(totals))
        else:
            given = dict(self.node_power_used)
            if given != totals:
                raise InvariantViolation("power_bookkeeping",
                                         f"stored totals {given} != recomputed {totals}")
            object.__setattr__(self, "node_power_used", MappingProxyType(given))

    @classmethod
    def from_arrays(cls, roles: np.ndarray, p_first: np.ndarray,
                    p_second: np.ndarray | None = None) -> "Allocation":
        """Build from per-subcarrier role codes and powers.

        ``p_first`` is the single power of each role (A's power for TW1);
        ``p_second`` holds B's power on TW1 subcarriers.
        """
        decisions = []
        for n, code in enumerate(np.asarray(roles).tolist()):
            role = Role(code)
            if role is Role.IDLE:
                decisions.append(SubcarrierDecision(role))
            elif role is Role.TW1:
                decisions.append(SubcarrierDecision(role, (p_first[n], p_second[n])))
            else:
                decisions.append(SubcarrierDecision(role, (p_first[n],)))
        return cls(tuple(decisions))

    @property
    def n(self) -> int:
        return len(self.decisions)

    def roles(self) -> np.ndarray:
        return np.array([int(d.role) for d in self.decisions], dtype=np.int8)

    def power_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        p1 = np.zeros(self.n)
        p2 = np.zeros(self.n)
        for n, d in enumerate(self.decisions):
            if d.powers:
                p1[n] = d.powers[0]
            if d.role is Role.TW1:
                p2[n] = d.powers[1]
        return p1, p2

    def is_feasible(self, inst: ProblemInstance) -> bool:
        used = self.node_power_used
        return used["A"] <= inst.p_a and used["B"] <= inst.p_b and used["R"] <= inst.p_r

    def role_counts(self) -> dict[Role, int]:
        counts = dict.fromkeys(Role, 0)
        for d in self.decisions:
            counts[d.role] += 1
        return counts


@dataclass(frozen=True)
class SolveOutcome:
    """Result of one solver run.

    ``rate_a``/``rate_b`` and ``objective`` are the reported values, zeroed on
    outage.  ``per_mode_rates``, ``pre_outage_rates`` and ``primal_objective``
    keep the values from before zeroing.  ``gap_estimate`` is NaN on outage,
    where no allocation meets the rate floors and the gap is undefined.
    """

    rate_a: float
    rate_b: float
    per_mode_rates: Mapping[tuple[str, str], float]
    objective: float
    outage: bool
    iterations: int
    dual_value: float
    gap_estimate: float
    allocation: Allocation
    primal_objective: float = 0.0
    converged: bool = True
    status: str = "converged"
    dual_point: np.ndarray | None = None
    pre_outage_rates: tuple[float, float] | None = None
    oracle_residual: float | None = None

    def mode_rate(self, mode: str) -> float:
        return sum(self.per_mode_rates[(u, mode)] for u in USERS)
