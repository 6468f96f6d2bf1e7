"""Seeded frequency-selective Rayleigh channels with power-law path loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .types import LINKS, ChannelRealization, InvariantViolation, NodeGeometry

# Three-tap stand-in for SUI-6: (delay in samples, mean power in dB).
SUI6_PROFILE = ((0, 0.0), (5, -10.0), (10, -14.0))

_PAIR_OF = {"AB": 0, "BA": 0, "AR": 1, "RA": 1, "BR": 2, "RB": 2}


class NonPositiveDistance(ValueError):
    pass


class InvalidConfig(InvariantViolation):
    pass


def pathloss_gain(distance: float, exponent: float = 3.5) -> float:
    """Linear large-scale gain ``distance**-exponent`` (1.0 at 1 km)."""
    if not distance > 0:
        raise NonPositiveDistance(f"distance must be > 0 km, got {distance}")
    return distance ** (-exponent)


@dataclass(frozen=True)
class ChannelConfig:
    """Parameters of one channel draw.

    ``fading=False`` makes every tap deterministic (amplitude ``sqrt(power)``)
    which gives flat, path-loss-only gains for a single-tap profile.
    ``shadowing_db`` is the standard deviation of a per-link log-normal factor;
    zero disables it.
    """

    geometry: NodeGeometry = field(default_factory=NodeGeometry)
    n_subcarriers: int = 256
    pathloss_exponent: float = 3.5
    tap_profile: tuple[tuple[int, float], ...] = SUI6_PROFILE
    seed: int = 0
    reciprocal: bool = True
    fading: bool = True
    shadowing_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tap_profile",
                           tuple((int(d), float(p)) for d, p in self.tap_profile))
        if not (isinstance(self.n_subcarriers, (int, np.integer)) and self.n_subcarriers >= 1):
            raise InvalidConfig("positive_n", "n_subcarriers must be a positive integer")
        if not (math.isfinite(self.pathloss_exponent) and self.pathloss_exponent > 0):
            raise InvalidConfig("pathloss_exponent", "exponent must be > 0")
        if not self.tap_profile:
            raise InvalidConfig("tap_profile", "at least one tap required")
        delays = [d for d, _ in self.tap_profile]
        if len(set(delays)) != len(delays) or min(delays) < 0:
            raise InvalidConfig("tap_profile", "tap delays must be distinct and >= 0")
        # delays wrap around the N-point response; colliding residues would merge
        # taps and break the per-draw energy identity
        if len({d % self.n_subcarriers for d in delays}) != len(delays):
            raise InvalidConfig("tap_profile",
                                "n_subcarriers must separate all tap delays (distinct modulo N)")
        if not all(math.isfinite(p) for _, p in self.tap_profile):
            raise InvalidConfig("tap_profile", "tap powers must be finite")
        if not (math.isfinite(self.shadowing_db) and self.shadowing_db >= 0):
            raise InvalidConfig("shadowing", "shadowing_db must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed", "seed must fit in 64 unsigned bits")

    def tap_powers(self) -> np.ndarray:
        """Linear tap powers normalised to unit sum."""
        p = 10.0 ** (np.array([p for _, p in self.tap_profile]) / 10.0)
        return p / p.sum()


def _link_stream(cfg: ChannelConfig, link: str) -> np.random.Generator:
    key = _PAIR_OF[link] if cfg.reciprocal else 3 + LINKS.index(link)
    return np.random.default_rng(np.random.SeedSequence([int(cfg.seed), key]))


def draw_taps(cfg: ChannelConfig, link: str) -> np.ndarray:
    """Complex tap amplitudes of one link (before path loss)."""
    powers = cfg.tap_powers()
    if not cfg.fading:
        return np.sqrt(powers).astype(np.complex128)
    rng = _link_stream(cfg, link)
    z = rng.standard_normal((2, powers.size))
    return np.sqrt(powers / 2.0) * (z[0] + 1j * z[1])


def frequency_response(taps: np.ndarray, delays: np.ndarray, n: int) -> np.ndarray:
    """N-point DFT of the tap sequence; delays are taken modulo ``n``."""
    h = np.zeros(n, dtype=np.complex128)
    np.add.at(h, np.asarray(delays) % n, taps)
    return np.fft.fft(h)


def generate_channels(cfg: ChannelConfig) -> ChannelRealization:
    """Draw one realisation of all six directed links."""
    delays = np.array([d for d, _ in cfg.tap_profile])
    gains = {}
    for link in LINKS:
        taps = draw_taps(cfg, link)
        g = np.abs(frequency_response(taps, delays, cfg.n_subcarriers)) ** 2
        d = cfg.geometry.distance(link[0], link[1])
        g *= pathloss_gain(d, cfg.pathloss_exponent)
        if cfg.shadowing_db > 0:
            rng = _link_stream(cfg, link)
            rng.standard_normal((2, delays.size))  # skip the tap draws
            g *= 10.0 ** (cfg.shadowing_db * rng.standard_normal() / 10.0)
        gains[link] = g
    return ChannelRealization(gains, cfg.n_subcarriers)
