import numpy as np
import pytest

from bidirelay.channel import (ChannelConfig, InvalidConfig, NonPositiveDistance, draw_taps,
                               frequency_response, generate_channels, pathloss_gain)
from bidirelay.types import LINKS, NodeGeometry


def test_pathloss_values():
    assert pathloss_gain(1.0, 3.5) == 1.0
    assert pathloss_gain(2.0, 3.5) == pytest.approx(0.08838834764831845, rel=1e-12)
    assert pathloss_gain(1.0) / pathloss_gain(2.0) == pytest.approx(11.313708498984761, rel=1e-12)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_pathloss_needs_positive_distance(d):
    with pytest.raises(NonPositiveDistance):
        pathloss_gain(d)


def test_same_config_same_realization():
    cfg = ChannelConfig(n_subcarriers=64, seed=42)
    a, b = generate_channels(cfg), generate_channels(cfg)
    assert a == b
    assert a.array.tobytes() == b.array.tobytes()


def test_different_seed_different_realization():
    assert generate_channels(ChannelConfig(seed=1)) != generate_channels(ChannelConfig(seed=2))


def test_flat_degenerate_profile_equals_pathloss():
    geo = NodeGeometry.on_segment(0.3)
    cfg = ChannelConfig(geometry=geo, n_subcarriers=16, tap_profile=((0, 0.0),), fading=False)
    ch = generate_channels(cfg)
    for link in LINKS:
        d = geo.distance(link[0], link[1])
        assert np.allclose(ch.gain(link), pathloss_gain(d), rtol=1e-12)


def test_reciprocal_pairs_mirror():
    ch = generate_channels(ChannelConfig(n_subcarriers=32, seed=9))
    for u, v in (("A", "B"), ("A", "R"), ("B", "R")):
        assert np.array_equal(ch.gain(u + v), ch.gain(v + u))
    ch = generate_channels(ChannelConfig(n_subcarriers=32, seed=9, reciprocal=False))
    assert not np.array_equal(ch.gain("AR"), ch.gain("RA"))


def test_mean_gain_matches_pathloss():
    geo = NodeGeometry.on_segment(0.5)
    d = geo.distance("A", "R")
    draws = np.array([generate_channels(ChannelConfig(geometry=geo, n_subcarriers=16, seed=s)).gain("AR")[3]
                      for s in range(10_000)])
    assert abs(draws.mean() / pathloss_gain(d) - 1) < 0.05


def test_parseval_energy_identity():
    cfg = ChannelConfig(n_subcarriers=128, seed=4, fading=True)
    delays = np.array([d for d, _ in cfg.tap_profile])
    for link in LINKS:
        taps = draw_taps(cfg, link)
        h = frequency_response(taps, delays, cfg.n_subcarriers)
        energy = np.sum(np.abs(taps) ** 2)
        assert abs(np.mean(np.abs(h) ** 2) / energy - 1) < 1e-9


def test_outputs_finite_and_nonnegative():
    for seed in range(50):
        g = generate_channels(ChannelConfig(n_subcarriers=32, seed=seed)).array
        assert np.all(np.isfinite(g)) and np.all(g >= 0)


def test_link_streams_independent_of_n():
    # same seed, different N: the per-link tap draws are unchanged
    a = ChannelConfig(n_subcarriers=256, seed=11)
    b = ChannelConfig(n_subcarriers=128, seed=11)
    for link in LINKS:
        assert np.array_equal(draw_taps(a, link), draw_taps(b, link))
    assert not np.array_equal(draw_taps(a, "AB"), draw_taps(a, "AR"))


def test_tap_powers_normalised():
    cfg = ChannelConfig()
    assert cfg.tap_powers().sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("kw", [
    {"pathloss_exponent": 0.0},
    {"tap_profile": ()},
    {"tap_profile": ((0, 0.0), (0, -3.0))},
    {"n_subcarriers": 0},
    {"n_subcarriers": 5, "tap_profile": ((0, 0.0), (5, -3.0))},
    {"shadowing_db": -1.0},
])
def test_invalid_configs(kw):
    with pytest.raises(InvalidConfig):
        ChannelConfig(**kw)


def test_shadowing_hook_scales_links():
    base = generate_channels(ChannelConfig(n_subcarriers=8, seed=3))
    shadowed = generate_channels(ChannelConfig(n_subcarriers=8, seed=3, shadowing_db=8.0))
    ratio = shadowed.gain("AR") / base.gain("AR")
    assert np.allclose(ratio, ratio[0]) and ratio[0] != 1.0
