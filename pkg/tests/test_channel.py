"""Topology sampling, fading, SIC ordering and SINR composition."""

import math

import numpy as np
import pytest

from noma_urllc.channel import (ChannelRealization, ConfigError, Topology,
                                dbm_to_watts, generate_topology,
                                noise_power_watts, sample_gains, sic_order,
                                sinr_per_user)


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------

def test_topology_deterministic():
    a = generate_topology(5, 500.0, seed=7)
    b = generate_topology(5, 500.0, seed=7)
    assert a.positions == b.positions


def test_topology_range():
    topo = generate_topology(5, 500.0, seed=3)
    assert all(1.0 <= d <= 500.0 for d in topo.positions)


def test_topology_mean_distance():
    # uniform on the disc: mean radius = 2R/3
    topo = generate_topology(10_000, 500.0, seed=11)
    mean = np.mean(topo.positions)
    assert mean == pytest.approx(2.0 / 3.0 * 500.0, rel=0.02)


def test_topology_config_errors():
    with pytest.raises(ConfigError):
        generate_topology(1, 500.0, seed=0)
    with pytest.raises(ConfigError):
        generate_topology(5, 0.5, seed=0)
    with pytest.raises(ConfigError):
        Topology(positions=(10.0,), cell_radius=500.0, pathloss_exponent=1.5)
    with pytest.raises(ConfigError):
        Topology(positions=(900.0,), cell_radius=500.0, pathloss_exponent=4.0)


# ---------------------------------------------------------------------------
# fading
# ---------------------------------------------------------------------------

def test_gains_reproducible():
    topo = generate_topology(5, 500.0, seed=1)
    g1 = sample_gains(topo, np.random.default_rng(42), 1e-14)
    g2 = sample_gains(topo, np.random.default_rng(42), 1e-14)
    assert g1.gains == g2.gains


def test_gains_positive_and_mean():
    topo = Topology(positions=(100.0,) * 100, cell_radius=500.0, pathloss_exponent=4.0)
    rng = np.random.default_rng(5)
    total = 0.0
    n_draws = 1000
    for _ in range(n_draws):
        real = sample_gains(topo, rng, 1e-14)
        assert all(g > 0 for g in real.gains)
        total += sum(real.gains)
    mean_h = total / (n_draws * 100) * 100.0 ** 4
    assert mean_h == pytest.approx(1.0, rel=0.02)


def test_realization_invariants():
    with pytest.raises(ConfigError):
        ChannelRealization(gains=(1.0, 0.0), noise_power=1e-12)
    with pytest.raises(ConfigError):
        ChannelRealization(gains=(1.0,), noise_power=0.0)


# ---------------------------------------------------------------------------
# SIC ordering
# ---------------------------------------------------------------------------

def test_sic_order_sorts_strongest_first():
    assert sic_order([0.1, 0.5, 0.3]) == [1, 2, 0]


def test_sic_order_tie_break_ascending_id():
    assert sic_order([2.0, 2.0, 2.0]) == [0, 1, 2]


def test_sic_order_single():
    assert sic_order([3.3]) == [0]


# ---------------------------------------------------------------------------
# SINR
# ---------------------------------------------------------------------------

def _realization(gains, sigma2=1.0):
    return ChannelRealization(gains=tuple(gains), noise_power=sigma2)


def test_sinr_single_user():
    real = _realization([2.0], sigma2=1.0)
    assert sinr_per_user([0], [0.5], real) == [pytest.approx(1.0)]


def test_sinr_two_users_hand_example():
    # received powers 1 and 2 with unit noise: decoded-first sees 2/(1+1),
    # decoded-last sees 1/1
    real = _realization([1.0, 1.0], sigma2=1.0)
    sinr = sinr_per_user([0, 1], [1.0, 2.0], real)
    assert sinr[1] == pytest.approx(1.0)
    assert sinr[0] == pytest.approx(1.0)


def test_sinr_received_power_non_increasing_along_decode_order():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        gains = rng.exponential(1.0, n) * rng.uniform(1e-12, 1e-8, n)
        powers = rng.uniform(0.01, 0.2, n)
        received = [p * g for p, g in zip(powers, gains)]
        order = sic_order(received)
        seq = [received[i] for i in order]
        assert all(a >= b for a, b in zip(seq, seq[1:]))


def test_sinr_telescoping_identity():
    # prod(1+sinr) * sigma2 == sigma2 + sum received, to rounding error
    rng = np.random.default_rng(123)
    for _ in range(2000):
        n = int(rng.integers(1, 8))
        gains = rng.exponential(1.0, n) * 10.0 ** rng.uniform(-12, -8, n)
        powers = rng.uniform(0.001, 0.2, n)
        sigma2 = 10.0 ** rng.uniform(-15, -12)
        real = _realization(gains, sigma2)
        sinr = sinr_per_user(list(range(n)), list(powers), real)
        lhs = sum(math.log2(1.0 + s) for s in sinr)
        rhs = math.log2(1.0 + sum(p * g for p, g in zip(powers, gains)) / sigma2)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_sinr_zero_noise_rejected():
    real = ChannelRealization.__new__(ChannelRealization)
    object.__setattr__(real, "gains", (1.0,))
    object.__setattr__(real, "noise_power", 0.0)
    with pytest.raises(ConfigError):
        sinr_per_user([0], [1.0], real)


# ---------------------------------------------------------------------------
# unit conversions
# ---------------------------------------------------------------------------

def test_dbm_conversion():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(23.0) == pytest.approx(0.19952623, rel=1e-6)


def test_noise_power():
    # -174 dBm/Hz over 1 MHz -> -114 dBm -> 3.98e-15 W
    assert noise_power_watts(-174.0, 1e6) == pytest.approx(3.9810717055e-15, rel=1e-6)
