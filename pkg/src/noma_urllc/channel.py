"""
Cell topology, Rayleigh-fading channel gains and SIC ordering.

Users are dropped uniformly on a disc around the base station; the
effective power gain of user k in a slot is g_k = h * d_k^-alpha with
h ~ Exp(1) (Rayleigh fading power) redrawn every slot (block fading).

Within a NOMA cluster the receiver decodes successively: strongest
effective received power first, subtracting each decoded signal.  A user
therefore sees interference only from users decoded after it, and the
last-decoded user sees noise alone.

All sampling consumes an explicit numpy Generator so experiment replicas
can own independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Smallest gain kept after fading; a zero draw would break the gains > 0
# invariant (and the SINR math tolerates it anyway, but keep types clean).
_MIN_GAIN = 2.2250738585072014e-308


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass(frozen=True)
class Topology:
    """User distances from the BS at the cell center."""

    positions: tuple[float, ...]   # meters, one per user
    cell_radius: float             # meters
    pathloss_exponent: float       # > 2

    def __post_init__(self):
        if self.pathloss_exponent <= 2.0:
            raise ConfigError("pathloss_exponent must exceed 2")
        for d in self.positions:
            if not (1.0 <= d <= self.cell_radius):
                raise ConfigError(f"user distance {d} outside [1, {self.cell_radius}]")

    @property
    def n_users(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class ChannelRealization:
    """Per-user effective power gains and the slot's noise power (linear watts)."""

    gains: tuple[float, ...]
    noise_power: float

    def __post_init__(self):
        if self.noise_power <= 0.0:
            raise ConfigError("noise_power must be > 0")
        if any(g <= 0.0 for g in self.gains):
            raise ConfigError("all gains must be > 0")


def generate_topology(n_users: int, cell_radius: float, seed: int,
                      pathloss_exponent: float = 4.0) -> Topology:
    """
    Drop n_users uniformly on the disc of the given radius (min distance 1 m).

    Uniform area density means radius ~ R * sqrt(U); mean distance 2R/3.
    Deterministic for a fixed seed.
    """
    if n_users < 2:
        raise ConfigError("need at least 2 users")
    if cell_radius <= 1.0:
        raise ConfigError("cell_radius must exceed 1 m")
    rng = np.random.default_rng(seed)
    u = rng.random(n_users)
    dist = np.maximum(1.0, cell_radius * np.sqrt(u))
    return Topology(positions=tuple(float(d) for d in dist),
                    cell_radius=float(cell_radius),
                    pathloss_exponent=float(pathloss_exponent))


def sample_gains(topology: Topology, rng: np.random.Generator,
                 noise_power: float) -> ChannelRealization:
    """Draw one block-fading realization: g = h * d^-alpha, h ~ Exp(1)."""
    h = rng.exponential(1.0, size=topology.n_users)
    alpha = topology.pathloss_exponent
    gains = tuple(max(_MIN_GAIN, float(hk) * d ** (-alpha))
                  for hk, d in zip(h, topology.positions))
    return ChannelRealization(gains=gains, noise_power=float(noise_power))


def sic_order(received: Sequence[float]) -> list[int]:
    """
    Decode order for one cluster: indices sorted by effective received
    power, strongest first; ties broken by ascending index so replays are
    deterministic.
    """
    return sorted(range(len(received)), key=lambda i: (-received[i], i))


def sinr_per_user(members: Sequence[int], powers: Sequence[float],
                  realization: ChannelRealization) -> list[float]:
    """
    Per-user linear SINR under SIC for one cluster.

    members are global user ids; powers align with members.  A user decoded
    at position t sees the summed received power of everyone decoded after
    it plus noise.  Suffix sums are shared between numerator and
    denominator so the telescoping identity

        prod_k (1 + sinr_k) = (sigma2 + sum_k p_k g_k) / sigma2

    holds to rounding error.
    """
    sigma2 = realization.noise_power
    if sigma2 <= 0.0:
        raise ConfigError("noise_power must be > 0")
    received = [p * realization.gains[m] for p, m in zip(powers, members)]
    order = sic_order(received)
    # suffix[t] = total received power of decode positions >= t
    n = len(order)
    suffix = [0.0] * (n + 1)
    for t in range(n - 1, -1, -1):
        suffix[t] = suffix[t + 1] + received[order[t]]
    sinr = [0.0] * n
    for t, idx in enumerate(order):
        sinr[idx] = received[idx] / (suffix[t + 1] + sigma2)
    return sinr


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def noise_power_watts(sigma2_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise over the band: density (dBm/Hz) + 10 log10(BW), in watts."""
    return dbm_to_watts(sigma2_dbm_hz + 10.0 * np.log10(bandwidth_hz))
