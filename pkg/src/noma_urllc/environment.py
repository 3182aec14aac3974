"""
NOMA-URLLC clustering environment (Markov reward process).

State: every user sits on exactly one sub-channel; a sub-channel is either
empty or serves at least two users (NOMA needs pairing, and with fewer
users than 2x sub-channels some channels must stay dark).  The agent's
actions move users between sub-channels; a move that would break any
constraint is rejected and the state is left untouched ("the try is
discarded").

Per accepted slot the environment redraws block fading, assigns pool power
levels inside each cluster, runs SIC, evaluates the finite-blocklength
error and rate of every user and pays the sum rate as reward only when the
slot's mean decoding error did not increase and the number of successfully
decoded users is unchanged.

Constraint families enforced on accepted states:
  (power ordering)  received powers non-decreasing along the decode chain
  (power budget)    per-sub-channel total transmit power <= P_s
  (decodability)    rate above the SIC threshold (0) or the decode cascade
                    zeroes the user and everyone decoded after it
  (cluster floor)   non-empty sub-channels hold >= 2 users
  (uniqueness)      each user belongs to exactly one sub-channel
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .channel import (ChannelRealization, ConfigError, Topology,
                      generate_topology, noise_power_watts, dbm_to_watts,
                      sample_gains, sic_order, sinr_per_user)
from .fbl import decoding_error, rate_at_error


# ---------------------------------------------------------------------------
# Traffic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrafficModel:
    """Packet-size law: fixed D per slot, or bursty uniform in [d_lo, d_hi]."""

    mode: str = "static"           # "static" | "bursty"
    d_fixed: int = 50              # bits, static mode
    d_range: tuple[int, int] = (20, 100)   # bits, bursty mode

    def __post_init__(self):
        if self.mode not in ("static", "bursty"):
            raise ConfigError(f"unknown traffic mode {self.mode!r}")
        if self.mode == "static" and self.d_fixed < 1:
            raise ConfigError("d_fixed must be >= 1")
        if self.mode == "bursty":
            lo, hi = self.d_range
            if lo < 1 or hi < lo:
                raise ConfigError(f"bad d_range {self.d_range}")

    @property
    def d_lo(self) -> int:
        return self.d_fixed if self.mode == "static" else self.d_range[0]

    @property
    def d_hi(self) -> int:
        return self.d_fixed if self.mode == "static" else self.d_range[1]


def sample_packet_size(traffic: TrafficModel, rng: np.random.Generator) -> int:
    """One packet size draw: D_fixed, or uniform integer in [d_lo, d_hi]."""
    if traffic.mode == "static":
        return traffic.d_fixed
    lo, hi = traffic.d_range
    return int(rng.integers(lo, hi + 1))


# Named presets for the packet-size ("traffic type") axis; all overridable.
TRAFFIC_PRESETS: dict[str, TrafficModel] = {
    "static-20": TrafficModel("static", d_fixed=20),
    "static-50": TrafficModel("static", d_fixed=50),
    "static-80": TrafficModel("static", d_fixed=80),
    "static-100": TrafficModel("static", d_fixed=100),
    "bursty-20-30": TrafficModel("bursty", d_range=(20, 30)),
    "bursty-20-50": TrafficModel("bursty", d_range=(20, 50)),
    "bursty-20-70": TrafficModel("bursty", d_range=(20, 70)),
    "bursty-20-100": TrafficModel("bursty", d_range=(20, 100)),
}


# ---------------------------------------------------------------------------
# State and actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterState:
    """
    Per-user sub-channel assignment plus the pool level index each user
    held after the last power assignment (level l means transmit power
    l * P_s / N_u before any budget rescale).
    """

    assignment: tuple[int, ...]
    power_level: tuple[int, ...]

    def counts(self, n_subchannels: int) -> tuple[int, ...]:
        c = [0] * n_subchannels
        for j in self.assignment:
            c[j] += 1
        return tuple(c)

    def members(self, subchannel: int) -> list[int]:
        return [k for k, j in enumerate(self.assignment) if j == subchannel]


@dataclass(frozen=True)
class ActionSpec:
    kind: str                 # "noop" | "move"
    source: int = -1
    target: int = -1


def enumerate_actions(n_subchannels: int) -> list[ActionSpec]:
    """
    Fixed action order: move(source, target) pairs in lexicographic order,
    then the no-op last.  Size N_s*(N_s-1) + 1.
    """
    if n_subchannels < 2:
        raise ConfigError("need at least 2 sub-channels")
    actions = []
    for s in range(n_subchannels):
        for t in range(n_subchannels):
            if s != t:
                actions.append(ActionSpec(kind="move", source=s, target=t))
    actions.append(ActionSpec(kind="noop"))
    return actions


def feasible_compositions(n_users: int, n_subchannels: int) -> list[tuple[int, ...]]:
    """All per-sub-channel count vectors with parts in {0} U [2, n_users]."""
    out: list[tuple[int, ...]] = []

    def rec(prefix, remaining, slots):
        if slots == 0:
            if remaining == 0:
                out.append(tuple(prefix))
            return
        for c in range(remaining + 1):
            if c == 1:
                continue
            rec(prefix + [c], remaining - c, slots - 1)

    rec([], n_users, n_subchannels)
    out.sort()
    return out


@dataclass(frozen=True)
class StepOutcome:
    next_state: ClusterState
    reward: float
    mean_error: float
    per_user_error: tuple[float, ...]
    per_user_rate: tuple[float, ...]
    accepted: bool
    connectivity: int


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvConfig:
    n_users: int = 5
    n_subchannels: int = 5
    blocklength: int = 100                 # M, symbols per packet
    traffic: TrafficModel = field(default_factory=TrafficModel)
    scheme: str = "noma"                   # "noma" | "oma"
    cell_radius_m: float = 500.0
    pathloss_exponent: float = 4.0
    sigma2_dbm_hz: float = -174.0
    bandwidth_hz: float = 1.0e6
    power_budget_dbm: float = 23.0         # P_s per sub-channel

    def __post_init__(self):
        if self.n_users < 2:
            raise ConfigError("n_users must be >= 2")
        if self.n_subchannels < 2:
            raise ConfigError("n_subchannels must be >= 2")
        if self.blocklength < 1:
            raise ConfigError("blocklength must be >= 1")
        if self.scheme not in ("noma", "oma"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not feasible_compositions(self.n_users, self.n_subchannels):
            raise ConfigError("no feasible clustering exists for this config")

    @property
    def noise_power_w(self) -> float:
        return noise_power_watts(self.sigma2_dbm_hz, self.bandwidth_hz)

    @property
    def power_budget_w(self) -> float:
        return dbm_to_watts(self.power_budget_dbm)


# ---------------------------------------------------------------------------
# Power assignment
# ---------------------------------------------------------------------------

def assign_powers(state: ClusterState, realization: ChannelRealization,
                  config: EnvConfig) -> Optional[tuple[list[float], list[int]]]:
    """
    Assign pool power levels inside every cluster.

    A cluster of size n draws the first n levels {l * P_s / N_u, l=1..n}
    from its pool.  Levels are handed out anti-assortatively first (weakest
    gain takes the largest level, the classical NOMA choice); if that
    breaks the received-power ordering along the gain-ascending chain, the
    assortative pairing is used, which always satisfies it.  If the drawn
    levels exceed the sub-channel budget P_s they are rescaled uniformly,
    preserving the ordering, so the per-sub-channel total never exceeds
    P_s.  Returns (powers, level indices) per user, or None if no pairing
    can respect the ordering (not reachable with the fallback, kept as a
    guard).
    """
    p_s = config.power_budget_w
    unit = p_s / config.n_users
    powers = [0.0] * config.n_users
    levels = [0] * config.n_users
    for j in range(config.n_subchannels):
        members = state.members(j)
        if not members:
            continue
        # gain-ascending chain: first entry is decoded last
        chain = sorted(members, key=lambda k: (realization.gains[k], k))
        n = len(chain)
        base = [(l + 1) * unit for l in range(n)]
        chosen = None
        for candidate in (list(reversed(base)), base):
            received = [p * realization.gains[k] for p, k in zip(candidate, chain)]
            if all(received[i] <= received[i + 1] for i in range(n - 1)):
                chosen = candidate
                break
        if chosen is None:
            return None
        total = sum(chosen)
        scale = 1.0 if total <= p_s else p_s / total
        for p, k in zip(chosen, chain):
            powers[k] = p * scale
            levels[k] = int(round(p / unit))
    return powers, levels


def compute_reward(prev_mean_error: float, new_mean_error: float,
                   prev_connectivity: int, new_connectivity: int,
                   sum_rate: float) -> float:
    """
    Sum rate if the slot's mean decoding error did not increase and the
    connected-user count is unchanged; else 0.
    """
    if new_mean_error <= prev_mean_error and new_connectivity == prev_connectivity:
        return sum_rate
    return 0.0


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------

class NomaUrllcEnv:
    """
    Single-owner environment instance.  Distinct replicas get distinct
    seed sequences and may run concurrently; one instance must not be
    shared mid-episode.

    State encoding for agents (versioned "counts-v1"): the length-N_s
    vector of per-sub-channel user counts divided by N_u.
    """

    ENCODING_VERSION = "counts-v1"

    def __init__(self, config: EnvConfig, seed: int | np.random.SeedSequence = 0,
                 topology: Topology | None = None):
        self.config = config
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        topo_ss, reset_ss, fading_ss, traffic_ss = ss.spawn(4)
        self._reset_rng = np.random.default_rng(reset_ss)
        self._fading_rng = np.random.default_rng(fading_ss)
        self._traffic_rng = np.random.default_rng(traffic_ss)
        if topology is None:
            topo_seed = int(topo_ss.generate_state(1)[0])
            topology = generate_topology(config.n_users, config.cell_radius_m,
                                         topo_seed, config.pathloss_exponent)
        if topology.n_users != config.n_users:
            raise ConfigError("topology size does not match n_users")
        self.topology = topology
        self.actions = enumerate_actions(config.n_subchannels)
        self.compositions = feasible_compositions(config.n_users, config.n_subchannels)
        self._comp_index = {c: i for i, c in enumerate(self.compositions)}
        self.n_states = len(self.compositions)
        self.n_actions = len(self.actions)
        self._encodings = {}
        for comp in self.compositions:
            vec = np.asarray(comp, dtype=float) / config.n_users
            vec.flags.writeable = False
            self._encodings[comp] = vec
        self._feasible_masks: dict[tuple[int, ...], np.ndarray] = {}

        self.state: ClusterState | None = None
        self.realization: ChannelRealization | None = None
        self._prev_mean_error = 1.0
        self._prev_connectivity = config.n_users
        self._last_errors = (1.0,) * config.n_users
        self._last_rates = (0.0,) * config.n_users

    # -- state helpers ------------------------------------------------------

    def encode(self, state: ClusterState) -> np.ndarray:
        counts = state.counts(self.config.n_subchannels)
        cached = self._encodings.get(counts)
        if cached is not None:
            return cached
        return np.asarray(counts, dtype=float) / self.config.n_users

    def state_index(self, state: ClusterState) -> int:
        return self._comp_index[state.counts(self.config.n_subchannels)]

    # -- episode control -----------------------------------------------------

    def reset(self) -> ClusterState:
        """
        Uniformly random feasible state: rejection-sample a random
        user-to-channel map until the count vector is feasible, then draw
        an initial fading block and resolve power levels.  Error history
        restarts at 1 so the first improving slot can earn reward.
        """
        cfg = self.config
        while True:
            assignment = tuple(int(a) for a in
                               self._reset_rng.integers(0, cfg.n_subchannels, cfg.n_users))
            counts = [0] * cfg.n_subchannels
            for j in assignment:
                counts[j] += 1
            if tuple(counts) in self._comp_index:
                break
        state = ClusterState(assignment=assignment, power_level=(0,) * cfg.n_users)
        self.realization = sample_gains(self.topology, self._fading_rng, cfg.noise_power_w)
        assigned = assign_powers(state, self.realization, cfg)
        if assigned is None:   # unreachable with the assortative fallback
            raise ConfigError("could not satisfy power ordering at reset")
        state = replace(state, power_level=tuple(assigned[1]))
        self.state = state
        self._prev_mean_error = 1.0
        self._prev_connectivity = cfg.n_users
        self._last_errors = (1.0,) * cfg.n_users
        self._last_rates = (0.0,) * cfg.n_users
        return state

    # -- actions -------------------------------------------------------------

    @staticmethod
    def _movers_needed(n_src: int, n_tgt: int) -> Optional[int]:
        """
        Users a move(source, target) must transfer, or None if infeasible.

        Single users move between occupied sub-channels; to keep every
        cluster-size partition reachable under the 0-or->=2 floor, a
        2-user source moves as a pair (merge/relocate) and an empty target
        is seeded with two users.  Anything that would strand a single
        user is infeasible.  Depends only on the count vector.
        """
        if n_src == 0:
            return None
        movers = 2 if (n_src == 2 or n_tgt == 0) else 1
        rest = n_src - movers
        if rest != 0 and rest < 2:
            return None
        if n_tgt + movers < 2:
            return None
        return movers

    def feasible_actions(self, state: ClusterState) -> np.ndarray:
        """Boolean mask over the action list: would apply_action accept it."""
        counts = state.counts(self.config.n_subchannels)
        mask = self._feasible_masks.get(counts)
        if mask is not None:
            return mask
        mask = np.array([a.kind == "noop" or
                         self._movers_needed(counts[a.source], counts[a.target]) is not None
                         for a in self.actions])
        mask.flags.writeable = False
        self._feasible_masks[counts] = mask
        return mask

    def apply_action(self, state: ClusterState, action: ActionSpec) -> Optional[ClusterState]:
        """
        Candidate next clustering, or None when the try must be discarded
        (the environment rejects it and the slot leaves no mark).
        """
        if action.kind == "noop":
            return state
        counts = state.counts(self.config.n_subchannels)
        movers_needed = self._movers_needed(counts[action.source], counts[action.target])
        if movers_needed is None:
            return None
        gains = self.realization.gains if self.realization is not None else None
        members = state.members(action.source)
        if gains is not None:
            members.sort(key=lambda k: (gains[k], k))
        movers = members[:movers_needed]
        assignment = list(state.assignment)
        for k in movers:
            assignment[k] = action.target
        return ClusterState(assignment=tuple(assignment), power_level=state.power_level)

    # -- slot evaluation -----------------------------------------------------

    def _evaluate_noma(self, state: ClusterState, realization: ChannelRealization,
                       packet_bits: Sequence[int]) -> tuple[ClusterState, list[float], list[float]]:
        cfg = self.config
        assigned = assign_powers(state, realization, cfg)
        if assigned is None:
            return None
        powers, levels = assigned
        errors = [1.0] * cfg.n_users
        rates = [0.0] * cfg.n_users
        m_block = cfg.blocklength
        for j in range(cfg.n_subchannels):
            members = state.members(j)
            if not members:
                continue
            member_powers = [powers[k] for k in members]
            sinr = sinr_per_user(members, member_powers, realization)
            received = [p * realization.gains[k] for p, k in zip(member_powers, members)]
            order = sic_order(received)
            failed = False
            for pos in order:
                k = members[pos]
                eps = decoding_error(sinr[pos], m_block, packet_bits[k])
                errors[k] = eps
                # Decode cascade: a user whose capacity falls below the
                # required decoding rate D/M (eps >= 1/2) cannot sustain
                # SIC, so it and every later-decoded user in the cluster
                # are lost.
                if failed or eps >= 0.5:
                    failed = True
                    rates[k] = 0.0
                else:
                    rates[k] = rate_at_error(sinr[pos], m_block, packet_bits[k], eps)
        next_state = replace(state, power_level=tuple(levels))
        return next_state, errors, rates

    def _evaluate_oma(self, state: ClusterState, realization: ChannelRealization,
                      packet_bits: Sequence[int]) -> tuple[ClusterState, list[float], list[float]]:
        """
        Orthogonal baseline: users of an n-cluster time-share the block
        (M/n symbols each) with no intra-cluster interference, splitting
        the same total power the NOMA pool would spend, so the comparison
        is energy-matched (an isolated user is identical in both schemes).
        """
        cfg = self.config
        p_s = cfg.power_budget_w
        unit = p_s / cfg.n_users
        sigma2 = realization.noise_power
        errors = [1.0] * cfg.n_users
        rates = [0.0] * cfg.n_users
        levels = [0] * cfg.n_users
        for j in range(cfg.n_subchannels):
            members = state.members(j)
            if not members:
                continue
            n = len(members)
            total = min(p_s, unit * n * (n + 1) / 2.0)
            p_user = total / n
            m_share = cfg.blocklength / n
            for k in members:
                gamma = p_user * realization.gains[k] / sigma2
                eps = decoding_error(gamma, m_share, packet_bits[k])
                errors[k] = eps
                # no SIC chain to break, but an eps >= 1/2 user is still
                # undecodable and counts as disconnected
                rates[k] = 0.0 if eps >= 0.5 else \
                    rate_at_error(gamma, m_share, packet_bits[k], eps)
                levels[k] = 1
        next_state = replace(state, power_level=tuple(levels))
        return next_state, errors, rates

    def _rejected(self) -> StepOutcome:
        return StepOutcome(next_state=self.state, reward=0.0,
                           mean_error=self._prev_mean_error,
                           per_user_error=self._last_errors,
                           per_user_rate=self._last_rates,
                           accepted=False,
                           connectivity=self._prev_connectivity)

    def step(self, action_index: int) -> StepOutcome:
        """
        One slot: apply the action (or discard the try), redraw fading,
        assign powers, run SIC and the finite-blocklength error model and
        pay the gated sum-rate reward.  Rejected tries consume no
        randomness and leave every piece of history untouched.
        """
        if self.state is None:
            raise ConfigError("call reset() before step()")
        cfg = self.config
        action = self.actions[action_index]
        candidate = self.apply_action(self.state, action)
        if candidate is None:
            return self._rejected()
        realization = sample_gains(self.topology, self._fading_rng, cfg.noise_power_w)
        packet_bits = [sample_packet_size(cfg.traffic, self._traffic_rng)
                       for _ in range(cfg.n_users)]
        if cfg.scheme == "oma":
            evaluated = self._evaluate_oma(candidate, realization, packet_bits)
        else:
            evaluated = self._evaluate_noma(candidate, realization, packet_bits)
        if evaluated is None:
            return self._rejected()
        next_state, errors, rates = evaluated
        mean_error = sum(errors) / cfg.n_users
        connectivity = sum(1 for r in rates if r > 0.0)
        sum_rate = sum(rates)
        reward = compute_reward(self._prev_mean_error, mean_error,
                                self._prev_connectivity, connectivity, sum_rate)
        self.state = next_state
        self.realization = realization
        self._prev_mean_error = mean_error
        self._prev_connectivity = connectivity
        self._last_errors = tuple(errors)
        self._last_rates = tuple(rates)
        return StepOutcome(next_state=next_state, reward=reward,
                           mean_error=mean_error,
                           per_user_error=tuple(errors),
                           per_user_rate=tuple(rates),
                           accepted=True, connectivity=connectivity)

    def oma_step(self, action_index: int) -> StepOutcome:
        """One slot under the orthogonal baseline, same clustering dynamics."""
        if self.config.scheme == "oma":
            return self.step(action_index)
        original = self.config
        object.__setattr__(self, "config", replace(original, scheme="oma"))
        try:
            return self.step(action_index)
        finally:
            object.__setattr__(self, "config", original)

    # -- constraint audit ------------------------------------------------------

    def check_constraints(self, state: ClusterState,
                          realization: ChannelRealization | None = None,
                          powers: Sequence[float] | None = None) -> None:
        """
        Assert the four constraint families on a state (used by tests).
        Raises ConfigError on any violation.
        """
        cfg = self.config
        counts = state.counts(cfg.n_subchannels)
        if sum(counts) != cfg.n_users:
            raise ConfigError("user count mismatch")
        for j, c in enumerate(counts):
            if c == 1:
                raise ConfigError(f"sub-channel {j} holds a single user")
        if len(state.assignment) != cfg.n_users:
            raise ConfigError("assignment length mismatch")
        if realization is None or powers is None:
            return
        p_s = cfg.power_budget_w
        for j in range(cfg.n_subchannels):
            members = state.members(j)
            if not members:
                continue
            total = sum(powers[k] for k in members)
            if total > p_s * (1.0 + 1e-12):
                raise ConfigError(f"sub-channel {j} power {total} exceeds budget {p_s}")
            chain = sorted(members, key=lambda k: (realization.gains[k], k))
            received = [powers[k] * realization.gains[k] for k in chain]
            for a, b in zip(received, received[1:]):
                if a > b * (1.0 + 1e-12):
                    raise ConfigError(f"received-power ordering violated on {j}")
