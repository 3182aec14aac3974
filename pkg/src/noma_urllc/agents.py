"""
Tabular value learners: Q-learning, SARSA and SARSA-lambda with replacing
reliability traces.

The trace table remembers recently visited state-action pairs; each step
every entry decays by gamma*lambda and the visited pair is reset to 1, so
TD credit flows backwards along the recent path.  lambda is either the
fixed 0.99 default or recomputed per step from trace recency and the
normalized TD-error magnitude (dynamic mode).

One agent owns one environment; replicas parallelize at the process
level, never by sharing tables.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AgentConfig:
    alpha: float = 0.75           # tabular step size
    gamma: float = 0.6            # discount
    epsilon: float = 0.01         # exploration rate
    lambda_mode: str = "fixed"    # "fixed" | "dynamic"
    lambda_fixed: float = 0.99
    n_step: int = 1               # horizon for the n-step return utility

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must lie in [0, 1)")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if not (0.0 <= self.lambda_fixed <= 1.0):
            raise ValueError("lambda must lie in [0, 1]")
        if self.lambda_mode not in ("fixed", "dynamic"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")


class _Table:
    """Dense (state x action) table with a versioned JSON dump."""

    kind = "table"

    def __init__(self, n_states: int, n_actions: int):
        self.values = np.zeros((n_states, n_actions), dtype=float)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def save(self, path) -> None:
        payload = {"version": CHECKPOINT_VERSION, "kind": self.kind,
                   "n_states": self.shape[0], "n_actions": self.shape[1],
                   "values": self.values.tolist()}
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        table = cls(payload["n_states"], payload["n_actions"])
        table.values[:] = np.asarray(payload["values"], dtype=float)
        return table


class QTable(_Table):
    kind = "q-table"


class TraceTable(_Table):
    kind = "trace-table"

    def reset(self) -> None:
        self.values[:] = 0.0


def epsilon_greedy(qrow: Sequence[float], epsilon: float,
                   rng: np.random.Generator) -> int:
    """Greedy action (ties to the lowest index) w.p. 1-eps, else uniform."""
    qrow = np.asarray(qrow)
    if qrow.size == 0:
        raise ValueError("empty action-value row")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(qrow.size))
    return int(np.argmax(qrow))


def td_error(reward: float, q_next: float, q_curr: float, gamma: float) -> float:
    """One-step TD error: r + gamma * Q(s', a') - Q(s, a)."""
    return reward + gamma * q_next - q_curr


def trace_update(traces: TraceTable, state: int, action: int, gamma: float,
                 lam: float, replacing: bool = True) -> None:
    """
    Decay every trace by gamma*lambda, then mark the visited pair:
    replacing traces reset it to 1, accumulating traces add 1.
    """
    traces.values *= gamma * lam
    if replacing:
        traces.values[state, action] = 1.0
    else:
        traces.values[state, action] += 1.0


def sarsa_lambda_sweep(qtable: QTable, traces: TraceTable, delta: float,
                       alpha: float) -> None:
    """Credit the TD error across all traced pairs: Q += alpha*delta*tau."""
    if qtable.shape != traces.shape:
        raise ValueError("Q-table and trace-table shapes differ")
    qtable.values += alpha * delta * traces.values


def q_learning_update(qtable: QTable, transition: tuple[int, int, float, int],
                      alpha: float, gamma: float) -> None:
    """Off-policy backup: Q(s,a) <- (1-a)Q(s,a) + a[r + g max_a' Q(s',a')]."""
    s, a, r, s2 = transition
    target = r + gamma * float(np.max(qtable.values[s2]))
    qtable.values[s, a] = (1.0 - alpha) * qtable.values[s, a] + alpha * target


def sarsa_update(qtable: QTable, transition: tuple[int, int, float, int, int],
                 alpha: float, gamma: float) -> None:
    """On-policy backup bootstrapping on the actually chosen next action."""
    s, a, r, s2, a2 = transition
    target = r + gamma * qtable.values[s2, a2]
    qtable.values[s, a] = (1.0 - alpha) * qtable.values[s, a] + alpha * target


def n_step_return(rewards: Sequence[float], bootstrap_q: float, gamma: float,
                  n: int) -> float:
    """q_n = r_1 + g r_2 + ... + g^{n-1} r_n + g^n Q(s_{t+n})."""
    if n < 1 or len(rewards) != n:
        raise ValueError("need exactly n rewards with n >= 1")
    total = 0.0
    g = 1.0
    for r in rewards:
        total += g * r
        g *= gamma
    return total + g * bootstrap_q


def lambda_return(q_n_list: Sequence[float], lam: float) -> float:
    """
    Geometric mixture of n-step returns; the last available return absorbs
    the remaining geometric mass so the weights sum to 1 on episodic ends:

        (1-lam) sum_{n<N} lam^{n-1} q_n  +  lam^{N-1} q_N
    """
    if not (0.0 <= lam <= 1.0):
        raise ValueError("lambda must lie in [0, 1]")
    if not q_n_list:
        raise ValueError("need at least one n-step return")
    total = 0.0
    weight = 1.0
    for q in q_n_list[:-1]:
        total += (1.0 - lam) * weight * q
        weight *= lam
    return total + weight * q_n_list[-1]


def dynamic_lambda(trace_value: float, td_error_magnitude: float,
                   gamma: float) -> float:
    """
    Per-step lambda from trace recency plus normalized TD surprise:

        lam = gamma * tau + (1 - gamma * tau) * |delta| / (1 + |delta|)

    clamped into [0, 1].  Recently revisited, surprising pairs push lambda
    towards 1 (long credit horizon); cold, unsurprising ones towards 0.
    """
    base = gamma * trace_value
    x = abs(td_error_magnitude)
    lam = base + (1.0 - base) * (x / (1.0 + x))
    return min(1.0, max(0.0, lam))


@dataclass
class EpisodeResult:
    mean_error: float
    cumulative_reward: float
    mean_reward: float
    cluster_time_s: float
    steps: int
    mean_loss: float = float("nan")   # DNN variants only


def _step_lambda(cfg: AgentConfig, trace_value: float, delta: float) -> float:
    if cfg.lambda_mode == "dynamic":
        return dynamic_lambda(trace_value, abs(delta), cfg.gamma)
    return cfg.lambda_fixed


def run_episode_tabular(env, qtable: QTable, cfg: AgentConfig, variant: str,
                        n_steps: int, rng: np.random.Generator,
                        traces: Optional[TraceTable] = None,
                        measure_time: bool = True,
                        epsilon: Optional[float] = None) -> EpisodeResult:
    """
    One episode of act -> observe -> update for a tabular learner.

    variant: "qlearning" | "sarsa" | "sarsa_lambda".  Traces are zeroed at
    episode start.  Rejected environment steps still consume a trial and
    update values with reward 0 against the unchanged state.  `epsilon`
    overrides the config value for this episode (annealed exploration
    schedules live in the harness).
    """
    if variant not in ("qlearning", "sarsa", "sarsa_lambda"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "sarsa_lambda":
        if traces is None:
            traces = TraceTable(*qtable.shape)
        traces.reset()
    eps = cfg.epsilon if epsilon is None else epsilon

    state = env.reset()
    s = env.state_index(state)
    a = epsilon_greedy(qtable.values[s], eps, rng)

    err_sum = 0.0
    reward_sum = 0.0
    t0 = time.perf_counter() if measure_time else 0.0
    for _ in range(n_steps):
        out = env.step(a)
        r = out.reward
        s2 = env.state_index(out.next_state)
        a2 = epsilon_greedy(qtable.values[s2], eps, rng)
        if variant == "qlearning":
            q_learning_update(qtable, (s, a, r, s2), cfg.alpha, cfg.gamma)
        elif variant == "sarsa":
            sarsa_update(qtable, (s, a, r, s2, a2), cfg.alpha, cfg.gamma)
        else:
            delta = td_error(r, qtable.values[s2, a2], qtable.values[s, a], cfg.gamma)
            lam = _step_lambda(cfg, traces.values[s, a], delta)
            trace_update(traces, s, a, cfg.gamma, lam)
            sarsa_lambda_sweep(qtable, traces, delta, cfg.alpha)
        err_sum += out.mean_error
        reward_sum += r
        s, a = s2, a2
    elapsed = (time.perf_counter() - t0) if measure_time else 0.0
    return EpisodeResult(mean_error=err_sum / n_steps,
                         cumulative_reward=reward_sum,
                         mean_reward=reward_sum / n_steps,
                         cluster_time_s=elapsed,
                         steps=n_steps)
