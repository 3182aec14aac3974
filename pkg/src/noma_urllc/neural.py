"""
Minimal fully connected value network and the deep SARSA-lambda agent.

No autodiff framework: forward pass, mean-squared-error loss on the taken
actions, exact reverse-mode gradients through ReLU (subgradient 0 at 0)
and a bias-corrected ADAM step are written out against numpy arrays.

Training follows the trace-seeded replay scheme: until the experience
memory first fills, actions come from the tabular trace-guided learner
and the network is never updated; afterwards the network drives the
epsilon-greedy policy and is regressed periodically on uniformly sampled
batches against a frozen target network.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .agents import (AgentConfig, EpisodeResult, QTable, TraceTable,
                     _step_lambda, epsilon_greedy, sarsa_lambda_sweep,
                     td_error, trace_update)

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Network parameters and math
# ---------------------------------------------------------------------------

def relu(x):
    """max(0, x); elementwise on arrays."""
    return np.maximum(0.0, x)


class MLPParams:
    """Ordered (weight, bias) pairs; hidden layers use ReLU, output is linear."""

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]]):
        for (w, b), (w2, _) in zip(layers, layers[1:]):
            if w.shape[1] != w2.shape[0]:
                raise ValueError("consecutive layer dimensions do not compose")
        for w, b in layers:
            if w.shape[1] != b.shape[0]:
                raise ValueError("bias length must match layer width")
        self.layers = layers

    @classmethod
    def initialize(cls, sizes: Sequence[int], rng: np.random.Generator) -> "MLPParams":
        """Uniform fan-in scaled weights, zero biases."""
        layers = []
        for n_in, n_out in zip(sizes, sizes[1:]):
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_in, n_out))
            b = np.zeros(n_out)
            layers.append((w, b))
        return cls(layers)

    def copy(self) -> "MLPParams":
        return MLPParams([(w.copy(), b.copy()) for w, b in self.layers])

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0][0].shape[0]] + [w.shape[1] for w, _ in self.layers]

    def save(self, path) -> None:
        arrays = {"version": np.array([CHECKPOINT_VERSION]),
                  "sizes": np.array(self.sizes)}
        for i, (w, b) in enumerate(self.layers):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "MLPParams":
        with np.load(path) as data:
            if int(data["version"][0]) != CHECKPOINT_VERSION:
                raise ValueError("unsupported checkpoint version")
            n_layers = len(data["sizes"]) - 1
            layers = [(data[f"w{i}"].copy(), data[f"b{i}"].copy())
                      for i in range(n_layers)]
        return cls(layers)


def _forward_trace(params: MLPParams, x: np.ndarray):
    """Forward pass keeping post-activation values for backprop."""
    acts = [x]
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        z = h @ w + b
        h = z if i == last else relu(z)
        acts.append(h)
    return acts


def forward(params: MLPParams, state_vector: np.ndarray) -> np.ndarray:
    """Per-action values for one state vector or a (batch, n_in) stack."""
    x = np.asarray(state_vector, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != params.layers[0][0].shape[0]:
        raise ValueError(f"input width {x.shape[1]} does not match network "
                         f"input size {params.layers[0][0].shape[0]}")
    out = _forward_trace(params, x)[-1]
    return out[0] if squeeze else out


def mse_loss(predicted: Sequence[float], targets: Sequence[float]) -> float:
    """Mean squared error over the batch's taken-action values."""
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError("predicted/target length mismatch")
    if p.size == 0:
        raise ValueError("empty batch")
    d = p - t
    return float(np.mean(d * d))


def dqn_target(reward: float, gamma: float, target_params: MLPParams,
               next_state: np.ndarray) -> float:
    """Bootstrap target: r + gamma * max_a Q(s', a; target net)."""
    return reward + gamma * float(np.max(forward(target_params, next_state)))


def dqn_targets(rewards: np.ndarray, gamma: float, target_params: MLPParams,
                next_states: np.ndarray) -> np.ndarray:
    """Vectorized dqn_target over a batch."""
    q_next = forward(target_params, next_states)
    return rewards + gamma * np.max(q_next, axis=1)


def _loss_and_grads(params: MLPParams, states: np.ndarray, actions: np.ndarray,
                    targets: np.ndarray):
    """One shared forward trace feeding both the loss and the gradients."""
    x = np.asarray(states, dtype=float)
    acts = _forward_trace(params, x)
    batch = x.shape[0]
    out = acts[-1]
    rows = np.arange(batch)
    residual = out[rows, actions] - targets
    loss = float(np.mean(residual * residual))
    delta = np.zeros_like(out)
    delta[rows, actions] = 2.0 * residual / batch
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = delta @ w.T
            delta *= acts[i] > 0.0
    return loss, grads


def backprop(params: MLPParams, states: np.ndarray, actions: np.ndarray,
             targets: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Exact gradients of mse_loss(Q(s)[a], target) w.r.t. every weight and
    bias.  Only the taken-action output coordinates carry error; ReLU
    passes gradient where its post-activation is positive (subgradient 0
    at 0).
    """
    return _loss_and_grads(params, states, actions, targets)[1]


@dataclass
class AdamState:
    """Bias-corrected first/second moment accumulators per parameter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: MLPParams, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for w, b in params.layers:
            state.m.append((np.zeros_like(w), np.zeros_like(b)))
            state.v.append((np.zeros_like(w), np.zeros_like(b)))
        return state


def adam_update(adam: AdamState, params: MLPParams,
                grads: list[tuple[np.ndarray, np.ndarray]]) -> None:
    """One ADAM step, in place, deterministic."""
    adam.step += 1
    t = adam.step
    b1, b2 = adam.beta1, adam.beta2
    scale = adam.lr * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
    for i, (w, b) in enumerate(params.layers):
        for j, (param, grad) in enumerate(((w, grads[i][0]), (b, grads[i][1]))):
            m = adam.m[i][j]
            v = adam.v[i][j]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            param -= scale * m / (np.sqrt(v) + adam.eps)


def sync_target(primary: MLPParams) -> MLPParams:
    """Frozen deep copy of the primary network."""
    return primary.copy()


# ---------------------------------------------------------------------------
# Replay memory
# ---------------------------------------------------------------------------

class Experience(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_action: int
    trace: float


class ReplayMemory:
    """FIFO ring buffer with uniform without-replacement sampling."""

    def __init__(self, capacity: int = 500):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._buffer: list[Experience] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._buffer)

    @property
    def full(self) -> bool:
        return len(self._buffer) >= self.capacity

    def push(self, experience: Experience) -> None:
        if len(self._buffer) < self.capacity:
            self._buffer.append(experience)
        else:
            self._buffer[self._cursor] = experience
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int,
               rng: np.random.Generator) -> Optional[list[Experience]]:
        """Uniform batch without replacement; None while under-filled."""
        if batch_size > len(self._buffer):
            return None
        idx = rng.choice(len(self._buffer), size=batch_size, replace=False)
        return [self._buffer[i] for i in idx]


# ---------------------------------------------------------------------------
# Deep SARSA-lambda agent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkConfig:
    hidden_units: int = 500
    hidden_layers: int = 2
    memory_capacity: int = 500
    batch_size: int = 500
    update_period: int = 50        # env steps between gradient steps
    target_sync_period: int = 50   # env steps between target refreshes
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


class DeepSarsaLambdaAgent:
    """
    Couples the tabular SARSA-lambda core (Q-table + reliability traces)
    with the value network.  The tabular core always learns and guides the
    policy until the replay memory first fills; from then on actions are
    epsilon-greedy on the primary network and the network trains from
    trace-stamped replayed experience.
    """

    def __init__(self, n_inputs: int, n_actions: int, n_states: int,
                 agent_cfg: AgentConfig, net_cfg: NetworkConfig = NetworkConfig(),
                 seed: int | np.random.SeedSequence = 0):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init_ss, policy_ss, sample_ss = ss.spawn(3)
        self.cfg = agent_cfg
        self.net_cfg = net_cfg
        sizes = [n_inputs] + [net_cfg.hidden_units] * net_cfg.hidden_layers + [n_actions]
        self.primary = MLPParams.initialize(sizes, np.random.default_rng(init_ss))
        self.target = sync_target(self.primary)
        self.adam = AdamState.for_params(self.primary, lr=net_cfg.adam_lr,
                                         beta1=net_cfg.adam_beta1,
                                         beta2=net_cfg.adam_beta2,
                                         eps=net_cfg.adam_eps)
        self.memory = ReplayMemory(net_cfg.memory_capacity)
        self.qtable = QTable(n_states, n_actions)
        self.traces = TraceTable(n_states, n_actions)
        self._policy_rng = np.random.default_rng(policy_ss)
        self._sample_rng = np.random.default_rng(sample_ss)
        self.total_steps = 0
        self.updates = 0
        self.syncs = 0
        self.losses: list[float] = []
        # per-state policy rows are valid until the primary net changes
        self._policy_cache: dict[int, np.ndarray] = {}

    # -- policy ---------------------------------------------------------------

    def act(self, state_index: int, state_vec: np.ndarray,
            epsilon: Optional[float] = None,
            feasible: Optional[np.ndarray] = None) -> int:
        """
        Trace-guided tabular policy before the memory fills, DNN after.

        The greedy branch skips allocations the reliability machinery
        knows the environment will discard (`feasible` mask); exploration
        stays uniform over the full action set, so rejected trials still
        occur and keep their values calibrated.
        """
        if self.memory.full:
            qrow = self._policy_cache.get(state_index)
            if qrow is None:
                qrow = forward(self.primary, state_vec)
                self._policy_cache[state_index] = qrow
        else:
            qrow = self.qtable.values[state_index]
        if feasible is not None and feasible.any():
            qrow = np.where(feasible, qrow, -np.inf)
        eps = self.cfg.epsilon if epsilon is None else epsilon
        return epsilon_greedy(qrow, eps, self._policy_rng)

    # -- learning -------------------------------------------------------------

    def _train_batch(self) -> float:
        batch = self.memory.sample(self.net_cfg.batch_size, self._sample_rng)
        if batch is None:
            return float("nan")
        states = np.stack([e.state for e in batch])
        actions = np.asarray([e.action for e in batch])
        rewards = np.asarray([e.reward for e in batch], dtype=float)
        next_states = np.stack([e.next_state for e in batch])
        targets = dqn_targets(rewards, self.cfg.gamma, self.target, next_states)
        loss, grads = _loss_and_grads(self.primary, states, actions, targets)
        adam_update(self.adam, self.primary, grads)
        self._policy_cache.clear()
        self.updates += 1
        self.losses.append(loss)
        return loss

    def observe(self, s_idx: int, s_vec: np.ndarray, action: int, reward: float,
                s2_idx: int, s2_vec: np.ndarray, next_action: int) -> Optional[float]:
        """
        One transition: tabular SARSA-lambda update, trace-stamped replay
        push, then a periodic network regression step and target sync.
        Returns the batch loss when a network update ran, else None.
        """
        cfg = self.cfg
        delta = td_error(reward, self.qtable.values[s2_idx, next_action],
                         self.qtable.values[s_idx, action], cfg.gamma)
        lam = _step_lambda(cfg, self.traces.values[s_idx, action], delta)
        trace_update(self.traces, s_idx, action, cfg.gamma, lam)
        sarsa_lambda_sweep(self.qtable, self.traces, delta, cfg.alpha)
        self.memory.push(Experience(state=np.array(s_vec, dtype=float),
                                    action=action, reward=reward,
                                    next_state=np.array(s2_vec, dtype=float),
                                    next_action=next_action,
                                    trace=float(self.traces.values[s_idx, action])))
        self.total_steps += 1
        loss = None
        if self.memory.full and self.total_steps % self.net_cfg.update_period == 0:
            loss = self._train_batch()
        if self.total_steps % self.net_cfg.target_sync_period == 0:
            self.target = sync_target(self.primary)
            self.syncs += 1
        return loss

    # -- episode driver ---------------------------------------------------------

    def run_episode(self, env, n_steps: int, measure_time: bool = True,
                    epsilon: Optional[float] = None) -> EpisodeResult:
        """One episode against an environment exposing reset/step/encode/state_index."""
        self.traces.reset()
        state = env.reset()
        s_idx = env.state_index(state)
        s_vec = env.encode(state)
        mask_of = getattr(env, "feasible_actions", None)
        action = self.act(s_idx, s_vec, epsilon,
                          mask_of(state) if mask_of else None)

        err_sum = 0.0
        reward_sum = 0.0
        losses = []
        t0 = time.perf_counter() if measure_time else 0.0
        for _ in range(n_steps):
            out = env.step(action)
            s2_idx = env.state_index(out.next_state)
            s2_vec = env.encode(out.next_state)
            next_action = self.act(s2_idx, s2_vec, epsilon,
                                   mask_of(out.next_state) if mask_of else None)
            loss = self.observe(s_idx, s_vec, action, out.reward,
                                s2_idx, s2_vec, next_action)
            if loss is not None:
                losses.append(loss)
            err_sum += out.mean_error
            reward_sum += out.reward
            s_idx, s_vec, action = s2_idx, s2_vec, next_action
        elapsed = (time.perf_counter() - t0) if measure_time else 0.0
        return EpisodeResult(mean_error=err_sum / n_steps,
                             cumulative_reward=reward_sum,
                             mean_reward=reward_sum / n_steps,
                             cluster_time_s=elapsed,
                             steps=n_steps,
                             mean_loss=float(np.mean(losses)) if losses else float("nan"))
