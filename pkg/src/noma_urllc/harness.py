"""
Experiment runner: seed management, episode loops, metric rows, sweeps.

Every knob of the simulated network and the learners is a named config
key; defaults reproduce the reference setting (5 sub-channels, 500
episodes of 500 trials, 1 MHz band at -174 dBm/Hz, path-loss exponent 4,
tabular step size 0.75, discount 0.6, epsilon 0.01, two 500-unit hidden
layers, replay memory and batch of 500).

A replica is one (config, seed) run; replicas own independent seed
sequences, so adding or removing seeds never perturbs another replica's
stream.  With measure_time=False the emitted CSV is byte-reproducible;
wall-clock clustering time is inherently nondeterministic, so timing runs
opt in (the default) and determinism checks opt out.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .agents import AgentConfig, EpisodeResult, QTable, TraceTable, run_episode_tabular
from .channel import ConfigError
from .environment import (TRAFFIC_PRESETS, EnvConfig, NomaUrllcEnv, TrafficModel)
from .neural import DeepSarsaLambdaAgent, NetworkConfig

AGENT_KINDS = ("q", "sarsa", "sarsa-lambda", "deep-sarsa-lambda")
_TABULAR_VARIANTS = {"q": "qlearning", "sarsa": "sarsa", "sarsa-lambda": "sarsa_lambda"}

CSV_HEADER = ("episode,seed,agent,scheme,traffic,n_users,M,D_lo,D_hi,"
              "sigma2_dbm,mean_error,mean_reward,dnn_loss,cluster_time_s")


@dataclass(frozen=True)
class ExperimentConfig:
    # network
    n_users: int = 5
    n_subchannels: int = 5
    total_bss: int = 1
    blocklength: int = 100
    bandwidth_hz: float = 1.0e6
    sigma2_dbm_hz: float = -174.0
    pathloss_exponent: float = 4.0
    cell_radius_m: float = 500.0
    power_budget_dbm: float = 23.0
    scheme: str = "noma"
    # traffic: preset name, optionally overridden field by field
    traffic: str = "static-50"
    traffic_mode: Optional[str] = None
    d_fixed: Optional[int] = None
    d_lo: Optional[int] = None
    d_hi: Optional[int] = None
    # learning
    agent: str = "deep-sarsa-lambda"
    episodes: int = 500            # T
    trials: int = 500              # T_t, steps per episode
    alpha: float = 0.75
    gamma: float = 0.6
    epsilon: float = 0.01          # exploration floor
    epsilon_start: float = 1.0     # annealed exploration: start fully random
    epsilon_hold: int = 50         # episodes of pure random exploration
    epsilon_decay: float = 0.985   # then multiplicative decay to the floor
    lambda_mode: str = "fixed"
    lambda_fixed: float = 0.99
    # network function approximator
    hidden_layers: int = 2
    hidden_units: int = 500
    memory_capacity: int = 500
    batch_size: int = 500
    dnn_update_period: int = 50
    target_sync_period: int = 50
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # run control
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    final_window: int = 100
    measure_time: bool = True

    def resolve_traffic(self) -> TrafficModel:
        base = TRAFFIC_PRESETS.get(self.traffic)
        if base is None and self.traffic_mode is None:
            raise ConfigError(f"unknown traffic preset {self.traffic!r}; "
                              f"known: {sorted(TRAFFIC_PRESETS)}")
        mode = self.traffic_mode or base.mode
        d_fixed = self.d_fixed if self.d_fixed is not None else \
            (base.d_fixed if base else 50)
        d_lo = self.d_lo if self.d_lo is not None else \
            (base.d_range[0] if base else 20)
        d_hi = self.d_hi if self.d_hi is not None else \
            (base.d_range[1] if base else 100)
        return TrafficModel(mode=mode, d_fixed=d_fixed, d_range=(d_lo, d_hi))

    def env_config(self) -> EnvConfig:
        return EnvConfig(n_users=self.n_users, n_subchannels=self.n_subchannels,
                         blocklength=self.blocklength, traffic=self.resolve_traffic(),
                         scheme=self.scheme, cell_radius_m=self.cell_radius_m,
                         pathloss_exponent=self.pathloss_exponent,
                         sigma2_dbm_hz=self.sigma2_dbm_hz,
                         bandwidth_hz=self.bandwidth_hz,
                         power_budget_dbm=self.power_budget_dbm)

    def agent_config(self) -> AgentConfig:
        return AgentConfig(alpha=self.alpha, gamma=self.gamma, epsilon=self.epsilon,
                           lambda_mode=self.lambda_mode, lambda_fixed=self.lambda_fixed)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(hidden_units=self.hidden_units,
                             hidden_layers=self.hidden_layers,
                             memory_capacity=self.memory_capacity,
                             batch_size=self.batch_size,
                             update_period=self.dnn_update_period,
                             target_sync_period=self.target_sync_period,
                             adam_lr=self.adam_lr, adam_beta1=self.adam_beta1,
                             adam_beta2=self.adam_beta2, adam_eps=self.adam_eps)

    def validate(self) -> None:
        """Check every field against module preconditions before any work."""
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"unknown agent {self.agent!r}; known: {AGENT_KINDS}")
        if self.episodes < 1 or self.trials < 1:
            raise ConfigError("episodes and trials must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.final_window < 1:
            raise ConfigError("final_window must be >= 1")
        if self.total_bss != 1:
            raise ConfigError("only the single-BS cell is modeled")
        if not (0.0 <= self.epsilon_start <= 1.0):
            raise ConfigError("epsilon_start must lie in [0, 1]")
        if not (0.0 < self.epsilon_decay <= 1.0):
            raise ConfigError("epsilon_decay must lie in (0, 1]")
        if self.epsilon_hold < 0:
            raise ConfigError("epsilon_hold must be >= 0")
        self.env_config()
        self.agent_config()
        self.network_config()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "seeds" in data:
            data = dict(data, seeds=tuple(data["seeds"]))
        return cls(**data)


@dataclass(frozen=True)
class MetricsRecord:
    episode: int
    seed: int
    agent: str
    scheme: str
    traffic: str
    n_users: int
    blocklength: int
    d_lo: int
    d_hi: int
    sigma2_dbm: float
    mean_error: float
    mean_reward: float
    dnn_loss: float     # nan for tabular agents / episodes without updates
    cluster_time_s: float

    def csv_row(self) -> str:
        loss = "" if math.isnan(self.dnn_loss) else repr(self.dnn_loss)
        return (f"{self.episode},{self.seed},{self.agent},{self.scheme},"
                f"{self.traffic},{self.n_users},{self.blocklength},"
                f"{self.d_lo},{self.d_hi},{self.sigma2_dbm!r},"
                f"{self.mean_error!r},{self.mean_reward!r},{loss},"
                f"{self.cluster_time_s!r}")


def _record(config: ExperimentConfig, seed: int, episode: int,
            result: EpisodeResult) -> MetricsRecord:
    traffic = config.resolve_traffic()
    return MetricsRecord(episode=episode, seed=seed, agent=config.agent,
                         scheme=config.scheme, traffic=config.traffic,
                         n_users=config.n_users, blocklength=config.blocklength,
                         d_lo=traffic.d_lo, d_hi=traffic.d_hi,
                         sigma2_dbm=config.sigma2_dbm_hz,
                         mean_error=result.mean_error,
                         mean_reward=result.mean_reward,
                         dnn_loss=result.mean_loss,
                         cluster_time_s=result.cluster_time_s)


def _episode_epsilon(config: ExperimentConfig, episode: int) -> float:
    """
    Annealed exploration: hold eps_start for epsilon_hold episodes, then
    decay multiplicatively down to the epsilon floor.
    """
    steps = max(0, episode - config.epsilon_hold)
    return max(config.epsilon, config.epsilon_start * config.epsilon_decay ** steps)


def run_replica(config: ExperimentConfig, seed: int) -> list[MetricsRecord]:
    """All episodes for one seed, one row per episode."""
    root = np.random.SeedSequence(seed)
    env_ss, agent_ss = root.spawn(2)
    env = NomaUrllcEnv(config.env_config(), seed=env_ss)
    records: list[MetricsRecord] = []
    if config.agent in _TABULAR_VARIANTS:
        variant = _TABULAR_VARIANTS[config.agent]
        qtable = QTable(env.n_states, env.n_actions)
        traces = TraceTable(env.n_states, env.n_actions)
        rng = np.random.default_rng(agent_ss)
        for ep in range(config.episodes):
            result = run_episode_tabular(env, qtable, config.agent_config(), variant,
                                         config.trials, rng, traces=traces,
                                         measure_time=config.measure_time,
                                         epsilon=_episode_epsilon(config, ep))
            records.append(_record(config, seed, ep, result))
    else:
        agent = DeepSarsaLambdaAgent(n_inputs=config.n_subchannels,
                                     n_actions=env.n_actions,
                                     n_states=env.n_states,
                                     agent_cfg=config.agent_config(),
                                     net_cfg=config.network_config(),
                                     seed=agent_ss)
        for ep in range(config.episodes):
            result = agent.run_episode(env, config.trials,
                                       measure_time=config.measure_time,
                                       epsilon=_episode_epsilon(config, ep))
            records.append(_record(config, seed, ep, result))
    return records


def run_experiment(config: ExperimentConfig,
                   out_csv: Optional[Path] = None) -> list[MetricsRecord]:
    """
    Run every configured seed; deterministic per (config, seed).  Rows are
    ordered by (seed position, episode).  Optionally writes the CSV.
    """
    config.validate()
    records: list[MetricsRecord] = []
    for seed in config.seeds:
        records.extend(run_replica(config, seed))
    if out_csv is not None:
        write_csv(records, out_csv)
    return records


def write_csv(records: Sequence[MetricsRecord], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER] + [r.csv_row() for r in records]
    path.write_text("\n".join(lines) + "\n")


def final_window_error(records: Sequence[MetricsRecord], window: int,
                       seed: Optional[int] = None) -> float:
    """Mean of per-episode mean error over the last `window` episodes."""
    rows = [r for r in records if seed is None or r.seed == seed]
    if not rows:
        raise ValueError("no records to aggregate")
    last = max(r.episode for r in rows)
    tail = [r.mean_error for r in rows if r.episode > last - window]
    return sum(tail) / len(tail)


def measure_clustering_time(records: Sequence[MetricsRecord]) -> float:
    """Mean wall-clock seconds spent in the allocation loop per episode."""
    if not records:
        raise ValueError("no records to aggregate")
    return sum(r.cluster_time_s for r in records) / len(records)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _sweep_point(config: ExperimentConfig) -> dict:
    records = run_experiment(config)
    per_seed = {str(seed): final_window_error(records, config.final_window, seed)
                for seed in config.seeds}
    return {"per_seed_final_error": per_seed,
            "mean_final_error": sum(per_seed.values()) / len(per_seed),
            "records": records}


def _summary_header(config: ExperimentConfig, sweep: str) -> dict:
    return {"sweep": sweep,
            "state_encoding": NomaUrllcEnv.ENCODING_VERSION,
            "config": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in asdict(config).items()}}


def sweep_symbol_rate(config: ExperimentConfig, m_list: Sequence[int],
                      out_dir: Optional[Path] = None,
                      schemes: Sequence[str] = ("noma", "oma")) -> dict:
    """Final-window error per blocklength, NOMA and its OMA twin."""
    config.validate()
    summary = _summary_header(config, "symbol_rate")
    points = []
    all_records = []
    for m in m_list:
        for scheme in schemes:
            point_cfg = replace(config, blocklength=int(m), scheme=scheme)
            point = _sweep_point(point_cfg)
            all_records.extend(point.pop("records"))
            points.append({"M": int(m), "scheme": scheme, **point})
    summary["points"] = points
    _emit(summary, all_records, out_dir, "sweep_symbol_rate")
    return summary


def sweep_packet_size(config: ExperimentConfig,
                      d_ranges: Sequence[tuple[int, int]],
                      out_dir: Optional[Path] = None,
                      schemes: Sequence[str] = ("noma", "oma")) -> dict:
    """Final-window error per bursty packet-size range."""
    config.validate()
    summary = _summary_header(config, "packet_size")
    points = []
    all_records = []
    for d_lo, d_hi in d_ranges:
        for scheme in schemes:
            point_cfg = replace(config, traffic=f"bursty-{d_lo}-{d_hi}",
                                traffic_mode="bursty", d_lo=int(d_lo),
                                d_hi=int(d_hi), scheme=scheme)
            point = _sweep_point(point_cfg)
            all_records.extend(point.pop("records"))
            points.append({"D_lo": int(d_lo), "D_hi": int(d_hi),
                           "scheme": scheme, **point})
    summary["points"] = points
    _emit(summary, all_records, out_dir, "sweep_packet_size")
    return summary


def sweep_noise(config: ExperimentConfig, sigma2_list: Sequence[float],
                out_dir: Optional[Path] = None) -> dict:
    """Final-window error per noise density (dBm/Hz)."""
    config.validate()
    summary = _summary_header(config, "noise")
    points = []
    all_records = []
    for sigma2 in sigma2_list:
        point_cfg = replace(config, sigma2_dbm_hz=float(sigma2))
        point = _sweep_point(point_cfg)
        all_records.extend(point.pop("records"))
        points.append({"sigma2_dbm": float(sigma2), **point})
    summary["points"] = points
    _emit(summary, all_records, out_dir, "sweep_noise")
    return summary


def _emit(summary: dict, records: list, out_dir: Optional[Path], stem: str) -> None:
    if out_dir is None:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(records, out_dir / f"{stem}.csv")
    with open(out_dir / f"{stem}.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
