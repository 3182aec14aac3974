"""Uplink NOMA-URLLC simulator with reinforcement-learning resource allocation."""

from .fbl import (FblPoint, achievable_rate, channel_dispersion, decoding_error,
                  gaussian_q, gaussian_q_inv, psi, rate_at_error)
from .channel import (ChannelRealization, ConfigError, Topology, generate_topology,
                      sample_gains, sic_order, sinr_per_user)
from .environment import (ActionSpec, ClusterState, EnvConfig, NomaUrllcEnv,
                          StepOutcome, TrafficModel, TRAFFIC_PRESETS,
                          assign_powers, compute_reward, enumerate_actions,
                          feasible_compositions, sample_packet_size)
from .agents import (AgentConfig, EpisodeResult, QTable, TraceTable,
                     dynamic_lambda, epsilon_greedy, lambda_return, n_step_return,
                     q_learning_update, run_episode_tabular, sarsa_lambda_sweep,
                     sarsa_update, td_error, trace_update)
from .neural import (AdamState, DeepSarsaLambdaAgent, Experience, MLPParams,
                     NetworkConfig, ReplayMemory, adam_update, backprop,
                     dqn_target, dqn_targets, forward, mse_loss, relu, sync_target)
from .harness import (ExperimentConfig, MetricsRecord, final_window_error,
                      measure_clustering_time, run_experiment, run_replica,
                      sweep_noise, sweep_packet_size, sweep_symbol_rate, write_csv)

__version__ = "0.1.0"
