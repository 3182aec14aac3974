"""Experiment runner: determinism, seed isolation, config plumbing, CLI."""

import json

import numpy as np
import pytest

from noma_urllc.channel import ConfigError
from noma_urllc.cli import main
from noma_urllc.harness import (CSV_HEADER, ExperimentConfig, MetricsRecord,
                                final_window_error, measure_clustering_time,
                                run_experiment, run_replica, sweep_noise,
                                sweep_packet_size, sweep_symbol_rate, write_csv)

FAST = dict(agent="sarsa-lambda", episodes=4, trials=50, seeds=(1, 2),
            measure_time=False, final_window=2)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_defaults_match_reference_settings():
    cfg = ExperimentConfig()
    assert cfg.episodes == 500
    assert cfg.trials == 500
    assert cfg.total_bss == 1
    assert cfg.n_subchannels == 5
    assert cfg.memory_capacity == 500
    assert cfg.batch_size == 500
    assert cfg.hidden_layers == 2
    assert cfg.hidden_units == 500
    assert cfg.n_users == 5
    assert cfg.bandwidth_hz == 1e6
    assert cfg.pathloss_exponent == 4.0
    assert cfg.sigma2_dbm_hz == -174.0
    assert cfg.gamma == 0.6
    assert cfg.alpha == 0.75
    assert cfg.epsilon == 0.01
    cfg.validate()


def test_config_rejects_unknown_and_invalid():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"episodez": 5})
    with pytest.raises(ConfigError):
        ExperimentConfig(agent="dqn").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(episodes=0).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=()).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(traffic="nope").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(total_bss=2).validate()


def test_traffic_overrides():
    cfg = ExperimentConfig(traffic="bursty-20-100")
    t = cfg.resolve_traffic()
    assert t.mode == "bursty" and t.d_range == (20, 100)
    cfg = ExperimentConfig(traffic="static-50", d_fixed=64)
    assert cfg.resolve_traffic().d_fixed == 64
    cfg = ExperimentConfig(traffic="custom", traffic_mode="bursty", d_lo=5, d_hi=9)
    assert cfg.resolve_traffic().d_range == (5, 9)


def test_config_validation_runs_before_work():
    cfg = ExperimentConfig(**{**FAST, "n_users": 1})
    with pytest.raises(ConfigError):
        run_experiment(cfg)


# ---------------------------------------------------------------------------
# records and csv
# ---------------------------------------------------------------------------

def test_single_episode_single_trial_yields_one_row_per_replica():
    cfg = ExperimentConfig(agent="sarsa", episodes=1, trials=1, seeds=(3, 4),
                           measure_time=False, final_window=1)
    records = run_experiment(cfg)
    assert len(records) == 2
    assert {r.seed for r in records} == {3, 4}
    assert all(r.episode == 0 for r in records)


def test_csv_schema_and_rows(tmp_path):
    cfg = ExperimentConfig(**FAST)
    records = run_experiment(cfg, out_csv=tmp_path / "m.csv")
    text = (tmp_path / "m.csv").read_text().splitlines()
    assert text[0] == CSV_HEADER
    assert text[0] == ("episode,seed,agent,scheme,traffic,n_users,M,D_lo,D_hi,"
                       "sigma2_dbm,mean_error,mean_reward,dnn_loss,cluster_time_s")
    assert len(text) == 1 + len(records)
    first = text[1].split(",")
    assert first[0] == "0" and first[1] == "1"
    assert first[2] == "sarsa-lambda" and first[3] == "noma"
    assert first[4] == "static-50" and first[5] == "5" and first[6] == "100"
    assert first[7] == "50" and first[8] == "50"
    # tabular agents emit an empty dnn_loss field
    assert first[12] == ""
    assert first[13] == "0.0"


def test_rerun_is_byte_identical(tmp_path):
    cfg = ExperimentConfig(**FAST)
    run_experiment(cfg, out_csv=tmp_path / "a.csv")
    run_experiment(cfg, out_csv=tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_seed_isolation():
    cfg_single = ExperimentConfig(**{**FAST, "seeds": (2,)})
    cfg_both = ExperimentConfig(**FAST)
    solo = run_experiment(cfg_single)
    both = [r for r in run_experiment(cfg_both) if r.seed == 2]
    assert [r.csv_row() for r in solo] == [r.csv_row() for r in both]


def test_deep_agent_records_loss():
    cfg = ExperimentConfig(agent="deep-sarsa-lambda", episodes=2, trials=64,
                           seeds=(1,), measure_time=False, final_window=1,
                           hidden_units=16, memory_capacity=32, batch_size=32,
                           dnn_update_period=8, target_sync_period=16)
    records = run_experiment(cfg)
    assert any(not np.isnan(r.dnn_loss) for r in records)


def test_final_window_and_time_helpers():
    rows = [MetricsRecord(episode=i, seed=1, agent="q", scheme="noma",
                          traffic="static-50", n_users=5, blocklength=100,
                          d_lo=50, d_hi=50, sigma2_dbm=-174.0,
                          mean_error=float(i), mean_reward=0.0,
                          dnn_loss=float("nan"), cluster_time_s=0.5)
            for i in range(10)]
    assert final_window_error(rows, 3) == pytest.approx((7 + 8 + 9) / 3)
    assert measure_clustering_time(rows) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        final_window_error([], 3)


def test_measure_time_populates_cluster_time():
    cfg = ExperimentConfig(agent="sarsa", episodes=2, trials=50, seeds=(1,),
                           measure_time=True, final_window=1)
    records = run_experiment(cfg)
    assert all(r.cluster_time_s > 0.0 for r in records)
    assert all(np.isfinite(r.cluster_time_s) for r in records)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def test_sweep_symbol_rate_outputs(tmp_path):
    cfg = ExperimentConfig(**FAST)
    summary = sweep_symbol_rate(cfg, [100, 120], out_dir=tmp_path)
    assert len(summary["points"]) == 4     # 2 blocklengths x {noma, oma}
    assert {p["scheme"] for p in summary["points"]} == {"noma", "oma"}
    assert (tmp_path / "sweep_symbol_rate.csv").exists()
    data = json.loads((tmp_path / "sweep_symbol_rate.json").read_text())
    assert data["sweep"] == "symbol_rate"
    assert data["state_encoding"] == "counts-v1"
    for p in data["points"]:
        assert set(p["per_seed_final_error"]) == {"1", "2"}


def test_sweep_packet_size_outputs(tmp_path):
    cfg = ExperimentConfig(**FAST)
    summary = sweep_packet_size(cfg, [(20, 30), (20, 100)], out_dir=tmp_path,
                                schemes=("noma",))
    assert len(summary["points"]) == 2
    assert summary["points"][0]["D_lo"] == 20
    assert (tmp_path / "sweep_packet_size.json").exists()


def test_sweep_noise_outputs(tmp_path):
    cfg = ExperimentConfig(**FAST)
    summary = sweep_noise(cfg, [-174.0, -164.0], out_dir=tmp_path)
    assert [p["sigma2_dbm"] for p in summary["points"]] == [-174.0, -164.0]
    assert (tmp_path / "sweep_noise.csv").exists()


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _write_cfg(tmp_path, **extra):
    data = {"agent": "sarsa", "episodes": 2, "trials": 40, "seeds": [1],
            "measure_time": False, "final_window": 1, **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


def test_cli_run(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert rc == 0
    lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3


def test_cli_run_flag_overrides(tmp_path):
    cfg = _write_cfg(tmp_path)
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o2"),
               "--agent", "q", "--scheme", "oma", "--seed", "9",
               "--traffic", "bursty"])
    assert rc == 0
    row = (tmp_path / "o2" / "metrics.csv").read_text().splitlines()[1].split(",")
    assert row[1] == "9" and row[2] == "q" and row[3] == "oma"
    assert row[4] == "bursty-20-100"


def test_cli_sweep(tmp_path):
    cfg = _write_cfg(tmp_path)
    rc = main(["sweep", "--config", str(cfg), "--kind", "noise",
               "--values", "-174", "-164", "--out", str(tmp_path / "sw")])
    assert rc == 0
    assert (tmp_path / "sw" / "sweep_noise.json").exists()


def test_cli_bad_config_returns_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"agent": "nope"}))
    rc = main(["run", "--config", str(bad), "--out", str(tmp_path)])
    assert rc == 2


def test_cli_bench(tmp_path):
    cfg = _write_cfg(tmp_path, episodes=1, trials=20)
    rc = main(["bench", "--config", str(cfg), "--out", str(tmp_path / "b")])
    assert rc == 0
    lines = (tmp_path / "b" / "bench.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 4  # (n_users 5,7) x (static, bursty) x 1 episode


def test_write_csv_creates_directories(tmp_path):
    write_csv([], tmp_path / "deep" / "dir" / "x.csv")
    assert (tmp_path / "deep" / "dir" / "x.csv").read_text().startswith("episode,")
