"""
Command line harness.

    noma-urllc run   --config cfg.json --seed 3 --out results/
    noma-urllc sweep --kind symbol-rate --out results/
    noma-urllc bench --out results/

A JSON config file supplies any ExperimentConfig key; command line flags
override the file.  `run` writes one metrics CSV, `sweep` a CSV plus a
summary JSON, `bench` a clustering-time comparison across network loads
and traffic types.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .channel import ConfigError
from .harness import (AGENT_KINDS, ExperimentConfig, measure_clustering_time,
                      run_experiment, sweep_noise, sweep_packet_size,
                      sweep_symbol_rate, write_csv)

SWEEP_KINDS = ("symbol-rate", "packet-size", "noise")

DEFAULT_M_LIST = (100, 110, 120, 130)
DEFAULT_D_RANGES = ((20, 30), (20, 50), (20, 70), (20, 100))
DEFAULT_SIGMA2_LIST = (-174.0, -164.0, -154.0)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, help="single seed override")
    parser.add_argument("--out", type=Path, default=Path("results"),
                        help="output directory")
    parser.add_argument("--scheme", choices=("noma", "oma"))
    parser.add_argument("--agent", choices=AGENT_KINDS)
    parser.add_argument("--traffic", help="traffic preset name or static|bursty")
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--n-users", type=int, dest="n_users")


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    config = ExperimentConfig.from_dict(data)
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    for key in ("scheme", "agent", "episodes", "trials", "n_users"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.traffic is not None:
        # bare mode names map to the default preset of that mode
        aliases = {"static": "static-50", "bursty": "bursty-20-100"}
        overrides["traffic"] = aliases.get(args.traffic, args.traffic)
    if overrides:
        config = replace(config, **overrides)
    config.validate()
    return config


def cmd_run(args: argparse.Namespace) -> int:
    config = build_config(args)
    out_csv = args.out / "metrics.csv"
    records = run_experiment(config, out_csv=out_csv)
    final = sum(r.mean_error for r in records[-config.final_window:]) / \
        min(config.final_window, len(records))
    print(f"wrote {out_csv} ({len(records)} rows); "
          f"final-window mean error {final:.3e}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = build_config(args)
    if args.kind == "symbol-rate":
        m_list = args.values or DEFAULT_M_LIST
        summary = sweep_symbol_rate(config, [int(v) for v in m_list], out_dir=args.out)
    elif args.kind == "packet-size":
        if args.values:
            ranges = [tuple(int(x) for x in v.split(":")) for v in args.values]
        else:
            ranges = DEFAULT_D_RANGES
        summary = sweep_packet_size(config, ranges, out_dir=args.out)
    else:
        sigma_list = args.values or DEFAULT_SIGMA2_LIST
        summary = sweep_noise(config, [float(v) for v in sigma_list], out_dir=args.out)
    print(f"wrote sweep outputs under {args.out} "
          f"({len(summary['points'])} points)")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    """Clustering-time comparison across network loads and traffic types."""
    base = build_config(args)
    rows = []
    for n_users in (5, 7):
        for traffic in ("static-50", "bursty-20-100"):
            cfg = replace(base, n_users=n_users, traffic=traffic,
                          traffic_mode=None, d_fixed=None, d_lo=None, d_hi=None,
                          measure_time=True)
            records = run_experiment(cfg)
            rows.extend(records)
            mean_t = measure_clustering_time(records)
            print(f"n_users={n_users} traffic={traffic}: "
                  f"{mean_t:.4f} s/episode")
    write_csv(rows, args.out / "bench.csv")
    print(f"wrote {args.out / 'bench.csv'}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="noma-urllc",
                                     description="NOMA-URLLC learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment, write metrics CSV")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep a network parameter")
    _add_common(p_sweep)
    p_sweep.add_argument("--kind", choices=SWEEP_KINDS, default="symbol-rate")
    p_sweep.add_argument("--values", nargs="*",
                         help="sweep points (packet-size uses lo:hi)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_bench = sub.add_parser("bench", help="clustering-time benchmark")
    _add_common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
