"""Command line entry point: ``nomafran {forecast,cache-sim,mec-sim,plot} ...``"""

import argparse
import dataclasses
import os
import sys

from .config import EXPERIMENTS, ExperimentConfig, load_config
from .errors import ConfigParseError, ConfigurationError
from .harness import read_csv, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nomafran", description="NOMA fog-RAN simulation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--workers", type=int, help="parallel worker processes")
    p = sub.add_parser("plot", help="render PNG figures from a results directory")
    p.add_argument("results", help="directory written by cache-sim or forecast")
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {"experiment": args.command}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.out:
        changes["output_dir"] = args.out
    if args.workers is not None:
        changes["workers"] = args.workers
    return dataclasses.replace(cfg, **changes).validate()


def plot_results(results_dir) -> list:
    """Static figures from harness CSVs; needs matplotlib."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    cache_csv = os.path.join(results_dir, "cache_results.csv")
    if os.path.exists(cache_csv):
        rows = read_csv(cache_csv)
        fig, ax = plt.subplots()
        for scheme in dict.fromkeys(r["scheme"] for r in rows):
            sel = [r for r in rows if r["scheme"] == scheme]
            powers = sorted({float(r["transmit_power_dbm"]) for r in sel})
            means = [sum(float(r["mean_mos"]) for r in sel if float(r["transmit_power_dbm"]) == p)
                     / sum(1 for r in sel if float(r["transmit_power_dbm"]) == p) for p in powers]
            ax.plot(powers, means, marker="o", label=scheme)
        ax.set_xlabel("transmit power (dBm)")
        ax.set_ylabel("mean MOS")
        ax.legend()
        path = os.path.join(results_dir, "cache_mos_vs_power.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    hist_dir = os.path.join(results_dir, "history")
    forecast = sorted(f for f in os.listdir(hist_dir) if f.startswith("forecast_")) if os.path.isdir(hist_dir) else []
    if forecast:
        fig, ax = plt.subplots()
        for name in forecast:
            with open(os.path.join(hist_dir, name)) as fh:
                vals = [float(line.split(",")[1]) for line in fh.readlines()[1:]]
            ax.semilogy(vals, label=name[len("forecast_"):-4])
        ax.set_xlabel("epoch")
        ax.set_ylabel("train MSE")
        ax.legend(fontsize="small")
        path = os.path.join(results_dir, "forecast_training.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        for path in plot_results(args.results):
            print(path)
        return 0
    try:
        cfg = config_from_args(args)
    except (ConfigParseError, ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
