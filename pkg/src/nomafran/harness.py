"""Experiment orchestration: seeds, runs, CSV and JSON emission."""

import csv
import json
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats

from .agents import train_agent
from .caching import CachingEnv, baseline_noncooperative, baseline_random, evaluate_policy_mos
from .config import ExperimentConfig
from .mec import run_mec_experiment
from .neural import TrainConfig, build_forecaster, train_to_goal
from .popularity import random_walk_series, window_dataset, zipf_distribution
from .scenario import generate_scenario

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15
FAILED_MARKER = "FAILED"
SCHEMA_VERSION = 1

FORECAST_COLUMNS = ["cell", "seed", "hidden", "final_train_mse", "test_mse", "epochs_used", "goal_reached"]
CACHE_COLUMNS = ["scheme", "transmit_power_dbm", "mean_mos", "std_mos", "hit_ratio", "seed"]
MEC_COLUMNS = ["policy", "mean_latency_s", "mean_energy_j", "violation_rate", "seed"]


def splitmix64(x: int) -> int:
    z = (x + GOLDEN64) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, replica_index: int) -> int:
    """64-bit seed for replica ``replica_index`` of ``base_seed``.

    ``splitmix64(base ^ splitmix64(index))``: both steps are bijections on
    64-bit words, so distinct indices always give distinct seeds.
    """
    return splitmix64((base_seed & MASK64) ^ splitmix64(replica_index & MASK64))


# -- single runs ------------------------------------------------------------------

def forecast_run(cfg: ExperimentConfig, cell: str, seed: int):
    fc = cfg.forecast
    # both cells of a seed see the same series and split
    series = random_walk_series(fc.length, 1, fc.step_bound, seed=derive_seed(seed, 1))
    data = window_dataset(series, fc.window, shuffle_seed=derive_seed(seed, 2), train_fraction=fc.train_fraction)
    model = build_forecaster(cell, window=fc.window, hidden=fc.hidden, seed=derive_seed(seed, 3))
    report = train_to_goal(model, data, TrainConfig(goal_mse=fc.goal_mse, max_epochs=fc.max_epochs,
                                                    learning_rate=fc.learning_rate, optimizer=fc.optimizer,
                                                    stop_at_goal=fc.early_stop))
    row = {"cell": cell, "seed": seed, "hidden": fc.hidden, "final_train_mse": report.final_train_mse,
           "test_mse": report.test_mse, "epochs_used": report.epochs_used, "goal_reached": report.goal_reached}
    return row, report.loss_history


def cache_popularity(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    """Per-episode popularity: a slow bounded random walk starting from a Zipf profile."""
    n = cfg.scenario.n_contents
    start = zipf_distribution(n, cfg.caching.zipf_exponent)
    return random_walk_series(cfg.rl.episodes + 1, n, cfg.caching.popularity_step, start / start.max(),
                              seed=derive_seed(seed, 1)).values


def cache_run(cfg: ExperimentConfig, seed: int, power_dbm: float):
    """All configured schemes for one (seed, power) point; returns (rows, histories)."""
    ca, rl = cfg.caching, cfg.rl
    scenario = generate_scenario(cfg.scenario, derive_seed(seed, 0))
    popularity = cache_popularity(cfg, seed)
    final = popularity[-1]
    eval_seed = derive_seed(seed, 4)
    rows, histories = [], {}
    for scheme in ca.schemes:
        env = CachingEnv(scenario, popularity, ca.env_config(rl.steps_per_episode, power_dbm),
                         seed=derive_seed(seed, 2))
        if scheme == "noncoop":
            policy = baseline_noncooperative(scenario, final)
        elif scheme == "random":
            policy = baseline_random(scenario, derive_seed(seed, 5))
        else:
            policy = train_agent(env, scheme, rl.episodes, rl.steps_per_episode, seed=derive_seed(seed, 3),
                                 alpha=rl.alpha, gamma=rl.gamma, la_rate=rl.la_rate,
                                 eps_start=rl.eps_start, eps_end=rl.eps_end)
            histories[scheme] = policy.history
        est = evaluate_policy_mos(policy, env, final, power_dbm, ca.eval_batches, seed=eval_seed)
        rows.append({"scheme": scheme, "transmit_power_dbm": power_dbm, "mean_mos": est.mean,
                     "std_mos": est.std, "hit_ratio": est.hit_ratio, "seed": seed,
                     "diversity": est.placement.diversity()})
    return rows, histories


def mec_run(cfg: ExperimentConfig, seed: int):
    scenario = generate_scenario(cfg.scenario, derive_seed(seed, 0))
    rl = cfg.rl
    summaries = run_mec_experiment(scenario, "q_learning", rl.episodes, seed=seed, config=cfg.mec.env_config(),
                                   steps_per_episode=rl.steps_per_episode, eval_steps=cfg.mec.eval_steps,
                                   alpha=rl.alpha, gamma=rl.gamma,
                                   seeds=(derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3)))
    return [{"policy": s.policy, "mean_latency_s": s.mean_latency, "mean_energy_j": s.mean_energy,
             "violation_rate": s.violation_rate, "seed": seed, "mean_cost": s.mean_cost} for s in summaries]


def _call(job):
    fn, args = job
    return fn(*args)


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


# -- output -------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, name, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {name} v{SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path):
    """Rows of a harness CSV as dicts of strings (schema comment skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _write_history(path, values, column):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch" if column == "train_mse" else "episode", column])
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])


def paired_gap(a, b):
    """Mean and 95% t-interval of the paired differences ``a - b``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    mean = float(d.mean())
    if len(d) < 2:
        return {"mean": mean, "ci95": [mean, mean]}
    half = float(stats.t.ppf(0.975, len(d) - 1) * d.std(ddof=1) / np.sqrt(len(d)))
    return {"mean": mean, "ci95": [mean - half, mean + half]}


def summarize_cache(rows, schemes, sweep):
    table = {(r["scheme"], r["transmit_power_dbm"], r["seed"]): r["mean_mos"] for r in rows}
    seeds = sorted({r["seed"] for r in rows})
    out = {"schemes": {}, "gaps_percent": {}, "paired_mos_gap": {}}
    for s in schemes:
        vals = [table[(s, p, k)] for p in sweep for k in seeds]
        per_power = [float(np.mean([table[(s, p, k)] for k in seeds])) for p in sweep]
        div = [r["diversity"] for r in rows if r["scheme"] == s]
        out["schemes"][s] = {"mean_mos": float(np.mean(vals)), "std_mos": float(np.std(vals)),
                             "mean_mos_per_power": per_power, "mean_diversity": float(np.mean(div))}
    for a in schemes:
        for b in schemes:
            if a == b:
                continue
            pa, pb = out["schemes"][a]["mean_mos_per_power"], out["schemes"][b]["mean_mos_per_power"]
            out["gaps_percent"][f"{a}_vs_{b}"] = float(np.mean([100.0 * (x - y) / y for x, y in zip(pa, pb)]))
            out["paired_mos_gap"][f"{a}_vs_{b}"] = paired_gap(
                [table[(a, p, k)] for p in sweep for k in seeds], [table[(b, p, k)] for p in sweep for k in seeds])
    return out


def summarize_groups(rows, key, fields):
    out = {}
    for name in dict.fromkeys(r[key] for r in rows):
        sel = [r for r in rows if r[key] == name]
        out[name] = {}
        for f in fields:
            vals = [float(r[f]) for r in sel]
            out[name][f] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)),
                            "median": float(np.median(vals)), "per_seed": vals}
    return out


# -- driver ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir=None, log=print) -> int:
    """Run every (seed, sweep point) of ``cfg``; returns a process exit status."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, FAILED_MARKER)
    if os.path.exists(marker):
        os.remove(marker)
    started = time.time()
    try:
        summary = _RUNNERS[cfg.experiment](cfg, out_dir, log)
    except Exception as exc:
        with open(marker, "w") as fh:
            fh.write(traceback.format_exc())
        print(f"error: {cfg.experiment} failed: {exc}", file=sys.stderr)
        return 1
    summary.update({"experiment": cfg.experiment, "seeds": list(cfg.seeds), "started_at": started,
                    "elapsed_s": time.time() - started})
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return 0


def _run_forecast(cfg, out_dir, log):
    jobs = [(forecast_run, (cfg, cell, seed)) for cell in cfg.forecast.cells for seed in cfg.seeds]
    results = _map(jobs, cfg.workers)
    rows = [r for r, _ in results]
    hist_dir = os.path.join(out_dir, "history")
    os.makedirs(hist_dir, exist_ok=True)
    for row, hist in results:
        _write_history(os.path.join(hist_dir, f"forecast_{row['cell']}_seed{row['seed']}.csv"), hist, "train_mse")
    write_csv(os.path.join(out_dir, "forecast_runs.csv"), "forecast_runs", FORECAST_COLUMNS, rows)
    groups = summarize_groups(rows, "cell", ["final_train_mse", "test_mse", "epochs_used"])
    for cell, g in groups.items():
        reached = sum(r["goal_reached"] for r in rows if r["cell"] == cell)
        g["goal_mse"] = cfg.forecast.goal_mse
        g["goal_reached_runs"] = reached
        log(f"{cell}: median test mse {g['test_mse']['median']:.6g}, "
            f"goal {cfg.forecast.goal_mse:g} reached on {reached}/{len(cfg.seeds)} seeds")
    return {"cells": groups}


def _run_cache(cfg, out_dir, log):
    sweep = list(cfg.caching.sweep_dbm)
    jobs = [(cache_run, (cfg, seed, p)) for seed in cfg.seeds for p in sweep]
    results = _map(jobs, cfg.workers)
    hist_dir = os.path.join(out_dir, "history")
    os.makedirs(hist_dir, exist_ok=True)
    rows = []
    for (_, (_, seed, p)), (run_rows, hists) in zip(jobs, results):
        rows.extend(run_rows)
        for scheme, h in hists.items():
            _write_history(os.path.join(hist_dir, f"cache_{scheme}_p{p:g}_seed{seed}.csv"), h, "sum_reward")
    order = {s: i for i, s in enumerate(cfg.caching.schemes)}
    rows.sort(key=lambda r: (order[r["scheme"]], sweep.index(r["transmit_power_dbm"]), r["seed"]))
    write_csv(os.path.join(out_dir, "cache_results.csv"), "cache_results", CACHE_COLUMNS, rows)
    summary = summarize_cache(rows, list(cfg.caching.schemes), sweep)
    for s, v in summary["schemes"].items():
        log(f"{s}: mean MOS {v['mean_mos']:.4f} (std {v['std_mos']:.4f}) over {len(sweep)} powers x {len(cfg.seeds)} seeds")
    summary["sweep_dbm"] = sweep
    return summary


def _run_mec(cfg, out_dir, log):
    results = _map([(mec_run, (cfg, seed)) for seed in cfg.seeds], cfg.workers)
    rows = [r for run in results for r in run]
    write_csv(os.path.join(out_dir, "mec_results.csv"), "mec_results", MEC_COLUMNS, rows)
    groups = summarize_groups(rows, "policy", ["mean_latency_s", "mean_energy_j", "violation_rate", "mean_cost"])
    for p, g in groups.items():
        log(f"{p}: latency {g['mean_latency_s']['mean']:.4f} s, energy {g['mean_energy_j']['mean']:.4g} J, "
            f"violations {g['violation_rate']['mean']:.3f}")
    return {"policies": groups}


_RUNNERS = {"forecast": _run_forecast, "cache-sim": _run_cache, "mec-sim": _run_mec}
