import json
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nomafran.cli import main
from nomafran.config import ExperimentConfig, dump_config, parse_config
from nomafran.errors import ConfigParseError, ConfigurationError
from nomafran.harness import (FAILED_MARKER, derive_seed, paired_gap, read_csv, run_experiment, splitmix64,
                              summarize_cache)

SMALL = """
rl.episodes = 5
rl.steps_per_episode = 10
caching.sweep_dbm = 10, 40
caching.eval_batches = 2
mec.eval_steps = 50
forecast.max_epochs = 5
forecast.length = 40
"""


def test_parse_paper_alpha():
    assert parse_config("rl.alpha = 0.75").rl.alpha == 0.75


def test_empty_config_is_defaults():
    assert parse_config("") == ExperimentConfig()
    assert parse_config("# only a comment\n\n") == ExperimentConfig()


def test_out_of_range_names_key():
    with pytest.raises(ConfigurationError) as err:
        parse_config("rl.alpha = 1.5")
    assert err.value.field == "rl.alpha"


@pytest.mark.parametrize("text,key", [
    ("rl.bogus = 1", "rl.bogus"),
    ("nosuch = 1", "nosuch"),
    ("scenario.cache_capacity = 0", "scenario.cache_capacity"),
    ("channel.noise_power = -1", "channel.noise_power"),
    ("seeds = ", "seeds"),
    ("rl.episodes = many", "rl.episodes"),
])
def test_validation_errors_name_key(text, key):
    with pytest.raises(ConfigurationError) as err:
        parse_config(text)
    assert err.value.field == key


def test_parse_error_has_line_number():
    with pytest.raises(ConfigParseError) as err:
        parse_config("rl.alpha = 0.5\nthis line is wrong\n")
    assert err.value.line_no == 2
    with pytest.raises(ConfigParseError):
        parse_config("rl.alpha = 0.5\nrl.alpha = 0.6")


def test_lists_and_round_trip():
    cfg = parse_config("seeds = 3, 1\ncaching.schemes = laql, random\nmec.uplink_rate = 5e6\nforecast.early_stop = false")
    assert cfg.seeds == (3, 1)
    assert cfg.caching.schemes == ("laql", "random")
    assert cfg.mec.uplink_rate == 5e6 and cfg.forecast.early_stop is False
    assert parse_config(dump_config(cfg)) == cfg


def test_splitmix_reference_vector():
    # first output of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_derive_seed_golden_and_pure():
    assert derive_seed(0, 0) == 12035550249420947055
    assert derive_seed(42, 7) == derive_seed(42, 7)


def test_derive_seed_distinct_indices():
    rng = np.random.default_rng(0)
    for s in rng.integers(0, 2 ** 63, size=10000):
        assert derive_seed(int(s), 0) != derive_seed(int(s), 1)


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 20), st.integers(0, 2 ** 20))
def test_derive_seed_injective_in_index(base, i, j):
    assert (derive_seed(base, i) == derive_seed(base, j)) == (i == j)
    assert 0 <= derive_seed(base, i) < 2 ** 64


def test_paired_gap_interval():
    g = paired_gap([2.0, 3.0, 4.0], [1.0, 1.0, 1.0])
    assert g["mean"] == 2.0
    assert g["ci95"][0] < 2.0 < g["ci95"][1]


def test_summary_gap_definition():
    rows = [{"scheme": s, "transmit_power_dbm": p, "seed": 0, "mean_mos": v, "diversity": 1}
            for s, p, v in [("a", 10, 2.0), ("a", 20, 3.0), ("b", 10, 1.0), ("b", 20, 2.0)]]
    out = summarize_cache(rows, ["a", "b"], [10, 20])
    assert out["gaps_percent"]["a_vs_b"] == pytest.approx((100.0 + 50.0) / 2)


def _cfg(tmp_path, experiment, extra=""):
    cfg = parse_config(SMALL + extra)
    cfg.experiment = experiment
    cfg.seeds = (0, 1)
    cfg.output_dir = str(tmp_path)
    return cfg


def test_cache_sim_row_contract(tmp_path):
    assert run_experiment(_cfg(tmp_path, "cache-sim"), log=lambda *_: None) == 0
    rows = read_csv(tmp_path / "cache_results.csv")
    assert len(rows) == 4 * 2 * 2
    assert len({(r["scheme"], r["transmit_power_dbm"], r["seed"]) for r in rows}) == len(rows)
    assert (tmp_path / "cache_results.csv").read_text().startswith("# schema: cache_results v1\n")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "laql_vs_random" in summary["gaps_percent"]


def test_forecast_summary_meets_goal(tmp_path):
    cfg = _cfg(tmp_path, "forecast")
    cfg.forecast.max_epochs, cfg.forecast.length = 5000, 500
    assert run_experiment(cfg, log=lambda *_: None) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert all(v <= 0.01 for v in summary["cells"]["lstm"]["final_train_mse"]["per_seed"])


@pytest.mark.parametrize("experiment,name", [("cache-sim", "cache_results.csv"), ("mec-sim", "mec_results.csv"),
                                             ("forecast", "forecast_runs.csv")])
def test_reruns_are_byte_identical(tmp_path, experiment, name):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(_cfg(a, experiment), log=lambda *_: None)
    run_experiment(_cfg(b, experiment), log=lambda *_: None)
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_failure_leaves_marker(tmp_path, monkeypatch):
    import nomafran.harness as h

    def boom(*args):
        raise RuntimeError("run failed")

    monkeypatch.setitem(h._RUNNERS, "mec-sim", boom)
    assert run_experiment(_cfg(tmp_path, "mec-sim"), log=lambda *_: None) == 1
    assert "run failed" in (tmp_path / FAILED_MARKER).read_text()


def test_cli_runs_and_overrides(tmp_path, capsys):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text(SMALL + "seeds = 0, 1, 2\n")
    out = tmp_path / "out"
    assert main(["mec-sim", "--config", str(cfg_path), "--seed", "7", "--out", str(out), "--workers", "1"]) == 0
    rows = read_csv(out / "mec_results.csv")
    assert {r["seed"] for r in rows} == {"7"}
    assert len(rows) == 4
    assert "greedy-min-cost" in capsys.readouterr().out


def test_cli_errors(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["not-an-experiment"])
    assert err.value.code != 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("rl.alpha = 1.5\n")
    assert main(["cache-sim", "--config", str(bad)]) == 2


def test_parallel_workers_match_serial(tmp_path):
    serial = _cfg(tmp_path / "s", "mec-sim")
    parallel = _cfg(tmp_path / "p", "mec-sim")
    parallel.workers = 2
    run_experiment(serial, log=lambda *_: None)
    run_experiment(parallel, log=lambda *_: None)
    assert (tmp_path / "s" / "mec_results.csv").read_bytes() == (tmp_path / "p" / "mec_results.csv").read_bytes()


def test_plot_subcommand(tmp_path):
    pytest.importorskip("matplotlib")
    run_experiment(_cfg(tmp_path, "cache-sim"), log=lambda *_: None)
    assert main(["plot", str(tmp_path)]) == 0
    assert os.path.exists(tmp_path / "cache_mos_vs_power.png")
