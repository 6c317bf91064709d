from __future__ import annotations

import csv
import json
import logging
import math

import numpy as np
import pytest
import yaml

from corrbandit import app
from corrbandit.core.environment.gaps import true_mse
from corrbandit.core.environment.sampler import Environment
from corrbandit.core.export.exporters import OutputStage, write_csv, write_json
from corrbandit.core.estimation.pair_stats import PairStatistics
from corrbandit.core.study.concentration import run_concentration_study, sample_deviations
from corrbandit.core.study.config import StudyConfig
from corrbandit.core.study.experiment import auto_budget_grid, run_experiment
from corrbandit.core.study.runner import make_tasks, run_replications
from corrbandit.core.study.seeding import replication_seed, stream_seed
from corrbandit.errors import ConfigError
from corrbandit.infra.config.config_manager import (
    ConfigManager,
    ConfigPaths,
    get_default_config_path,
    load_yaml,
)
from corrbandit.infra.logging.setup import setup_logging


def _read_csv(path):
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def _error_json(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


# -------------------------
# config
# -------------------------
class TestStudyConfig:
    def test_defaults_are_valid(self, make_config):
        cfg = make_config()
        assert cfg.study == "experiment"
        assert cfg.budget is None
        assert cfg.algorithms == ("uniform", "sr")
        assert cfg.log_level == "INFO"

    def test_missing_key(self):
        raw = load_yaml(get_default_config_path())
        del raw["model"]
        with pytest.raises(ConfigError, match="model"):
            StudyConfig.from_mapping(raw)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"study": "bogus"},
            {"replications": 0},
            {"workers": 0},
            {"algorithms": ["ucb"]},
            {"budget": "lots"},
            {"study": "concentration", "arm": 2, "partner": 2},
            {"study": "concentration", "eps_grid": []},
            {"study": "theory", "n_grid": []},
        ],
    )
    def test_invalid(self, make_config, overrides):
        with pytest.raises(ConfigError):
            make_config(**overrides)

    def test_budget_checks(self, make_config):
        cfg = make_config(budget=9)
        with pytest.raises(ConfigError):
            cfg.check_budget(5)
        make_config(budget=10).check_budget(5)

    def test_arm_checks(self, make_config):
        with pytest.raises(ConfigError):
            make_config(study="concentration", arm=6).check_arms(5)

    def test_default_model_per_study(self, make_config):
        assert make_config().model == "sigma1"
        assert make_config(study="concentration").model == "sigma1"
        assert make_config(study="theory").model == "lb:10:0.804"
        assert make_config(study="theory", model="lb:5:0.5").model == "lb:5:0.5"
        assert make_config().xi_trials >= 10_000

    def test_echo(self, make_config):
        echo = make_config(workers=3).echo()
        assert echo["budget"] == "auto"
        assert isinstance(echo["n_grid"], list)
        assert not {"workers", "out_dir", "log_level"} & set(echo)


class TestConfigManager:
    def test_layers(self, tmp_path):
        user = tmp_path / "study.yaml"
        user.write_text("replications: 5\napp:\n  log_level: DEBUG\n", encoding="utf-8")
        mgr = ConfigManager(ConfigPaths(default_config_path=get_default_config_path(), user_config_path=user))
        cfg = mgr.load()
        assert cfg["replications"] == 5
        assert cfg["app"]["name"] == "CorrBandit"
        assert cfg["app"]["log_level"] == "DEBUG"
        cfg = mgr.apply_overrides({"replications": 7, "model": None})
        assert cfg["replications"] == 7
        assert cfg["model"] == ""

    def test_unknown_key(self, tmp_path):
        user = tmp_path / "study.yaml"
        user.write_text("replicatoins: 5\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="replicatoins"):
            ConfigManager(ConfigPaths(get_default_config_path(), user)).load()

    def test_missing_user_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ConfigManager(ConfigPaths(get_default_config_path(), tmp_path / "nope.yaml")).load()

    def test_bad_yaml(self, tmp_path):
        user = tmp_path / "bad.yaml"
        user.write_text("a: [1, 2\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_yaml(user)

    def test_template_not_overwritten(self, tmp_path):
        mgr = ConfigManager(ConfigPaths(get_default_config_path()))
        path = mgr.write_template(tmp_path / "t.yaml")
        assert load_yaml(path) == load_yaml(get_default_config_path())
        path.write_text("replications: 1\n", encoding="utf-8")
        mgr.write_template(path)
        assert load_yaml(path) == {"replications": 1}


# -------------------------
# exporters / logging
# -------------------------
class TestExporters:
    def test_csv_header_and_nan(self, tmp_path):
        path = write_csv(tmp_path / "x.csv", ["a", "b"], [{"a": 1, "b": math.nan}, {"a": 2, "b": 0.5}])
        assert path.read_text(encoding="utf-8") == "a,b\n1,\n2,0.5\n"

    def test_json_non_finite(self, tmp_path):
        path = write_json(tmp_path / "x.json", {"v": [math.inf, 1.0], "k": {1: math.nan}})
        assert json.loads(path.read_text(encoding="utf-8")) == {"v": [None, 1.0], "k": {"1": None}}

    def test_stage_commits(self, tmp_path):
        out = tmp_path / "out"
        with OutputStage(out) as stage:
            write_json(stage.path("a.json"), {"x": 1})
            write_json(stage.path("sub/b.json"), {"y": 2})
            assert not out.exists()
        assert (out / "a.json").exists() and (out / "sub" / "b.json").exists()
        assert [p.name for p in tmp_path.iterdir()] == ["out"]

    def test_stage_discards_on_failure(self, tmp_path):
        out = tmp_path / "out"
        with pytest.raises(RuntimeError):
            with OutputStage(out) as stage:
                write_json(stage.path("a.json"), {"x": 1})
                raise RuntimeError("boom")
        assert not out.exists()
        assert list(tmp_path.iterdir()) == []


class TestLogging:
    def test_file_handler(self, tmp_path):
        setup_logging(tmp_path / "logs", level="DEBUG")
        logging.getLogger("corrbandit.test").debug("hello %d", 1)
        for h in logging.getLogger().handlers:
            h.flush()
        assert "hello 1" in (tmp_path / "logs" / "corrbandit.log").read_text(encoding="utf-8")

    def test_console_only(self):
        setup_logging(None, level="WARNING")
        root = logging.getLogger()
        assert len(root.handlers) == 1
        assert root.level == logging.WARNING


# -------------------------
# seeding / runner
# -------------------------
class TestSeeding:
    def test_stable_and_64_bit(self):
        a = stream_seed(42, "concentration", 250)
        assert a == stream_seed(42, "concentration", 250)
        assert 0 <= a < 2 ** 64
        assert a != stream_seed(43, "concentration", 250)

    def test_replication_seed(self):
        assert replication_seed(1, 0, "uniform") != replication_seed(1, 0, "sr")
        assert replication_seed(1, 0, "sr") != replication_seed(1, 1, "sr")

    def test_seed_independent_of_budget(self, lb5):
        tasks = make_tasks(lb5, ["uniform", "sr"], [100, 400], 3, base_seed=9)
        by_key = {}
        for t in tasks:
            by_key.setdefault((t.algorithm, t.replication), set()).add(t.seed)
        assert all(len(s) == 1 for s in by_key.values())


class TestRunner:
    def test_parallel_matches_serial(self, lb5):
        tasks = make_tasks(lb5, ["uniform", "sr"], [60, 200], 4, base_seed=3)
        serial = run_replications(tasks, workers=1)
        parallel = run_replications(list(reversed(tasks)), workers=2)
        assert [t.order_key for t, _ in serial] == [t.order_key for t, _ in parallel]
        for (_, a), (_, b) in zip(serial, parallel):
            assert a.recommended == b.recommended
            assert a.pulls == b.pulls
            np.testing.assert_array_equal(a.mse_hat, b.mse_hat)

    def test_order(self, lb5):
        done = run_replications(make_tasks(lb5, ["sr", "uniform"], [200, 60], 2, base_seed=3))
        assert [(t.budget, t.algorithm, t.replication) for t, _ in done] == [
            (60, "uniform", 0), (60, "uniform", 1), (60, "sr", 0), (60, "sr", 1),
            (200, "uniform", 0), (200, "uniform", 1), (200, "sr", 0), (200, "sr", 1),
        ]


# -------------------------
# studies
# -------------------------
class TestExperiment:
    def test_auto_budget_grid(self):
        grid = auto_budget_grid(5, 2.0, 256.0, 8)
        assert grid[0] == 20 and grid[-1] == 2560
        assert grid == sorted(set(grid))
        assert auto_budget_grid(5, 0.1, 0.1, 1) == [11]

    def test_fixed_budget(self, make_config, tmp_path):
        cfg = make_config(model="lb:5:0.5", budget=200, replications=4, write_traces=True)
        out = tmp_path / "exp"
        report = run_experiment(cfg, out)
        sr = report.summary("sr", 200)
        assert sr.replications == 4
        assert sum(sr.histogram) == 4
        assert 0.0 <= sr.error_frequency <= 1.0
        assert report.summary("uniform").mean_pulls == 200
        assert report.calibration is None

        rows = _read_csv(out / "results.csv")
        assert len(rows) == 8
        assert list(rows[0]) == ["model", "algorithm", "replication", "seed", "K", "n",
                                 "recommended", "correct", "total_pulls"]
        assert [r["algorithm"] for r in rows] == ["uniform"] * 4 + ["sr"] * 4
        assert all(r["model"] == "lb:5:0.5" for r in rows)
        assert len(list((out / "traces").glob("*.json"))) == 8

        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["best_arm"] == 1
        assert summary["complexity"]["ordering_holds"] is True
        assert len(summary["results"]) == 2

    def test_auto_budget_without_reference(self, make_config):
        cfg = make_config(model="lb:4:0.5", auto_budget_points=3, replications=2)
        report = run_experiment(cfg)
        assert sorted({s.budget for s in report.summaries}) == auto_budget_grid(4, 2.0, 256.0, 3)
        assert set(report.calibration) == {"hbar_over_32sq"}

    def test_pooled_variance(self, make_config):
        report = run_experiment(make_config(model="lb:5:0.5", budget=300, replications=2, pooled_variance=True))
        assert report.summary("uniform", 300).replications == 2


class TestConcentration:
    def test_small_study(self, make_config, tmp_path):
        cfg = make_config(study="concentration", model="lb:4:0.5", n_grid=[50, 200], eps_grid=[0.5, 1.0], trials=300)
        out = tmp_path / "conc"
        report = run_concentration_study(cfg, out)
        assert len(report.rows) == 2 * 2 * 4
        assert report.below_bound()
        assert set(report.mse_abs_error) == {50, 200}
        rows = _read_csv(out / "tails.csv")
        assert len(rows) == 16
        assert {r["quantity"] for r in rows} == {"sigma2_hat", "sigma_hat", "rho_hat", "mse_hat"}
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["arm"] == 1 and summary["partner"] == 2

    def test_huge_eps_never_exceeded(self, make_config):
        cfg = make_config(study="concentration", model="lb:4:0.5", n_grid=[20], eps_grid=[100.0], trials=50)
        report = run_concentration_study(cfg)
        assert all(r.exceed == 0 for r in report.rows)

    def test_arm_out_of_range(self, make_config):
        cfg = make_config(study="concentration", model="lb:4:0.5", arm=5)
        with pytest.raises(ConfigError):
            run_concentration_study(cfg)

    def test_deviations_use_pair_estimator(self, lb5):
        dev = sample_deviations(lb5, 0, 1, 30, 5, seed=17)
        env = Environment(lb5, 17)
        per_trial = [PairStatistics(5) for _ in range(5)]
        for p in range(1, 5):
            x = env.pull_trials((0, p), 5, 30)
            for t in range(5):
                per_trial[t].record_batch((0, p), x[t])
        for t, stats in enumerate(per_trial):
            assert dev["mse_hat"][t] + true_mse(lb5, 0) == pytest.approx(stats.mse_hat(0), rel=1e-10)
            assert dev["rho_hat"][t] + lb5.rho(0, 1) == pytest.approx(stats.rho_hat((0, 1)), abs=1e-12)

    def test_indefinite_model_is_flagged(self, make_config, tmp_path):
        cfg = make_config(study="concentration", model="lb:10:0.804", n_grid=[20], eps_grid=[0.5], trials=20)
        out = tmp_path / "conc"
        report = run_concentration_study(cfg, out)
        assert any("not PSD" in w for w in report.warnings)
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["warnings"] == list(report.warnings)


# -------------------------
# CLI
# -------------------------
class TestCli:
    def _experiment(self, out, *extra):
        return app.main(["experiment", "--model", "lb:5:0.5", "--budget", "200", "--reps", "3",
                         "--seed", "7", "--out", str(out), *extra])

    def test_experiment_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert self._experiment(out) == 0
        assert capsys.readouterr().out.strip() == str(out.resolve())
        assert len(_read_csv(out / "results.csv")) == 6
        assert (out / "summary.json").exists()

    def test_reruns_and_workers_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert self._experiment(a) == 0
        assert self._experiment(b, "--workers", "2") == 0
        for name in ("results.csv", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_changes_results(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert self._experiment(a) == 0
        assert app.main(["experiment", "--model", "lb:5:0.5", "--budget", "200", "--reps", "3",
                         "--seed", "8", "--out", str(b)]) == 0
        seeds_a = [r["seed"] for r in _read_csv(a / "results.csv")]
        seeds_b = [r["seed"] for r in _read_csv(b / "results.csv")]
        assert seeds_a != seeds_b

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "conc.yaml"
        cfg.write_text(yaml.safe_dump({"model": "lb:4:0.5", "n_grid": [50, 100], "trials": 100}), encoding="utf-8")
        out = tmp_path / "conc"
        assert app.main(["concentration", "--config", str(cfg), "--out", str(out)]) == 0
        assert len(_read_csv(out / "tails.csv")) == 8

    def test_theory(self, tmp_path):
        cfg = tmp_path / "theory.yaml"
        cfg.write_text(yaml.safe_dump({"n_grid": [20], "xi_t_grid": [], "replications": 2}), encoding="utf-8")
        out = tmp_path / "theory"
        assert app.main(["theory", "--config", str(cfg), "--model", "lb:5:0.5", "--out", str(out)]) == 0
        data = json.loads((out / "theory.json").read_text(encoding="utf-8"))
        assert data["xi_check"] is None
        assert data["all_bounds_hold"] is True

    def test_error_json(self, tmp_path, capsys):
        out = tmp_path / "bad"
        assert app.main(["experiment", "--model", "lb:2:0.5", "--out", str(out)]) == 2
        err = _error_json(capsys)
        assert err["error"] == "TooFewArms"
        assert not out.exists()

    def test_budget_too_small_for_sr(self, tmp_path, capsys):
        out = tmp_path / "bad"
        assert app.main(["experiment", "--model", "lb:5:0.5", "--budget", "10", "--reps", "1",
                         "--out", str(out)]) == 2
        assert _error_json(capsys)["error"] == "BudgetTooSmall"
        assert not out.exists()

    def test_theory_runs_without_model(self, tmp_path):
        user = tmp_path / "theory.yaml"
        user.write_text("n_grid: [100]\ntheory_empirical: false\nxi_t_grid: [20]\nxi_trials: 50\n", encoding="utf-8")
        out = tmp_path / "t"
        assert app.main(["theory", "--config", str(user), "--out", str(out)]) == 0
        data = json.loads((out / "theory.json").read_text(encoding="utf-8"))
        assert data["K"] == 10
        assert any("not PSD" in w for w in data["warnings"])

    def test_theory_needs_lb_model(self, tmp_path, capsys):
        assert app.main(["theory", "--model", "sigma1", "--out", str(tmp_path / "t")]) == 2
        assert _error_json(capsys)["error"] == "ConfigError"

    def test_unexpected_error(self, tmp_path, capsys, monkeypatch):
        def boom(cfg, out_dir):
            raise RuntimeError("kaboom")

        monkeypatch.setitem(app.RUNNERS, "experiment", boom)
        assert app.main(["experiment", "--model", "lb:5:0.5", "--out", str(tmp_path / "x")]) == 1
        err = _error_json(capsys)
        assert err["error"] == "Internal"
        assert "kaboom" in err["message"]

    def test_init_config(self, tmp_path, capsys):
        path = tmp_path / "study.yaml"
        assert app.main(["init-config", str(path)]) == 0
        assert load_yaml(path)["model"] == ""

    def test_log_file_under_app_home(self, tmp_path, app_home):
        assert self._experiment(tmp_path / "run") == 0
        for h in logging.getLogger().handlers:
            h.flush()
        assert (app_home / "logs" / "corrbandit.log").exists()
