import json

import pytest

from mixbound.experiments import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    TrialResult,
    run_suite,
    run_trial,
    run_trials,
    summarize,
    trials_csv,
)

CHAIN = {"transition": [[0.9, 0.1], [0.3, 0.7]], "labels": [0.2, 0.8],
         "noise_sd": 0.1, "B": 1.0, "jitter": 0.05}


def config(**overrides):
    base = dict(chain=CHAIN, learner={"kind": "KRR", "lambda": 0.5, "kernel": {"name": "rbf"}},
                m_list=(20, 40), n_trials=4, n_test=50, seed=11)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_from_dict(self):
        cfg = ExperimentConfig.from_dict({"chain": CHAIN, "learner": {"kind": "SVM", "lambda": 1},
                                          "experiment": {"m_list": [10], "delta_list": [0.1]},
                                          "output": {"dir": "out"}})
        assert cfg.m_list == (10,) and cfg.output_dir == "out"

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"chain": CHAIN, "learner": {}, "experiment": {"trials": 3}})

    def test_missing_sections(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"chain": CHAIN})

    @pytest.mark.parametrize("kwargs", [
        {"n_trials": 0}, {"test_mode": "future"}, {"theorem": "corollary"},
        {"m_list": (1,)}, {"delta_list": (1.0,)}, {"test_gap": -1}, {"n_test": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            config(**kwargs)

    def test_learner_B_must_match(self):
        with pytest.raises(ConfigError, match="B"):
            run_trial(config(learner={"kind": "KRR", "lambda": 1.0, "B": 2.0}), 20, 0)


class TestTrials:
    def test_trial_is_reproducible(self):
        a, b = run_trial(config(), 20, 3), run_trial(config(), 20, 3)
        assert a == b
        assert a.R_hat >= 0 and a.R_est >= 0

    def test_trials_differ(self):
        a, b = run_trial(config(), 20, 0), run_trial(config(), 20, 1)
        assert a.R_hat != b.R_hat

    def test_violation_accounting(self):
        r = TrialResult(0, 10, "dependent", 0.1, 0.5, 0.0, {0.05: 0.3, 0.1: 0.5})
        assert r.gap == pytest.approx(0.4)
        assert r.violated(0.05) and not r.violated(0.1)
        r2 = TrialResult(0, 10, "dependent", 0.5, 0.1, 0.0, {0.05: 0.3})
        assert r2.violated(0.05)  # two-sided

    @pytest.mark.parametrize("mode", ["dependent", "independent"])
    def test_modes(self, mode):
        res = run_trials(config(test_mode=mode, test_gap=0))
        assert len(res) == 8 and all(r.mode == mode for r in res)

    def test_beta_theorem(self):
        res = run_trials(config(theorem="beta", m_list=(60,), n_trials=2))
        assert all(v > 0 for r in res for v in r.bounds.values())

    def test_workers_match_serial(self):
        serial = trials_csv(config(), run_trials(config()))
        parallel = trials_csv(config(workers=2), run_trials(config(workers=2)))
        assert serial == parallel


class TestReports:
    def test_csv_layout(self):
        cfg = config()
        text = trials_csv(cfg, run_trials(cfg))
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 1 + 2 * 4 * 2

    def test_summary(self):
        cfg = config(n_trials=6)
        summary = summarize(cfg, run_trials(cfg))
        assert [row["m"] for row in summary["per_m"]] == [20, 40]
        assert set(summary["slope_bound"]) == {"0.05", "0.1"}
        assert 0 <= summary["max_violation_fraction"] <= 1
        # the bound shrinks with m
        assert summary["slope_bound"]["0.05"] < 0

    def test_suite_is_byte_identical(self, tmp_path):
        cfg = config(plot=True)
        run_suite(cfg, tmp_path / "a")
        run_suite(cfg, tmp_path / "b")
        for name in ("trials.csv", "summary.json", "gap_vs_m.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        json.loads((tmp_path / "a" / "summary.json").read_text())

    def test_no_output_dir_writes_nothing(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        run_suite(config(n_trials=1))
        assert list(tmp_path.iterdir()) == []
