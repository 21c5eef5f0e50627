import csv
import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from mixbound.cli import THEOREMS, build_parser, main

GOLDEN = Path(__file__).parent / "golden" / "help.txt"
CHAIN = {"transition": [[0.9, 0.1], [0.3, 0.7]], "labels": [0.2, 0.8],
         "noise_sd": 0.1, "B": 1.0, "jitter": 0.05}


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({
        "chain": CHAIN,
        "learner": {"kind": "SVM", "lambda": 0.5, "kernel": {"name": "rbf", "gamma": 2.0}},
        "experiment": {"m_list": [20, 40], "n_trials": 3, "n_test": 40, "seed": 5},
    }))
    return path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_help_matches_golden(monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    assert build_parser().format_help() == GOLDEN.read_text()


def test_help_lists_every_theorem():
    text = GOLDEN.read_text()
    for name in THEOREMS:
        assert f"  {name} " in text


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bound", "--theorem", "beta", "--json", "{}", "--frobnicate"])
    assert exc.value.code == 2


class TestBound:
    def test_algebraic_below_one_exits_2(self, capsys):
        code, _, err = run(capsys, "bound", "--theorem", "phi-algebraic", "--json",
                           '{"beta_hat": 0.01, "M": 1, "m": 100, "phi0": 1, "r": 0.9, "delta": 0.05}')
        assert code == 2
        assert "r > 1" in err

    def test_json_report(self, capsys):
        code, out, _ = run(capsys, "bound", "--theorem", "phi-general", "--json",
                           '{"beta_hat": 0.01, "M": 1, "m": 100, "b": 2, "epsilon": 0.5,'
                           ' "profile": {"kind": "algebraic", "c0": 0.5, "rate": 2}}')
        assert code == 0
        rep = json.loads(out)
        assert rep["theorem"] == "phi-general" and rep["mode"] == "delta"
        assert 0 <= rep["bound_value"] <= 1

    def test_inputs_from_file(self, capsys, tmp_path):
        path = tmp_path / "in.json"
        path.write_text('{"kind": "KRR", "lambda": 1.0, "m": 500, "phi0": 1, "r": 2, "delta": 0.1}')
        code, out, _ = run(capsys, "bound", "--theorem", "corollary", "--json", str(path))
        assert code == 0 and json.loads(out)["constants"]["u"] == pytest.approx(2 / 3)

    def test_csv_sweep(self, capsys):
        code, out, _ = run(capsys, "bound", "--theorem", "beta-opt", "--csv", "--m-list", "1000", "8000",
                           "--json", '{"beta_hat_scale": 1, "M": 1, "r": 2, "delta": 0.9}')
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert [int(r["m"]) for r in rows] == [1000, 8000]
        header = out.splitlines()[0].split(",")
        assert header[:7] == ["m", "b", "mu", "a", "epsilon", "delta", "bound"]
        assert all(h.startswith("term_") for h in header[7:])
        for r in rows:
            assert (int(r["a"]) + int(r["b"])) * int(r["mu"]) == int(r["m"])

    def test_infeasible_is_validation_error(self, capsys):
        code, _, err = run(capsys, "bound", "--theorem", "beta", "--json",
                           '{"beta_hat": 0.01, "M": 1, "m": 120, "a": 18, "b": 2, "mu": 6, "delta": 0.01,'
                           ' "profile": {"kind": "algebraic", "c0": 1, "rate": 2}}')
        assert code == 2 and "delta'" in err

    def test_missing_field(self, capsys):
        code, _, err = run(capsys, "bound", "--theorem", "beta-opt", "--json", '{"M": 1}')
        assert code == 2 and "missing field" in err

    def test_bad_json(self, capsys):
        code, _, err = run(capsys, "bound", "--theorem", "beta", "--json", "{not json")
        assert code == 2 and "neither a file nor valid JSON" in err

    def test_writes_file(self, capsys, tmp_path):
        out = tmp_path / "sub" / "rep.json"
        code, _, _ = run(capsys, "bound", "--theorem", "phi-algebraic", "--out", str(out), "--json",
                         '{"beta_hat": 0.001, "M": 1, "m": 1000, "phi0": 1, "r": 2, "delta": 0.05}')
        assert code == 0 and json.loads(out.read_text())["chosen_parameters"]["b"] in (12, 13)


class TestDataCommands:
    def test_generate(self, capsys, tmp_path):
        chain = tmp_path / "chain.json"
        chain.write_text(json.dumps(CHAIN))
        code, out, _ = run(capsys, "generate", "--chain", str(chain), "--m", "5", "--seed", "1")
        assert code == 0
        assert out.splitlines()[0] == "t,state,x0,y" and len(out.splitlines()) == 6

    def test_seed_env_fallback(self, capsys, tmp_path, monkeypatch):
        chain = tmp_path / "chain.json"
        chain.write_text(json.dumps(CHAIN))
        monkeypatch.setenv("MIXBOUND_SEED", "17")
        _, env_out, _ = run(capsys, "generate", "--chain", str(chain), "--m", "5")
        _, flag_out, _ = run(capsys, "generate", "--chain", str(chain), "--m", "5", "--seed", "17")
        _, other, _ = run(capsys, "generate", "--chain", str(chain), "--m", "5", "--seed", "18")
        assert env_out == flag_out != other

    def test_bad_chain_exits_2(self, capsys, tmp_path):
        chain = tmp_path / "chain.json"
        chain.write_text('{"transition": [[0, 1], [1, 0]], "labels": [0, 1]}')
        code, _, err = run(capsys, "generate", "--chain", str(chain), "--m", "5")
        assert code == 2 and "aperiodic" in err

    def test_train_csv(self, capsys, tiny):
        code, out, _ = run(capsys, "train", "--config", str(tiny), "--m", "12")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "i,alpha_i" and len(lines) == 13

    def test_stability(self, capsys, tiny):
        code, out, _ = run(capsys, "stability", "--config", str(tiny), "--m", "20",
                           "--n-perturbations", "3", "--probe-points", "10")
        rep = json.loads(out)
        assert code == 0 and rep["within_certificate"]
        assert rep["certificate"]["beta_hat"] == pytest.approx(1 / (0.5 * 20))

    def test_blocks_with_lemma(self, capsys, tmp_path):
        chain = tmp_path / "chain.json"
        chain.write_text(json.dumps(CHAIN))
        dump = tmp_path / "yu.csv"
        code, out, _ = run(capsys, "blocks", "--m", "6", "--a", "2", "--b", "1",
                           "--chain", str(chain), "--csv", str(dump))
        rep = json.loads(out)
        assert code == 0 and rep["mu"] == 2 and rep["yu_lemma"]["holds"]
        assert dump.read_text().startswith("config,q,p,h")

    def test_blocks_infeasible(self, capsys):
        code, _, err = run(capsys, "blocks", "--m", "10", "--a", "2", "--b", "1")
        assert code == 2 and "nearest feasible" in err


class TestSuiteCommands:
    def test_verify_writes_csv(self, capsys, tiny, tmp_path):
        out = tmp_path / "out"
        code, stdout, _ = run(capsys, "verify", "--config", str(tiny), "--output-dir", str(out))
        assert code == 0
        assert (out / "trials.csv").read_text().startswith("trial,m,mode,delta,R_hat,R_est,gap,bound,violated")

    def test_rerun_is_identical(self, capsys, tiny, tmp_path):
        for name in ("a", "b"):
            run(capsys, "verify", "--config", str(tiny), "--output-dir", str(tmp_path / name))
        assert (tmp_path / "a" / "trials.csv").read_bytes() == (tmp_path / "b" / "trials.csv").read_bytes()

    def test_seed_flag_overrides_config(self, capsys, tiny, tmp_path):
        run(capsys, "verify", "--config", str(tiny), "--output-dir", str(tmp_path / "a"))
        run(capsys, "verify", "--config", str(tiny), "--seed", "6", "--output-dir", str(tmp_path / "b"))
        assert (tmp_path / "a" / "trials.csv").read_bytes() != (tmp_path / "b" / "trials.csv").read_bytes()

    def test_report(self, capsys, tiny, tmp_path):
        code, out, _ = run(capsys, "report", "--config", str(tiny), "--output-dir", str(tmp_path))
        assert code == 0
        assert json.loads(out)["per_m"][0]["m"] == 20
        assert (tmp_path / "gap_vs_m.svg").read_text().lstrip().startswith("<?xml")

    def test_bad_config_exits_2(self, capsys, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"chain": CHAIN, "learner": {"kind": "SVM", "lambda": 1},
                                   "experiment": {"n_trails": 3}}))
        code, _, err = run(capsys, "verify", "--config", str(cfg))
        assert code == 2 and "n_trails" in err


def test_backends_give_identical_artifacts(tiny, tmp_path):
    outputs = []
    for pure in ("0", "1"):
        env = dict(os.environ, MIXBOUND_PURE_PYTHON=pure)
        proc = subprocess.run([sys.executable, "-m", "mixbound.cli", "train", "--config", str(tiny),
                               "--m", "40"], env=env, capture_output=True, text=True, check=True)
        outputs.append(proc.stdout)
    assert outputs[0] == outputs[1]


def test_runtime_failure_exits_1(capsys, tiny, monkeypatch):
    import mixbound.cli as cli

    def boom(*args, **kwargs):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "run_suite", boom)
    code, _, err = run(capsys, "verify", "--config", str(tiny))
    assert code == 1 and "runtime error" in err
