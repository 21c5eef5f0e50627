"""Monte Carlo checks that measured generalization gaps respect the bounds."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mixbound import bounds
from mixbound.learners import KernelLearnerSpec, certify_stability, cost, train
from mixbound.mixing import derive_rng, generate, load_chain_spec, profile_from_chain

CSV_HEADER = ["trial", "m", "mode", "delta", "R_hat", "R_est", "gap", "bound", "violated"]
THEOREMS = ("phi-general", "beta")
MODES = ("dependent", "independent")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    chain: dict
    learner: dict
    m_list: tuple = (100, 200, 400)
    n_trials: int = 100
    test_mode: str = "dependent"
    test_gap: int = 1
    n_test: int = 200
    delta_list: tuple = (0.05, 0.1)
    theorem: str = "phi-general"
    seed: int = 0
    workers: int = 1
    plot: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.test_gap < 0:
            raise ConfigError("test_gap must be non-negative")
        if self.test_mode not in MODES:
            raise ConfigError(f"test_mode must be one of {MODES}")
        if self.theorem not in THEOREMS:
            raise ConfigError(f"theorem must be one of {THEOREMS}")
        if not self.m_list or any(int(m) != m or m < 2 for m in self.m_list):
            raise ConfigError("m_list needs integers >= 2")
        if any(not 0 < d < 1 for d in self.delta_list):
            raise ConfigError("every delta must lie in (0, 1)")
        if self.n_test < 1:
            raise ConfigError("n_test must be positive")
        object.__setattr__(self, "m_list", tuple(int(m) for m in self.m_list))
        object.__setattr__(self, "delta_list", tuple(float(d) for d in self.delta_list))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        exp = dict(data.get("experiment", {}))
        if "chain" not in data or "learner" not in data:
            raise ConfigError("config needs 'chain' and 'learner' sections")
        known = {f for f in cls.__dataclass_fields__} - {"chain", "learner"}
        unknown = set(exp) - known
        if unknown:
            raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
        if "output_dir" not in exp and "output" in data:
            exp["output_dir"] = data["output"].get("dir")
        for key in ("m_list", "delta_list"):
            if key in exp:
                exp[key] = tuple(exp[key])
        return cls(chain=data["chain"], learner=data["learner"], **exp)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TrialResult:
    trial: int
    m: int
    mode: str
    R_hat: float
    R_est: float
    R_se: float
    bounds: dict = field(default_factory=dict)
    converged: bool = True

    @property
    def gap(self) -> float:
        return abs(self.R_est - self.R_hat)

    def violated(self, delta) -> bool:
        return self.gap > self.bounds[delta]


class _Setup:
    """Objects shared by every trial of a config."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.model, self.labeler = load_chain_spec(config.chain)
        learner = dict(config.learner)
        learner.setdefault("B", self.labeler.B)
        self.spec = KernelLearnerSpec.from_dict(learner)
        if self.spec.B != self.labeler.B:
            raise ConfigError("learner B must match the chain label bound B")
        coef = "phi" if config.theorem == "phi-general" else "beta"
        self.profile = profile_from_chain(self.model, max(config.m_list), coef)
        self.kappa2 = None
        if self.spec.kind != "EntropyMixture":
            kernel = self.spec.kernel
            if kernel.name == "linear" and kernel.radius is None:
                self.kappa2 = self.labeler.input_radius() ** 2
            else:
                self.kappa2 = kernel.kappa2()
        self._bounds = {}

    def bound(self, m: int, delta: float) -> float:
        key = (m, delta)
        if key not in self._bounds:
            cert = certify_stability(self.spec, m, self.kappa2)
            try:
                if self.config.theorem == "phi-general":
                    rep = bounds.best_phi_bound(cert.beta_hat, cert.M, m, self.profile, delta)
                else:
                    rep = bounds.best_beta_bound(cert.beta_hat, cert.M, m, self.profile, delta)
                self._bounds[key] = rep.bound_value
            except bounds.InfeasibleError:
                self._bounds[key] = math.inf
        return self._bounds[key]


def _estimate_risk(setup: _Setup, model_fit, final_state, rng):
    cfg = setup.config
    if cfg.test_mode == "dependent":
        law = setup.model.k_step(cfg.test_gap)[final_state] if cfg.test_gap else None
        if law is None:
            states = np.full(cfg.n_test, final_state)
        else:
            states = rng.choice(setup.model.n_states, size=cfg.n_test, p=law)
    else:
        states = rng.choice(setup.model.n_states, size=cfg.n_test, p=setup.model.stationary)
    x, y = setup.labeler.apply(states, rng)
    c = cost(model_fit, x, y)
    return float(c.mean()), float(c.std(ddof=1) / math.sqrt(len(c))) if len(c) > 1 else 0.0


def run_trial(config: ExperimentConfig, m: int, trial_index: int, setup: _Setup | None = None) -> TrialResult:
    """Generate a sample, train, estimate both risks and attach the bounds.

    Dependent mode conditions the test point on the sample: its state is
    drawn ``test_gap`` steps after the last training state. Independent
    mode draws test points from the stationary law.
    """
    setup = setup or _Setup(config)
    data = generate(setup.model, setup.labeler, m, derive_rng(config.seed, m, trial_index, 0))
    fitted = train(setup.spec, data)
    R_hat = float(cost(fitted, data.x, data.y).mean())
    R_est, R_se = _estimate_risk(setup, fitted, data.final_state,
                                 derive_rng(config.seed, m, trial_index, 1))
    result = TrialResult(trial_index, m, config.test_mode, R_hat, R_est, R_se,
                         converged=fitted.converged)
    result.bounds = {d: setup.bound(m, d) for d in config.delta_list}
    return result


def _run_chunk(args):
    config, jobs = args
    setup = _Setup(config)
    return [run_trial(config, m, t, setup) for m, t in jobs]


def run_trials(config: ExperimentConfig) -> list[TrialResult]:
    jobs = [(m, t) for m in config.m_list for t in range(config.n_trials)]
    if config.workers <= 1:
        results = _run_chunk((config, jobs))
    else:
        chunks = [jobs[i::config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(config.workers) as pool:
            results = [r for part in pool.map(_run_chunk, [(config, c) for c in chunks]) for r in part]
    order = {m: i for i, m in enumerate(config.m_list)}
    return sorted(results, key=lambda r: (order[r.m], r.trial))


def trials_csv(config: ExperimentConfig, results: list[TrialResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in results:
        for d in config.delta_list:
            writer.writerow([r.trial, r.m, r.mode, repr(d), repr(r.R_hat), repr(r.R_est),
                             repr(r.gap), repr(r.bounds[d]), int(r.violated(d))])
    return buf.getvalue()


def _slope(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = (ys > 0) & np.isfinite(ys)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


def summarize(config: ExperimentConfig, results: list[TrialResult]) -> dict:
    per_m = []
    for m in config.m_list:
        rs = [r for r in results if r.m == m]
        gaps = np.array([r.gap for r in rs])
        row = {
            "m": m,
            "n_trials": len(rs),
            "mean_gap": float(gaps.mean()),
            "se_gap": float(gaps.std(ddof=1) / math.sqrt(len(gaps))) if len(gaps) > 1 else 0.0,
            "max_gap": float(gaps.max()),
            "non_converged": int(sum(not r.converged for r in rs)),
            "bound": {repr(d): rs[0].bounds[d] for d in config.delta_list},
            "violation_fraction": {repr(d): float(np.mean([r.violated(d) for r in rs]))
                                   for d in config.delta_list},
        }
        per_m.append(row)
    ms = [row["m"] for row in per_m]
    return {
        "theorem": config.theorem,
        "test_mode": config.test_mode,
        "seed": config.seed,
        "per_m": per_m,
        "slope_mean_gap": _slope(ms, [row["mean_gap"] for row in per_m]),
        "slope_bound": {repr(d): _slope(ms, [row["bound"][repr(d)] for row in per_m])
                        for d in config.delta_list},
        "max_violation_fraction": max(max(row["violation_fraction"].values()) for row in per_m),
    }


def write_atomic(path, content: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plot_svg(config: ExperimentConfig, summary: dict) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "mixbound"
    ms = [row["m"] for row in summary["per_m"]]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(ms, [row["mean_gap"] for row in summary["per_m"]], "o-", label="mean |R - R_hat|")
    for d in config.delta_list:
        vals = [row["bound"][repr(d)] for row in summary["per_m"]]
        if all(np.isfinite(vals)):
            ax.loglog(ms, vals, "s--", label=f"bound, delta={d}")
    ax.set_xlabel("m")
    ax.set_ylabel("gap")
    ax.legend()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def run_suite(config: ExperimentConfig, output_dir=None) -> tuple[list[TrialResult], dict]:
    """Run every trial; write ``trials.csv`` and ``summary.json`` (and
    ``gap_vs_m.svg`` when ``plot`` is set) if an output directory is known."""
    results = run_trials(config)
    summary = summarize(config, results)
    out = output_dir or config.output_dir
    if out is not None:
        out = Path(out)
        write_atomic(out / "trials.csv", trials_csv(config, results))
        write_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        if config.plot:
            write_atomic(out / "gap_vs_m.svg", plot_svg(config, summary))
    return results, summary
