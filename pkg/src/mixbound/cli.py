"""``mixbound`` command line.

Exit codes: 0 success, 2 invalid input, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from mixbound import bounds, __version__
from mixbound.blocks import partition, verify_yu_lemma
from mixbound.experiments import ExperimentConfig, run_suite, trials_csv, write_atomic
from mixbound.learners import KernelLearnerSpec, certify_stability, measure_stability, train
from mixbound.mixing import MixingProfile, derive_rng, generate, load_chain_spec

THEOREM_HELP = """theorem evaluators (bound --theorem):
  phi-general    phi-mixing bound at a fixed cutoff b
  phi-algebraic  phi-mixing bound for phi(k) = phi0 k^-r at the optimal cutoff
  corollary      closed-form gap for SVM, SVR, KRR and EntropyMixture
  beta           beta-mixing bound for blocks (a, b, mu) with (a + b) mu = m
  beta-opt       beta-mixing bound at the optimized blocks"""

THEOREMS = ("phi-general", "phi-algebraic", "corollary", "beta", "beta-opt")


class UsageError(ValueError):
    pass


def _load_json(text_or_path: str) -> dict:
    path = Path(text_or_path)
    if path.exists():
        return json.loads(path.read_text())
    try:
        return json.loads(text_or_path)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--json is neither a file nor valid JSON: {exc}") from None


def _resolve_seed(flag, config_seed=None) -> int:
    if flag is not None:
        return int(flag)
    if config_seed is not None:
        return int(config_seed)
    return int(os.environ.get("MIXBOUND_SEED", 0))


def _emit(text: str, out) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _profile(data, default_type):
    if data is None:
        raise UsageError("inputs need a 'profile'")
    data = dict(data)
    data.setdefault("coefficient_type", default_type)
    return MixingProfile.from_dict(data)


def _beta_hat(inp: dict, m: int) -> float:
    if "beta_hat" in inp:
        return float(inp["beta_hat"])
    if "beta_hat_scale" in inp:
        return float(inp["beta_hat_scale"]) * m ** (-float(inp.get("beta_hat_exponent", 1.0)))
    raise UsageError("inputs need 'beta_hat' or 'beta_hat_scale' (+ 'beta_hat_exponent')")


def evaluate_theorem(theorem: str, inp: dict, m: int | None = None) -> bounds.BoundReport:
    m = int(inp["m"] if m is None else m)
    eps, delta = inp.get("epsilon"), inp.get("delta")
    if theorem == "corollary":
        return bounds.corollary_bound(inp["kind"], float(inp["lambda"]), m, float(inp["phi0"]),
                                      float(inp["r"]), float(delta),
                                      kappa=float(inp.get("kappa", 1.0)), B=float(inp.get("B", 1.0)),
                                      M_internal=inp.get("M_internal"))
    bh, M = _beta_hat(inp, m), float(inp["M"])
    if theorem == "phi-general":
        return bounds.phi_bound_general(bounds.PhiBoundInputs(
            bh, M, m, _profile(inp.get("profile"), "phi"), int(inp.get("b", 0)), eps, delta))
    if theorem == "phi-algebraic":
        return bounds.phi_bound_algebraic(bh, M, m, float(inp["phi0"]), float(inp["r"]), eps, delta)
    if theorem == "beta":
        return bounds.beta_bound(bounds.BetaBoundInputs(
            bh, M, m, _profile(inp.get("profile"), "beta"), int(inp["a"]), int(inp["b"]),
            int(inp["mu"]), eps, delta))
    if theorem == "beta-opt":
        if delta is None:
            raise UsageError("beta-opt needs 'delta'")
        return bounds.beta_bound_optimized(bh, M, m, float(inp.get("beta0", 1.0)),
                                           float(inp["r"]), float(delta))
    raise UsageError(f"unknown theorem {theorem!r}")


def sweep_csv(theorem: str, inp: dict, m_list) -> str:
    reports = [(m, evaluate_theorem(theorem, inp, m)) for m in m_list]
    term_keys = sorted({k for _, r in reports for k in r.slack_terms})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["m", "b", "mu", "a", "epsilon", "delta", "bound"] + [f"term_{k}" for k in term_keys])
    for m, r in reports:
        p = r.chosen_parameters
        eps = r.slack_terms.get("epsilon", inp.get("epsilon", ""))
        delta = inp.get("delta", "") if r.mode == "epsilon" else r.bound_value
        row = [m, p.get("b", ""), p.get("mu", ""), p.get("a", ""), eps, delta, r.bound_value]
        row += [r.slack_terms.get(k, "") for k in term_keys]
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _config(args) -> ExperimentConfig:
    data = json.loads(Path(args.config).read_text())
    exp = data.setdefault("experiment", {})
    exp["seed"] = _resolve_seed(args.seed, exp.get("seed"))
    if getattr(args, "workers", None):
        exp["workers"] = args.workers
    return ExperimentConfig.from_dict(data)


def cmd_generate(args):
    model, labeler = load_chain_spec(args.chain)
    seq = generate(model, labeler, args.m, _resolve_seed(args.seed))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "sample.csv"
        seq.to_csv(path)
        _emit(path.read_text(), args.out)
    return 0


def _train_setup(args):
    data = json.loads(Path(args.config).read_text())
    if "chain" not in data or "learner" not in data:
        raise UsageError("config needs 'chain' and 'learner' sections")
    model, labeler = load_chain_spec(data["chain"])
    learner = dict(data["learner"])
    learner.setdefault("B", labeler.B)
    spec = KernelLearnerSpec.from_dict(learner)
    seed = _resolve_seed(args.seed, data.get("experiment", {}).get("seed"))
    m = args.m or data.get("experiment", {}).get("m_list", [100])[0]
    return model, labeler, spec, seed, int(m)


def cmd_train(args):
    model, labeler, spec, seed, m = _train_setup(args)
    fitted = train(spec, generate(model, labeler, m, seed))
    coef = fitted.weights if spec.kind == "EntropyMixture" else fitted.dual_coefficients
    lines = ["i,alpha_i"] + [f"{i},{float(v)!r}" for i, v in enumerate(coef)]
    _emit("\n".join(lines) + "\n", args.out)
    if not fitted.converged:
        print(f"warning: solver stopped after {fitted.n_sweeps} sweeps, duality gap "
              f"{fitted.duality_gap:.3e}", file=sys.stderr)
    return 0


def cmd_stability(args):
    model, labeler, spec, seed, m = _train_setup(args)
    data = generate(model, labeler, m, seed)
    kappa2 = None
    if spec.kind != "EntropyMixture":
        kernel = spec.kernel
        linear_open = kernel.name == "linear" and kernel.radius is None
        kappa2 = labeler.input_radius() ** 2 if linear_open else kernel.kappa2()
    cert = certify_stability(spec, m, kappa2)
    meas = measure_stability(spec, data, model, labeler, args.n_perturbations,
                             args.probe_points, seed)
    out = {"certificate": {"beta_hat": cert.beta_hat, "M": cert.M, "provenance": cert.provenance,
                           "formula_terms": cert.formula_terms},
           "empirical": {"beta_hat": meas.estimate, "provenance": meas.provenance,
                         "n_perturbations": len(meas.deviations)},
           "within_certificate": bool(meas.estimate <= cert.beta_hat + 1e-9)}
    _emit(_dump(out), args.out)
    return 0


def cmd_bound(args):
    inp = _load_json(args.json)
    if args.csv:
        m_list = args.m_list or inp.get("m_list")
        if not m_list:
            raise UsageError("--csv needs --m-list or 'm_list' in the inputs")
        _emit(sweep_csv(args.theorem, inp, [int(m) for m in m_list]), args.out)
    else:
        _emit(_dump(evaluate_theorem(args.theorem, inp).to_dict()), args.out)
    return 0


def cmd_blocks(args):
    plan = partition(args.m, args.a, args.b)
    out = {"m": plan.m, "a": plan.a, "b": plan.b, "mu": plan.mu,
           "a_blocks": plan.a_blocks, "b_blocks": plan.b_blocks, "gaps": plan.gaps,
           "k_star": plan.k_star}
    if args.chain:
        model, _ = load_chain_spec(args.chain)
        rng = derive_rng(_resolve_seed(args.seed), 0)
        n = model.n_states
        if args.h == "indicator":
            def h(configs):
                blocks = configs.reshape(len(configs), plan.mu, plan.a)
                return np.all(blocks == blocks[:, :, :1], axis=2).all(axis=1).astype(float)
        else:
            h = rng.uniform(0.0, 1.0, n ** (plan.mu * plan.a))
        check = verify_yu_lemma(model, plan, h)
        out["yu_lemma"] = {"lhs": check.lhs, "rhs": check.rhs, "holds": check.holds,
                           "M": check.M, "beta_k_star": check.beta_k_star,
                           "marginal_tv": check.marginal_tv}
        if args.csv:
            check.to_csv(args.csv)
    _emit(_dump(out), args.out)
    return 0


def cmd_verify(args):
    config = _config(args)
    out_dir = args.output_dir or config.output_dir or "mixbound-out"
    results, summary = run_suite(config, out_dir)
    bad = [(row["m"], d, f) for row in summary["per_m"]
           for d, f in row["violation_fraction"].items() if f > float(d)]
    print(f"{len(results)} trials, max violation fraction {summary['max_violation_fraction']:.4f}; "
          f"wrote {Path(out_dir) / 'trials.csv'}")
    if bad:
        print(f"bound violated more often than delta in cells {bad}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args):
    config = _config(args)
    out_dir = args.output_dir or config.output_dir or "mixbound-out"
    from dataclasses import replace
    config = replace(config, plot=True)
    _, summary = run_suite(config, out_dir)
    sys.stdout.write(_dump(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixbound",
        description="Stability-based generalization bounds for stationary mixing processes.",
        epilog=THEOREM_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"mixbound {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="sample a stationary labeled sequence to CSV")
    p.add_argument("--chain", required=True, help="chain spec JSON (transition, labels, noise_sd, B)")
    p.add_argument("--m", type=int, required=True, help="sequence length")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_generate)

    for name, func, text in (("train", cmd_train, "train a learner; dual coefficients as CSV"),
                             ("stability", cmd_stability, "certified and measured stability")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment JSON config")
        p.add_argument("--m", type=int, help="sample size (default: first of m_list)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (default: stdout)")
        if name == "stability":
            p.add_argument("--n-perturbations", type=int, default=20)
            p.add_argument("--probe-points", type=int, default=50)
        p.set_defaults(func=func)

    p = sub.add_parser("bound", help="evaluate a generalization bound",
                       epilog=THEOREM_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--theorem", required=True, choices=THEOREMS)
    p.add_argument("--json", required=True, help="inputs as a JSON file or inline JSON")
    p.add_argument("--csv", action="store_true", help="sweep over m and emit CSV rows")
    p.add_argument("--m-list", type=int, nargs="+", help="sample sizes for --csv")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("blocks", help="block plan and exact independent-block check")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--chain", help="chain spec JSON; enables the exact lemma check")
    p.add_argument("--h", choices=("indicator", "random"), default="indicator",
                   help="block function for the lemma check")
    p.add_argument("--seed", type=int)
    p.add_argument("--csv", help="dump the enumerated laws to this CSV")
    p.add_argument("--out", help="output JSON (default: stdout)")
    p.set_defaults(func=cmd_blocks)

    for name, func, text in (("verify", cmd_verify, "Monte Carlo bound-validity suite (CSV)"),
                             ("report", cmd_report, "suite plus summary JSON and SVG plot")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment JSON config")
        p.add_argument("--output-dir", help="directory for trials.csv / summary.json")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.set_defaults(func=func)
    return parser


VALIDATION_ERRORS = (ValueError, KeyError, json.JSONDecodeError, FileNotFoundError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        msg = f"missing field {exc.args[0]!r}" if isinstance(exc, KeyError) else str(exc)
        print(f"mixbound {args.command}: error: {msg}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"mixbound {args.command}: runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
