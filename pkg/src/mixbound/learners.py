"""Kernel-regularized and relative-entropy-regularized learners.

All kernel learners minimize ``(1/m) sum c(h, z_i) + lam * ||h||_K^2`` over
the RKHS with no offset term, so the uniform stability constants below
apply verbatim.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from mixbound._backend import svm_sweep, svr_sweep
from mixbound.mixing import LabeledSequence, LabelingRule, MarkovChainModel, derive_rng, sample_states

KINDS = ("KRR", "SVR", "SVM", "EntropyMixture")
MAX_SWEEPS = 100_000


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Kernel descriptor.

    ``linear``: ``<x, x'>``; ``rbf``: ``exp(-gamma |x - x'|^2)`` (kappa = 1);
    ``poly``: ``(<x, x'> / radius^2 + coef0)^degree`` on inputs of norm at
    most ``radius``. ``radius`` also fixes kappa for the linear kernel;
    when it is None kappa is taken from the training inputs.
    """

    name: str = "rbf"
    gamma: float = 1.0
    degree: int = 2
    coef0: float = 1.0
    radius: float | None = None

    def __post_init__(self):
        if self.name not in ("linear", "rbf", "poly"):
            raise LearnerError(f"unknown kernel {self.name!r}")
        if self.name == "poly" and self.radius is None:
            raise LearnerError("poly kernel needs an input radius for normalization")

    def __call__(self, X, Y) -> np.ndarray:
        X = np.atleast_2d(X)
        Y = np.atleast_2d(Y)
        if self.name == "rbf":
            sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
            return np.exp(-self.gamma * np.maximum(sq, 0.0))
        inner = X @ Y.T
        if self.name == "linear":
            return inner
        return (inner / self.radius ** 2 + self.coef0) ** self.degree

    def diag(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.name == "rbf":
            return np.ones(len(X))
        sq = (X * X).sum(1)
        if self.name == "linear":
            return sq
        return (sq / self.radius ** 2 + self.coef0) ** self.degree

    def kappa2(self, X=None) -> float:
        """Upper bound on K(x, x) over the input domain."""
        if self.name == "rbf":
            return 1.0
        if self.name == "poly":
            return (1.0 + self.coef0) ** self.degree
        if self.radius is not None:
            return self.radius ** 2
        if X is None:
            raise LearnerError("linear kernel without radius needs training inputs for kappa")
        return float(self.diag(X).max())

    def to_dict(self) -> dict:
        return {"name": self.name, "gamma": self.gamma, "degree": self.degree,
                "coef0": self.coef0, "radius": self.radius}


@dataclass(frozen=True)
class EntropyFamily:
    """Finite set of base regressors for the entropy-regularized mixture.

    Constants on a grid over [0, B], plus decision stumps on input
    coordinate ``feature`` at fixed thresholds. The family never looks at
    the training data.
    """

    n_constants: int = 11
    thresholds: tuple = (0.25, 0.5, 0.75)
    n_stump_values: int = 5
    feature: int = 0

    def predictions(self, X, B: float) -> np.ndarray:
        """Matrix of base predictions, shape (n_hypotheses, n_points)."""
        X = np.atleast_2d(X)
        n = len(X)
        rows = [np.full(n, c) for c in np.linspace(0.0, B, self.n_constants)]
        values = np.linspace(0.0, B, self.n_stump_values)
        col = X[:, self.feature]
        for t in self.thresholds:
            left = col <= t
            for lo in values:
                for hi in values:
                    rows.append(np.where(left, lo, hi))
        return np.vstack(rows)


@dataclass(frozen=True)
class KernelLearnerSpec:
    kind: str
    lam: float
    kernel: Kernel = field(default_factory=Kernel)
    B: float = 1.0
    epsilon_tube: float = 0.0
    family: EntropyFamily = field(default_factory=EntropyFamily)
    tol: float = 1e-10
    max_sweeps: int = MAX_SWEEPS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LearnerError(f"unknown learner kind {self.kind!r}")
        if not self.lam > 0:
            raise LearnerError("lambda must be positive")
        if not self.B > 0:
            raise LearnerError("B must be positive")
        if self.epsilon_tube < 0:
            raise LearnerError("epsilon_tube must be non-negative")

    @property
    def sigma_admissibility(self) -> float:
        # squared loss is 2B-admissible on [0, B]; hinge and eps-insensitive are 1-admissible
        return 2.0 * self.B if self.kind == "KRR" else 1.0

    @classmethod
    def from_dict(cls, data: dict) -> "KernelLearnerSpec":
        kernel = Kernel(**data.get("kernel", {}))
        family = EntropyFamily(**{k: tuple(v) if k == "thresholds" else v
                                  for k, v in data.get("family", {}).items()})
        lam = data.get("lambda", data.get("lam"))
        if lam is None:
            raise LearnerError("learner spec needs 'lambda'")
        return cls(kind=data["kind"], lam=float(lam), kernel=kernel,
                   B=float(data.get("B", 1.0)),
                   epsilon_tube=float(data.get("epsilon_tube", 0.0)), family=family,
                   tol=float(data.get("tol", 1e-10)),
                   max_sweeps=int(data.get("max_sweeps", MAX_SWEEPS)))


@dataclass(frozen=True)
class StabilityCertificate:
    beta_hat: float
    M: float
    provenance: str
    formula_terms: dict


@dataclass(frozen=True)
class TrainedModel:
    spec: KernelLearnerSpec
    dual_coefficients: np.ndarray
    support_inputs: np.ndarray
    objective_value: float
    kappa2: float
    converged: bool = True
    n_sweeps: int = 0
    duality_gap: float = 0.0
    weights: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return self.spec.kind

    def output_bound(self) -> float:
        """kappa * sqrt(B0 / lam), B0 being the cost of the zero hypothesis."""
        b0 = {"KRR": self.spec.B ** 2, "SVR": self.spec.B, "SVM": 1.0}[self.kind]
        return math.sqrt(self.kappa2) * math.sqrt(b0 / self.spec.lam)


def binary_labels(y, B: float) -> np.ndarray:
    """SVM targets: +1 on the upper half of [0, B], -1 below."""
    return np.where(np.asarray(y) >= B / 2.0, 1.0, -1.0)


def squared_cost(pred, y):
    return (pred - y) ** 2


def eps_insensitive_cost(pred, y, eps):
    return np.maximum(np.abs(pred - y) - eps, 0.0)


def hinge_cost(pred, y):
    """Hinge capped at 1: 0 if yh >= 1, 1 - yh on [0, 1), 1 if yh < 0."""
    return np.clip(1.0 - y * pred, 0.0, 1.0)


def _hinge_train_loss(pred, y):
    return np.maximum(1.0 - y * pred, 0.0)


def _targets(spec: KernelLearnerSpec, y) -> np.ndarray:
    return binary_labels(y, spec.B) if spec.kind == "SVM" else np.asarray(y, dtype=float)


def _coordinate_ascent(spec, G, t):
    m = len(t)
    C = 1.0 / (2.0 * spec.lam * m)
    coef = np.zeros(m)
    f = np.zeros(m)
    best = None
    converged = False
    sweeps = 0
    gap = math.inf
    for sweeps in range(1, spec.max_sweeps + 1):
        if spec.kind == "SVM":
            change = svm_sweep(G, t, C, coef, f)
            beta = coef * t
            quad = float(beta @ f)
            primal = 0.5 * quad + C * _hinge_train_loss(f, t).sum()
            dual = coef.sum() - 0.5 * quad
        else:
            change = svr_sweep(G, t, C, spec.epsilon_tube, coef, f)
            quad = float(coef @ f)
            primal = 0.5 * quad + C * eps_insensitive_cost(f, t, spec.epsilon_tube).sum()
            dual = float(t @ coef) - spec.epsilon_tube * np.abs(coef).sum() - 0.5 * quad
        # gap expressed in units of the lam-regularized objective
        gap = 2.0 * spec.lam * max(primal - dual, 0.0)
        if best is None or primal < best[0]:
            best = (primal, coef.copy(), gap)
        if gap <= spec.tol or change == 0.0:
            converged = True
            break
    primal, coef, gap = best
    beta = coef * t if spec.kind == "SVM" else coef
    return beta, 2.0 * spec.lam * primal, converged, sweeps, gap


def train(spec: KernelLearnerSpec, data: LabeledSequence) -> TrainedModel:
    """Fit the learner on ``data``.

    KRR solves ``(G + lam m I) alpha = y`` exactly. SVR and SVM run cyclic
    dual coordinate ascent until the duality gap drops below ``spec.tol``
    or ``spec.max_sweeps`` is reached, returning the best iterate and a
    ``converged`` flag. EntropyMixture returns the Gibbs weights.
    """
    X = np.asarray(data.x, dtype=float)
    y = np.asarray(data.y, dtype=float)
    m = len(y)
    if m < 1:
        raise LearnerError("need at least one training point")

    if spec.kind == "EntropyMixture":
        H = spec.family.predictions(X, spec.B)
        losses = np.abs(H - y[None, :]).sum(axis=1)
        logits = -losses / (spec.lam * m)
        logits -= logits.max()
        w = np.exp(logits)
        w /= w.sum()
        n = len(w)
        cost = float(w @ (losses / m))
        kl = float(np.sum(w[w > 0] * np.log(w[w > 0] * n)))
        return TrainedModel(spec, np.zeros(0), X, cost + spec.lam * kl, 0.0, weights=w)

    kappa2 = spec.kernel.kappa2(X)
    if spec.kernel.diag(X).max() > kappa2 * (1 + 1e-12):
        raise LearnerError("training inputs violate the declared kernel bound kappa^2")
    G = np.ascontiguousarray(spec.kernel(X, X))
    if not np.all(np.isfinite(G)):
        raise LearnerError("Gram matrix is not finite")

    if spec.kind == "KRR":
        A = G + spec.lam * m * np.eye(m)
        alpha = linalg.solve(A, y, assume_a="pos")
        f = G @ alpha
        objective = float(np.mean((f - y) ** 2) + spec.lam * alpha @ f)
        return TrainedModel(spec, alpha, X, objective, kappa2)

    t = np.ascontiguousarray(_targets(spec, y))
    beta, objective, converged, sweeps, gap = _coordinate_ascent(spec, G, t)
    return TrainedModel(spec, beta, X, objective, kappa2, converged, sweeps, gap)


def predict(model: TrainedModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.kind == "EntropyMixture":
        return model.weights @ model.spec.family.predictions(X, model.spec.B)
    return model.spec.kernel(X, model.support_inputs) @ model.dual_coefficients


def cost(model: TrainedModel, X, y) -> np.ndarray:
    """Per-point cost ``c(h, z)`` with ``y`` on the original [0, B] scale
    (SVM maps it to +-1 internally)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    spec = model.spec
    if spec.kind == "EntropyMixture":
        H = spec.family.predictions(X, spec.B)
        return model.weights @ np.abs(H - y[None, :])
    pred = predict(model, X)
    if spec.kind == "KRR":
        return squared_cost(pred, y)
    if spec.kind == "SVR":
        return eps_insensitive_cost(pred, y, spec.epsilon_tube)
    return hinge_cost(pred, binary_labels(y, spec.B))


def certify_stability(spec: KernelLearnerSpec, m: int, kappa2: float | None = None,
                      M_internal: float | None = None) -> StabilityCertificate:
    """Uniform stability constant and cost bound from the closed forms.

    KRR: 4 k^2 B^2 / (lam m), M = k^2 B^2 / lam + B^2.
    SVR: k^2 / (lam m), M = k sqrt(B / lam) + B.
    SVM: k^2 / (lam m), M = 1.
    EntropyMixture: M^2 / (lam m) with M the base-cost bound (default B).
    """
    if m < 1:
        raise LearnerError("m must be positive")
    lam, B = spec.lam, spec.B
    if spec.kind == "EntropyMixture":
        M = float(B if M_internal is None else M_internal)
        return StabilityCertificate(M * M / (lam * m), M, "formula",
                                    {"M": M, "lam": lam, "m": m})
    if kappa2 is None:
        kappa2 = spec.kernel.kappa2()
    sigma = spec.sigma_admissibility
    beta_hat = sigma ** 2 * kappa2 / (m * lam)
    if spec.kind == "KRR":
        M = kappa2 * B * B / lam + B * B
    elif spec.kind == "SVR":
        M = math.sqrt(kappa2) * math.sqrt(B / lam) + B
    else:
        M = 1.0
    return StabilityCertificate(beta_hat, M, "formula",
                                {"sigma": sigma, "kappa2": kappa2, "lam": lam, "m": m, "B": B})


@dataclass(frozen=True)
class StabilityMeasurement:
    estimate: float
    deviations: np.ndarray
    indices: np.ndarray
    provenance: str = "empirical"


def probe_grid(labeler: LabelingRule, n_inputs: int, n_labels: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Probe inputs spread over the input domain, crossed with a label grid."""
    n_states = len(labeler.labels)
    states = np.arange(n_inputs) % n_states
    x = labeler.embedding[states] + rng.uniform(-labeler.jitter, labeler.jitter,
                                                (n_inputs, labeler.dim))
    labels = np.linspace(0.0, labeler.B, n_labels)
    X = np.repeat(x, n_labels, axis=0)
    Y = np.tile(labels, n_inputs)
    return X, Y


def measure_stability(spec: KernelLearnerSpec, data: LabeledSequence, model: MarkovChainModel,
                      labeler: LabelingRule, n_perturbations: int = 20, probe_points: int = 50,
                      seed=0, n_probe_labels: int = 5, replacements=None) -> StabilityMeasurement:
    """Lower-bound estimate of the uniform stability constant.

    Replaces a random training point by a fresh draw from the stationary
    marginal, retrains, and records the largest cost change on a probe
    grid. ``replacements`` may supply explicit ``(i, x, y)`` triples.
    """
    if n_perturbations < 1:
        raise LearnerError("n_perturbations must be at least 1")
    rng = derive_rng(seed, 0)
    base = train(spec, data)
    Xp, Yp = probe_grid(labeler, probe_points, n_probe_labels, derive_rng(seed, 1))
    base_cost = cost(base, Xp, Yp)
    if replacements is None:
        replacements = []
        for _ in range(n_perturbations):
            i = int(rng.integers(data.m))
            state = sample_states(model, 1, rng)
            x_new, y_new = labeler.apply(state, rng)
            replacements.append((i, x_new[0], float(y_new[0])))
    deviations, indices = [], []
    for i, x_new, y_new in replacements:
        perturbed = train(spec, data.replace_point(i, x_new, y_new))
        deviations.append(float(np.max(np.abs(cost(perturbed, Xp, Yp) - base_cost))))
        indices.append(i)
    deviations = np.array(deviations)
    return StabilityMeasurement(float(deviations.max()), deviations, np.array(indices))


def with_lambda(spec: KernelLearnerSpec, lam: float) -> KernelLearnerSpec:
    return replace(spec, lam=lam)
