"""Stationary mixing sequences and their mixing coefficients.

Exact beta/phi coefficients are available only for finite-state Markov
chains, where the supremum over future events collapses to the total
variation distance between the k-step kernel row and the stationary law.
Other processes are described by a user-supplied :class:`MixingProfile`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mixbound._backend import sample_path

STOCHASTIC_TOL = 1e-12
FIXED_POINT_TOL = 1e-10

PROFILE_KINDS = ("exact_table", "algebraic", "exponential", "zero")
COEFFICIENT_TYPES = ("beta", "phi")


class ChainError(ValueError):
    """Raised for an invalid transition matrix or chain specification."""


def derive_rng(seed, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Child streams are derived by hashing the key tuple through
    :class:`numpy.random.SeedSequence`, so trials can run in any order or
    in parallel and still reproduce.
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _is_primitive(transition: np.ndarray) -> bool:
    # Wielandt: a primitive n x n matrix has P^((n-1)^2 + 1) > 0.
    n = transition.shape[0]
    pattern = (transition > 0).astype(np.int64)
    power = np.eye(n, dtype=np.int64)
    exponent = (n - 1) ** 2 + 1
    base = pattern
    while exponent:
        if exponent & 1:
            power = np.minimum(power @ base, 1)
        base = np.minimum(base @ base, 1)
        exponent >>= 1
    return bool(np.all(power > 0))


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Left fixed point of a primitive stochastic matrix."""
    n = transition.shape[0]
    # pi (P - I) = 0 with sum(pi) = 1, solved as a least-squares system.
    system = np.vstack([(transition - np.eye(n)).T, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class MarkovChainModel:
    """Irreducible aperiodic finite-state chain started from its stationary law."""

    transition: np.ndarray
    stationary: np.ndarray = field(init=False)

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ChainError("transition must be a non-empty square matrix")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ChainError("transition entries must be finite and non-negative")
        row_sums = P.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > STOCHASTIC_TOL:
            raise ChainError(
                f"transition rows must sum to 1 (max deviation "
                f"{np.max(np.abs(row_sums - 1.0)):.3e})"
            )
        if not _is_primitive(P):
            raise ChainError("chain must be irreducible and aperiodic")
        pi = stationary_distribution(P)
        if np.max(np.abs(pi @ P - pi)) > FIXED_POINT_TOL:
            raise ChainError("failed to compute a stationary distribution")
        P.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "stationary", pi)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @classmethod
    def two_state(cls, p: float, q: float) -> "MarkovChainModel":
        """Chain with rows ``(1 - p, p)`` and ``(q, 1 - q)``."""
        return cls(np.array([[1.0 - p, p], [q, 1.0 - q]]))

    def k_step(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self.transition, k)

    def second_eigenvalue_modulus(self) -> float:
        moduli = np.sort(np.abs(np.linalg.eigvals(self.transition)))[::-1]
        return float(moduli[1]) if len(moduli) > 1 else 0.0

    def cumulative(self) -> np.ndarray:
        cum = np.cumsum(self.transition, axis=1)
        cum[:, -1] = 1.0
        return np.ascontiguousarray(cum)


def _row_tv(model: MarkovChainModel, k: int) -> np.ndarray:
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    Pk = model.k_step(int(k))
    return 0.5 * np.abs(Pk - model.stationary[None, :]).sum(axis=1)


def exact_beta(model: MarkovChainModel, k: int) -> float:
    """beta(k) = sum_x pi(x) TV(P^k(x, .), pi)."""
    return float(min(1.0, model.stationary @ _row_tv(model, k)))


def exact_phi(model: MarkovChainModel, k: int) -> float:
    """phi(k) = max over states of positive stationary mass of TV(P^k(x, .), pi)."""
    tv = _row_tv(model, k)
    return float(min(1.0, tv[model.stationary > 0].max()))


@dataclass(frozen=True)
class MixingProfile:
    """Functional form of a sequence of mixing coefficients.

    ``kind`` is one of ``exact_table``, ``algebraic`` (``c0 * k**-rate``),
    ``exponential`` (``c0 * exp(-c1 * k**rate)``) or ``zero``. Evaluation
    is clamped to [0, 1]; lag 0 evaluates to 1 except for the zero kind.
    """

    kind: str
    coefficient_type: str = "phi"
    table: tuple = ()
    c0: float = 0.0
    rate: float = 1.0
    c1: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.coefficient_type not in COEFFICIENT_TYPES:
            raise ValueError(f"coefficient_type must be beta or phi, got {self.coefficient_type!r}")
        if self.kind == "exact_table":
            values = tuple(float(v) for v in self.table)
            if not values:
                raise ValueError("exact_table profile needs at least one value")
            if any(v < 0 or v > 1 for v in values):
                raise ValueError("mixing coefficients must lie in [0, 1]")
            if any(b > a + 1e-12 for a, b in zip(values, values[1:])):
                raise ValueError("mixing coefficients must be non-increasing in k")
            object.__setattr__(self, "table", values)
        if self.kind in ("algebraic", "exponential"):
            if self.c0 < 0:
                raise ValueError("c0 must be non-negative")
            if self.rate <= 0:
                raise ValueError("rate must be positive")
        if self.kind == "exponential" and self.c1 <= 0:
            raise ValueError("c1 must be positive")

    @classmethod
    def zero(cls, coefficient_type: str = "phi") -> "MixingProfile":
        return cls("zero", coefficient_type)

    @classmethod
    def algebraic(cls, c0: float, r: float, coefficient_type: str = "phi") -> "MixingProfile":
        return cls("algebraic", coefficient_type, c0=float(c0), rate=float(r))

    @classmethod
    def exponential(cls, c0: float, c1: float, r: float = 1.0,
                    coefficient_type: str = "phi") -> "MixingProfile":
        return cls("exponential", coefficient_type, c0=float(c0), c1=float(c1), rate=float(r))

    def __call__(self, k) -> float:
        k = int(k)
        if k < 0:
            raise ValueError("lag must be non-negative")
        if self.kind == "zero":
            return 0.0
        if k == 0:
            return 1.0
        if self.kind == "exact_table":
            # Beyond the table the last value is a valid (monotone) upper bound.
            return self.table[min(k, len(self.table)) - 1]
        if self.kind == "algebraic":
            return min(1.0, self.c0 * k ** (-self.rate))
        return min(1.0, self.c0 * math.exp(-self.c1 * k ** self.rate))

    def values(self, k_max: int) -> np.ndarray:
        return np.array([self(k) for k in range(1, k_max + 1)])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "coefficient_type": self.coefficient_type,
            "table": list(self.table),
            "c0": self.c0,
            "rate": self.rate,
            "c1": self.c1,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MixingProfile":
        return cls(
            kind=data["kind"],
            coefficient_type=data.get("coefficient_type", "phi"),
            table=tuple(data.get("table", ())),
            c0=float(data.get("c0", 0.0)),
            rate=float(data.get("rate", 1.0)),
            c1=float(data.get("c1", 1.0)),
        )


def profile_from_chain(model: MarkovChainModel, k_max: int,
                       coefficient_type: str = "phi") -> MixingProfile:
    """Exact coefficient table for lags 1..k_max."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    fn = exact_phi if coefficient_type == "phi" else exact_beta
    values = []
    for k in range(1, k_max + 1):
        v = fn(model, k)
        # Clip float noise so the table is monotone by construction.
        values.append(min(v, values[-1]) if values else v)
    return MixingProfile("exact_table", coefficient_type, table=tuple(values))


@dataclass(frozen=True)
class LabelingRule:
    """Map a chain state to a labeled point ``(x, y)``.

    ``x = embedding[state] + U(-jitter, jitter)^d`` and
    ``y = clip(labels[state] + N(0, noise_sd^2), 0, B)``.
    """

    labels: tuple
    noise_sd: float = 0.0
    B: float = 1.0
    embedding: np.ndarray | None = None
    jitter: float = 0.0

    def __post_init__(self):
        labels = tuple(float(v) for v in self.labels)
        if self.B <= 0:
            raise ChainError("B must be positive")
        if any(v < 0 or v > self.B for v in labels):
            raise ChainError("labels must lie in [0, B]")
        if self.noise_sd < 0 or self.jitter < 0:
            raise ChainError("noise_sd and jitter must be non-negative")
        n = len(labels)
        if self.embedding is None:
            emb = np.linspace(0.0, 1.0, n)[:, None] if n > 1 else np.zeros((1, 1))
        else:
            emb = np.atleast_2d(np.asarray(self.embedding, dtype=float))
            if emb.shape[0] != n:
                raise ChainError("embedding needs one row per state")
        emb.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "embedding", emb)

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    def input_radius(self) -> float:
        """Largest possible Euclidean norm of an input."""
        norms = np.linalg.norm(self.embedding, axis=1)
        return float(norms.max() + self.jitter * math.sqrt(self.dim))

    def apply(self, states: np.ndarray, rng: np.random.Generator):
        states = np.asarray(states, dtype=np.int64)
        n = len(states)
        x = self.embedding[states] + rng.uniform(-self.jitter, self.jitter, (n, self.dim))
        noise = rng.normal(0.0, self.noise_sd, n) if self.noise_sd > 0 else np.zeros(n)
        y = np.clip(np.asarray(self.labels)[states] + noise, 0.0, self.B)
        return x, y


@dataclass(frozen=True)
class LabeledSequence:
    x: np.ndarray
    y: np.ndarray
    states: np.ndarray | None = None
    final_state: int | None = None
    B: float = 1.0

    def __post_init__(self):
        if len(self.y) < 1 or len(self.x) != len(self.y):
            raise ValueError("a labeled sequence needs m >= 1 aligned points")
        if np.any(self.y < 0) or np.any(self.y > self.B):
            raise ValueError("labels must lie in [0, B]")

    @property
    def m(self) -> int:
        return len(self.y)

    def replace_point(self, i: int, x_new, y_new) -> "LabeledSequence":
        x = self.x.copy()
        y = self.y.copy()
        x[i] = x_new
        y[i] = y_new
        return LabeledSequence(x, y, None, self.final_state, self.B)

    def to_csv(self, path) -> None:
        d = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "state"] + [f"x{j}" for j in range(d)] + ["y"])
            for t in range(self.m):
                state = "" if self.states is None else int(self.states[t])
                writer.writerow([t, state] + [repr(float(v)) for v in self.x[t]]
                                + [repr(float(self.y[t]))])


def sample_states(model: MarkovChainModel, m: int, rng: np.random.Generator,
                  start: int | None = None) -> np.ndarray:
    """State path of length m; the first state is drawn from ``stationary``
    unless ``start`` is given, in which case the path begins one step after it."""
    if m < 1:
        raise ValueError("m must be at least 1")
    cum = model.cumulative()
    if start is None:
        first = int(np.searchsorted(np.cumsum(model.stationary), rng.random(), side="right"))
        first = min(first, model.n_states - 1)
        return sample_path(cum, first, rng.random(m - 1))
    return sample_path(cum, int(start), rng.random(m))[1:]


def generate(model: MarkovChainModel, labeler: LabelingRule, m: int, seed) -> LabeledSequence:
    """Stationary labeled sample of length m."""
    if len(labeler.labels) != model.n_states:
        raise ChainError("labeler needs one label per chain state")
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed)
    states = sample_states(model, m, rng)
    x, y = labeler.apply(states, rng)
    return LabeledSequence(x, y, states, int(states[-1]), labeler.B)


def load_chain_spec(source) -> tuple[MarkovChainModel, LabelingRule]:
    """Parse ``{"transition", "labels", "noise_sd", "B"}`` (plus optional
    ``embedding`` and ``jitter``) from a dict, JSON string or path."""
    if isinstance(source, (str, Path)) and Path(source).exists():
        data = json.loads(Path(source).read_text())
    elif isinstance(source, str):
        data = json.loads(source)
    else:
        data = dict(source)
    try:
        model = MarkovChainModel(np.asarray(data["transition"], dtype=float))
        labeler = LabelingRule(
            labels=tuple(data["labels"]),
            noise_sd=float(data.get("noise_sd", 0.0)),
            B=float(data.get("B", 1.0)),
            embedding=None if data.get("embedding") is None else np.asarray(data["embedding"], float),
            jitter=float(data.get("jitter", 0.0)),
        )
    except KeyError as exc:
        raise ChainError(f"chain spec missing field {exc.args[0]!r}") from None
    if len(labeler.labels) != model.n_states:
        raise ChainError("labels must have one entry per state")
    return model, labeler
