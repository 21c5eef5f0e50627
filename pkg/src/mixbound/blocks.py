"""Block decompositions and an exact check of the independent-block lemma."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from mixbound.mixing import MarkovChainModel, derive_rng, exact_beta, sample_states

MAX_ENUMERATION = 10 ** 6


class BlockError(ValueError):
    pass


@dataclass(frozen=True)
class BlockPlan:
    """Alternating blocks: ``mu`` a-blocks of length a, each followed by a
    b-block of length b. Ranges are 1-based and inclusive."""

    m: int
    a: int
    b: int

    @property
    def mu(self) -> int:
        return self.m // (self.a + self.b)

    @property
    def a_blocks(self) -> list[tuple[int, int]]:
        step = self.a + self.b
        return [(i * step + 1, i * step + self.a) for i in range(self.mu)]

    @property
    def b_blocks(self) -> list[tuple[int, int]]:
        step = self.a + self.b
        return [(i * step + self.a + 1, (i + 1) * step) for i in range(self.mu) if self.b > 0]

    def a_indices(self) -> np.ndarray:
        """0-based indices of the a-block points, shape (mu, a)."""
        start = np.arange(self.mu) * (self.a + self.b)
        return start[:, None] + np.arange(self.a)[None, :]

    @property
    def gaps(self) -> list[int]:
        """``k_i = r_{i+1} - s_i`` between consecutive a-blocks."""
        blocks = self.a_blocks
        return [blocks[i + 1][0] - blocks[i][1] for i in range(len(blocks) - 1)]

    @property
    def k_star(self) -> int | None:
        return min(self.gaps) if self.mu > 1 else None


def nearest_feasible(m: int, a: int, b: int) -> tuple[int, int]:
    best = None
    for size in range(1, m + 1):
        if m % size:
            continue
        for a2, b2 in ((min(max(a, 1), size), size - min(max(a, 1), size)),
                       (size - min(max(b, 0), size - 1), min(max(b, 0), size - 1))):
            cost = (abs(a2 - a) + abs(b2 - b), abs(a2 - a))
            if best is None or cost < best[0]:
                best = (cost, (a2, b2))
    return best[1]


def partition(m: int, a: int, b: int) -> BlockPlan:
    """Split indices 1..m into mu = m / (a + b) alternating a- and b-blocks."""
    if m < 1 or a < 1 or b < 0:
        raise BlockError("need m >= 1, a >= 1 and b >= 0")
    if m % (a + b):
        a2, b2 = nearest_feasible(m, a, b)
        raise BlockError(f"a + b = {a + b} does not divide m = {m}; nearest feasible (a, b) = ({a2}, {b2})")
    return BlockPlan(m, a, b)


def sample_independent_blocks(model: MarkovChainModel, plan: BlockPlan, seed,
                              labeler=None):
    """mu independent stationary chain segments of length a.

    Returns the (mu, a) state array, or ``(states, x, y)`` when a labeler
    is given.
    """
    states = np.vstack([sample_states(model, plan.a, derive_rng(seed, i))
                        for i in range(plan.mu)])
    if labeler is None:
        return states
    x, y = labeler.apply(states.ravel(), derive_rng(seed, plan.mu))
    return states, x.reshape(plan.mu, plan.a, -1), y.reshape(plan.mu, plan.a)


def _path_probabilities(model: MarkovChainModel, length: int) -> tuple[np.ndarray, np.ndarray]:
    n = model.n_states
    seqs = np.array(list(itertools.product(range(n), repeat=length)), dtype=np.int64)
    probs = model.stationary[seqs[:, 0]].copy()
    for t in range(length - 1):
        probs *= model.transition[seqs[:, t], seqs[:, t + 1]]
    return seqs, probs


def _encode(states: np.ndarray, n: int) -> np.ndarray:
    weights = n ** np.arange(states.shape[1] - 1, -1, -1, dtype=np.int64)
    return states @ weights


@dataclass
class YuCheck:
    lhs: float
    rhs: float
    holds: bool
    M: float
    k_star: int | None
    beta_k_star: float
    marginal_tv: list
    configurations: np.ndarray
    q: np.ndarray
    p: np.ndarray
    h_values: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["config", "q", "p", "h"])
            for idx, q, p, h in zip(self.configurations, self.q, self.p, self.h_values):
                writer.writerow(["".join(map(str, idx)), repr(float(q)), repr(float(p)),
                                 repr(float(h))])


def verify_yu_lemma(model: MarkovChainModel, plan: BlockPlan, h, tol: float = 1e-12) -> YuCheck:
    """Exact check of ``|E_Q[h] - E_P[h]| <= (mu - 1) M beta(k*)``.

    Q is the law of the a-blocks inside one stationary path of length m;
    P is the product of their (identical) block marginals. ``h`` maps an
    integer array of shape (N, mu * a) of block states to N values, or is
    a table indexed by the base-n encoding of that configuration. M is the
    range ``max h - min h``; for h with values in [0, M] this is the
    stated lemma, and it is the tightest constant for signed h.
    """
    n = model.n_states
    if n ** plan.m > MAX_ENUMERATION:
        raise BlockError(f"state space too large to enumerate: {n}^{plan.m} > {MAX_ENUMERATION}")
    idx = plan.a_indices().ravel()
    width = len(idx)

    seqs, probs = _path_probabilities(model, plan.m)
    codes = _encode(seqs[:, idx], n)
    q = np.bincount(codes, weights=probs, minlength=n ** width)

    _, block_probs = _path_probabilities(model, plan.a)
    p = block_probs
    for _ in range(plan.mu - 1):
        p = np.outer(p, block_probs).ravel()

    configs = np.array(list(itertools.product(range(n), repeat=width)), dtype=np.int64)
    if callable(h):
        h_values = np.asarray(h(configs), dtype=float)
    else:
        h_values = np.asarray(h, dtype=float)
        if h_values.shape != (n ** width,):
            raise BlockError(f"h table must have {n ** width} entries")
    M = float(h_values.max() - h_values.min())

    lhs = abs(float(q @ h_values) - float(p @ h_values))
    k_star = plan.k_star
    beta_k = exact_beta(model, k_star) if k_star is not None else 0.0
    rhs = (plan.mu - 1) * M * beta_k

    # premise: each block of Q has the same law as the independent block
    q_blocks = q.reshape((n ** plan.a,) * plan.mu)
    tvs = []
    for i in range(plan.mu):
        axes = tuple(j for j in range(plan.mu) if j != i)
        marginal = q_blocks.sum(axis=axes) if axes else q_blocks
        tvs.append(0.5 * float(np.abs(marginal - block_probs).sum()))
    return YuCheck(lhs, rhs, bool(lhs <= rhs + tol), M, k_star, beta_k, tvs,
                   configs, q, p, h_values)
