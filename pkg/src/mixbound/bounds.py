"""Stability-based generalization bounds for phi-mixing and beta-mixing samples.

Every evaluator works in two directions: given a deviation ``epsilon`` it
returns the failure probability ``delta``; given ``delta`` it returns the
high-probability bound on ``|R(h_S) - R_hat(h_S)|``. Inversions are closed
form.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from mixbound.mixing import MixingProfile


class BoundError(ValueError):
    """Invalid bound inputs."""


class UnsupportedRegimeError(BoundError):
    """Mixing rate outside the regime a theorem covers (e.g. r <= 1)."""


class InfeasibleError(BoundError):
    """epsilon' < 0 or delta' <= 0: the requested level is not attainable."""


@dataclass
class BoundReport:
    theorem: str
    mode: str  # "delta": bound_value is a probability; "epsilon": a gap
    bound_value: float
    vacuous: bool = False
    slack_terms: dict = field(default_factory=dict)
    chosen_parameters: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_common(beta_hat, M, m):
    if beta_hat < 0 or not math.isfinite(beta_hat):
        raise BoundError("beta_hat must be finite and non-negative")
    if not M > 0:
        raise BoundError("M must be positive")
    if int(m) != m or m < 1:
        raise BoundError("m must be a positive integer")


def _check_delta(delta):
    if not 0 < delta <= 1:
        raise BoundError(f"delta must lie in (0, 1], got {delta}")


def _probability(raw: float) -> tuple[float, bool]:
    return min(1.0, raw), raw >= 1.0


def concentration_constant(profile: MixingProfile, m: int) -> float:
    """``1 + 2 * sum_{i=1}^m phi(i)``, summed exactly for every profile kind."""
    if profile.kind == "zero":
        return 1.0
    k = np.arange(1, int(m) + 1, dtype=float)
    if profile.kind == "algebraic":
        vals = np.minimum(1.0, profile.c0 * k ** (-profile.rate))
    elif profile.kind == "exponential":
        vals = np.minimum(1.0, profile.c0 * np.exp(-profile.c1 * k ** profile.rate))
    else:
        table = np.asarray(profile.table)
        vals = table[np.minimum(k.astype(np.int64), len(table)) - 1]
    return 1.0 + 2.0 * float(vals.sum())


def algebraic_sum_constant(phi0: float, r: float) -> float:
    """``1 + 2 phi0 r / (r - 1)``, valid for every m when r > 1."""
    if r <= 1:
        raise UnsupportedRegimeError("the sum constant needs r > 1")
    return 1.0 + 2.0 * phi0 * r / (r - 1.0)


# --------------------------------------------------------------------------
# phi-mixing


@dataclass(frozen=True)
class PhiBoundInputs:
    beta_hat: float
    M: float
    m: int
    profile: MixingProfile
    b: int = 0
    epsilon: float | None = None
    delta: float | None = None

    def __post_init__(self):
        _check_common(self.beta_hat, self.M, self.m)
        if int(self.b) != self.b or not 0 <= self.b <= self.m:
            raise BoundError("b must be an integer in [0, m]")
        if self.profile.coefficient_type != "phi" and self.profile.kind != "zero":
            raise BoundError("phi bounds need a phi-type mixing profile")
        if (self.epsilon is None) == (self.delta is None):
            raise BoundError("give exactly one of epsilon or delta")
        if self.epsilon is not None and self.epsilon < 0:
            raise BoundError("epsilon must be non-negative")
        if self.delta is not None:
            _check_delta(self.delta)


def _phi_terms(beta_hat, M, m, phi_b, b):
    offset = (6 * b + 1) * beta_hat + 6 * M * phi_b
    lipschitz = (b + 1) * 2 * beta_hat + 2 * M * phi_b + M / m
    return offset, lipschitz


def _phi_report(theorem, beta_hat, M, m, b, phi_b, conc, epsilon, delta, params, constants):
    offset, lip = _phi_terms(beta_hat, M, m, phi_b, b)
    slack = {"risk_shift": offset, "lipschitz": lip, "concentration": conc, "phi_b": phi_b}
    if delta is None:
        raw = 2.0 * math.exp(-2.0 * epsilon ** 2 / (conc ** 2 * m * lip ** 2))
        value, vacuous = _probability(raw)
        slack["epsilon"] = epsilon
        slack["gap_threshold"] = epsilon + offset
        return BoundReport(theorem, "delta", value, vacuous, slack, params, constants)
    eps = conc * lip * math.sqrt(m * math.log(2.0 / delta) / 2.0)
    slack["epsilon"] = eps
    slack["delta"] = delta
    return BoundReport(theorem, "epsilon", eps + offset, False, slack, params, constants)


def phi_bound_general(inputs: PhiBoundInputs) -> BoundReport:
    """General phi-mixing stability bound at a fixed cutoff b.

    ``P[|R - R_hat| > eps + (6b+1) beta_hat + 6 M phi(b)]
    <= 2 exp(-2 eps^2 / (Delta^2 m l^2))`` with
    ``l = (b+1) 2 beta_hat + 2 M phi(b) + M/m`` and
    ``Delta = 1 + 2 sum_{i<=m} phi(i)``.
    """
    p = inputs
    conc = concentration_constant(p.profile, p.m)
    return _phi_report("phi-general", p.beta_hat, p.M, p.m, p.b, p.profile(p.b), conc,
                       p.epsilon, p.delta, {"b": int(p.b)}, {})


def phi_gap_curve(beta_hat, M, m, profile: MixingProfile, delta: float,
                  b_values=None) -> tuple[np.ndarray, np.ndarray]:
    """High-probability gap bound of :func:`phi_bound_general` for many b."""
    _check_common(beta_hat, M, m)
    _check_delta(delta)
    b = np.arange(m + 1) if b_values is None else np.asarray(b_values, dtype=np.int64)
    phi_b = np.array([profile(k) for k in b])
    conc = concentration_constant(profile, m)
    offset = (6 * b + 1) * beta_hat + 6 * M * phi_b
    lip = (b + 1) * 2 * beta_hat + 2 * M * phi_b + M / m
    return b, offset + conc * lip * math.sqrt(m * math.log(2.0 / delta) / 2.0)


def best_phi_bound(beta_hat, M, m, profile: MixingProfile, delta: float) -> BoundReport:
    """phi-mixing gap bound minimized over integer cutoffs b in [0, m]."""
    b, gaps = phi_gap_curve(beta_hat, M, m, profile, delta)
    best = int(b[np.argmin(gaps)])
    return phi_bound_general(PhiBoundInputs(beta_hat, M, m, profile, best, delta=delta))


def optimal_cutoff(beta_hat, M, phi0, r) -> tuple[float, float]:
    """Real cutoff b* solving ``beta_hat b = r M phi0 b^-r`` and ``phi(b*)``."""
    ratio = beta_hat / (r * phi0 * M)
    return ratio ** (-1.0 / (r + 1.0)), phi0 * ratio ** (r / (r + 1.0))


def phi_bound_algebraic(beta_hat, M, m, phi0, r, epsilon=None, delta=None) -> BoundReport:
    """phi-mixing bound for ``phi(k) = phi0 k^-r`` at the optimal cutoff.

    The failure probability is
    ``2 exp(-2 eps^2 (1 + 2 phi0 r/(r-1))^-2 / (m (2 beta_hat + (r+1) 2 M phi(b*) + M/m)^2))``
    for a gap of ``eps + beta_hat + (r+1) 6 M phi(b*)``. The report also
    carries the general bound at the two integer neighbours of b*.
    """
    _check_common(beta_hat, M, m)
    if r <= 1:
        raise UnsupportedRegimeError(f"the algebraic phi-mixing bound needs r > 1 (got r={r})")
    if not phi0 > 0:
        raise BoundError("phi0 must be positive")
    if not beta_hat > 0:
        raise BoundError("beta_hat must be positive for an optimal cutoff")
    if (epsilon is None) == (delta is None):
        raise BoundError("give exactly one of epsilon or delta")
    if delta is not None:
        _check_delta(delta)
    b_star, phi_b = optimal_cutoff(beta_hat, M, phi0, r)
    conc = algebraic_sum_constant(phi0, r)
    offset = beta_hat + (r + 1) * 6 * M * phi_b
    lip = 2 * beta_hat + (r + 1) * 2 * M * phi_b + M / m
    slack = {"risk_shift": offset, "lipschitz": lip, "concentration": conc, "phi_b": phi_b}
    if delta is None:
        raw = 2.0 * math.exp(-2.0 * epsilon ** 2 / (conc ** 2 * m * lip ** 2))
        value, vacuous = _probability(raw)
        mode = "delta"
        slack.update(epsilon=epsilon, gap_threshold=epsilon + offset)
    else:
        eps = conc * lip * math.sqrt(m * math.log(2.0 / delta) / 2.0)
        value, vacuous, mode = eps + offset, False, "epsilon"
        slack.update(epsilon=eps, delta=delta)

    profile = MixingProfile.algebraic(phi0, r)
    neighbours = {}
    for b in sorted({int(math.floor(b_star)), int(math.ceil(b_star))}):
        if 0 <= b <= m:
            rep = phi_bound_general(PhiBoundInputs(beta_hat, M, m, profile, b, epsilon, delta))
            neighbours[str(b)] = rep.bound_value
    params = {"b_star": b_star, "integer_neighbours": neighbours}
    if neighbours:
        params["b"] = int(min(neighbours, key=neighbours.get))
    return BoundReport("phi-algebraic", mode, value, vacuous, slack, params,
                       {"phi0_prime": conc, "r": r, "phi0": phi0})


CERTIFIED_KINDS = ("SVM", "SVR", "KRR", "EntropyMixture")


def corollary_constants(kind, lam, m, kappa=1.0, B=1.0, M_internal=None):
    """``(K, M)`` with ``K = m * beta_hat`` for each certified learner."""
    if kind not in CERTIFIED_KINDS:
        raise BoundError(f"unknown learner kind {kind!r}")
    if not lam > 0:
        raise BoundError("lambda must be positive")
    k2 = kappa * kappa
    if kind == "SVM":
        return k2 / lam, 1.0
    if kind == "SVR":
        return k2 / lam, kappa * math.sqrt(B / lam) + B
    if kind == "KRR":
        return 4 * k2 * B * B / lam, k2 * B * B / lam + B * B
    M = float(B if M_internal is None else M_internal)
    return M * M / lam, M


def corollary_bound(kind, lam, m, phi0, r, delta, kappa=1.0, B=1.0,
                    M_internal=None) -> BoundReport:
    """Closed-form high-probability gap for SVM, SVR, KRR or the entropy mixture.

    ``K/m + K^u 3 M'/m^u + phi0' (M + K + K^u M' / m^(u-1)) sqrt(2 log(2/delta) / m)``
    where ``K = m beta_hat``, ``u = r/(r+1)``,
    ``M' = 2 (r+1) phi0 M / (r phi0 M)^u`` and ``phi0' = 1 + 2 phi0 r/(r-1)``.
    """
    if r <= 1:
        raise UnsupportedRegimeError(f"the corollary needs r > 1 (got r={r})")
    if not 0 < delta < 1:
        raise BoundError("delta must lie in (0, 1)")
    if int(m) != m or m < 1:
        raise BoundError("m must be a positive integer")
    K, M = corollary_constants(kind, lam, m, kappa, B, M_internal)
    u = r / (r + 1.0)
    M_prime = 2 * (r + 1) * phi0 * M / (r * phi0 * M) ** u
    phi0_prime = algebraic_sum_constant(phi0, r)
    root = math.sqrt(2 * math.log(2 / delta) / m)
    stability = K / m
    mixing = K ** u * 3 * M_prime / m ** u
    deviation = phi0_prime * (M + K + K ** u * M_prime / m ** (u - 1)) * root
    return BoundReport(
        "corollary", "epsilon", stability + mixing + deviation, False,
        {"stability": stability, "mixing": mixing, "deviation": deviation},
        {"kind": kind, "beta_hat": K / m, "M": M},
        {"u": u, "M_prime": M_prime, "phi0_prime": phi0_prime, "r": r, "phi0": phi0},
    )


# --------------------------------------------------------------------------
# beta-mixing


@dataclass(frozen=True)
class BetaBoundInputs:
    """Inputs for the beta-mixing bound; ``(a + b) * mu == m`` exactly.

    ``b = 0`` is admitted only for the zero profile, which is the
    independent case (``a = 1, mu = m`` recovers the i.i.d. bound).
    """

    beta_hat: float
    M: float
    m: int
    profile: MixingProfile
    a: int
    b: int
    mu: int
    epsilon: float | None = None
    delta: float | None = None

    def __post_init__(self):
        _check_common(self.beta_hat, self.M, self.m)
        for name in ("a", "b", "mu"):
            v = getattr(self, name)
            if int(v) != v:
                raise BoundError(f"{name} must be an integer")
        if self.a < 1 or self.mu < 1:
            raise BoundError("a and mu must be positive")
        if self.b < 0 or (self.b == 0 and self.profile.kind != "zero"):
            raise BoundError("b must be positive (b = 0 only for the zero profile)")
        if (self.a + self.b) * self.mu != self.m:
            raise BoundError(f"(a + b) * mu = {(self.a + self.b) * self.mu} != m = {self.m}")
        if self.profile.coefficient_type != "beta" and self.profile.kind != "zero":
            raise BoundError("beta bounds need a beta-type mixing profile")
        if (self.epsilon is None) == (self.delta is None):
            raise BoundError("give exactly one of epsilon or delta")
        if self.delta is not None:
            _check_delta(self.delta)


def beta_bound(inputs: BetaBoundInputs) -> BoundReport:
    """beta-mixing bound.

    delta mode: ``exp(-2 eps'^2 m / (2 a beta_hat m + (a+b) M)^2) + (mu-1) beta(b)``
    with ``eps' = eps - mu b M/m - 2 mu b beta_hat - a beta_hat``.

    epsilon mode: ``sqrt(log(1/delta')/(2m)) (2 a beta_hat m + M m/mu)
    + mu b (M/m + 2 beta_hat) + a beta_hat`` with
    ``delta' = delta - (mu-1) beta(b)``.
    """
    p = inputs
    beta_b = p.profile(p.b) if p.b > 0 else 0.0
    penalty = (p.mu - 1) * beta_b
    offset = p.mu * p.b * p.M / p.m + 2 * p.mu * p.b * p.beta_hat + p.a * p.beta_hat
    scale = 2 * p.a * p.beta_hat * p.m + (p.a + p.b) * p.M
    slack = {"block_penalty": penalty, "offset": offset, "lipschitz_scale": scale,
             "beta_b": beta_b}
    params = {"a": int(p.a), "b": int(p.b), "mu": int(p.mu)}
    if p.delta is None:
        eps_prime = p.epsilon - offset
        if eps_prime < 0:
            raise InfeasibleError(f"epsilon' = {eps_prime:.6g} < 0; epsilon must exceed {offset:.6g}")
        raw = math.exp(-2 * eps_prime ** 2 * p.m / scale ** 2) + penalty
        value, vacuous = _probability(raw)
        slack.update(epsilon=p.epsilon, epsilon_prime=eps_prime)
        return BoundReport("beta", "delta", value, vacuous, slack, params, {})
    delta_prime = p.delta - penalty
    if delta_prime <= 0:
        raise InfeasibleError(f"delta' = {delta_prime:.6g} <= 0; delta must exceed {penalty:.6g}")
    deviation = math.sqrt(math.log(1 / delta_prime) / (2 * p.m)) * (
        2 * p.a * p.beta_hat * p.m + p.M * p.m / p.mu)
    slack.update(delta=p.delta, delta_prime=delta_prime, deviation=deviation)
    return BoundReport("beta", "epsilon", deviation + offset, False, slack, params, {})


def iid_stability_bound(beta_hat, M, m, epsilon) -> float:
    """``exp(-2 (eps - beta_hat)^2 m / (2 beta_hat m + M)^2)``: the
    independent case of :func:`beta_bound` with a = 1, b = 0, mu = m."""
    return math.exp(-2 * (epsilon - beta_hat) ** 2 * m / (2 * beta_hat * m + M) ** 2)


def block_shape(mu, b, m, beta_hat, r):
    """Objective ``mu/b^r + m^1.5 beta_hat/mu + m^0.5/mu + mu b (1/m + beta_hat)``."""
    return mu / b ** r + m ** 1.5 * beta_hat / mu + m ** 0.5 / mu + mu * b * (1 / m + beta_hat)


def closed_form_blocks(beta_hat, m, r) -> tuple[float, float]:
    """Stationary point ``(b, mu)`` of :func:`block_shape`."""
    gamma = 1.0 / m + beta_hat
    c_r = r ** (1.0 / (r + 1.0))
    b = c_r * gamma ** (-1.0 / (r + 1.0))
    mu = m ** 0.75 * gamma ** (1.0 / (2.0 * (r + 1.0))) / math.sqrt(c_r * (1.0 + 1.0 / r))
    return b, mu


@dataclass(frozen=True)
class BlockChoice:
    a: int
    b: int
    mu: int
    b_real: float
    mu_real: float
    shape_value: float
    constants: dict


def _divisors(m: int) -> list[int]:
    small = [d for d in range(1, int(math.isqrt(m)) + 1) if m % d == 0]
    return sorted(set(small + [m // d for d in small]))


def optimize_beta_blocks(beta_hat, m, r) -> BlockChoice:
    """Integer (a, b, mu) near the closed-form optimum with ``(a + b) mu = m``.

    Candidate mu are the divisors of m bracketing the real optimum,
    candidate b the floor and ceiling of the real b; among feasible pairs
    (a >= 1) the one with the smallest :func:`block_shape` wins.
    """
    if r <= 1:
        raise UnsupportedRegimeError(f"block optimization needs r > 1 (got r={r})")
    if not beta_hat > 0:
        raise BoundError("beta_hat must be positive")
    if int(m) != m or m < 2:
        raise BoundError("m must be an integer >= 2")
    m = int(m)
    b_real, mu_real = closed_form_blocks(beta_hat, m, r)
    divs = _divisors(m)
    below = [d for d in divs if d <= mu_real]
    above = [d for d in divs if d >= mu_real]
    mus = {below[-1] if below else divs[0], above[0] if above else divs[-1]}
    bs = {max(1, math.floor(b_real)), max(1, math.ceil(b_real))}
    best = None
    for mu in sorted(mus):
        for b in sorted(bs):
            a = m // mu - b
            if a < 1:
                continue
            s = block_shape(mu, b, m, beta_hat, r)
            if best is None or s < best[0]:
                best = (s, a, b, mu)
    if best is None:
        raise BoundError(f"no feasible integer (a, b, mu) near the optimum for m={m}")
    s, a, b, mu = best
    gamma = 1.0 / m + beta_hat
    return BlockChoice(a, b, mu, b_real, mu_real, s,
                       {"gamma": gamma, "C_r": r ** (1 / (r + 1)), "r": r})


def beta_bound_optimized(beta_hat, M, m, beta0, r, delta) -> BoundReport:
    """beta-mixing gap at the optimized blocks for ``beta(k) = beta0 k^-r``."""
    choice = optimize_beta_blocks(beta_hat, m, r)
    profile = MixingProfile.algebraic(beta0, r, coefficient_type="beta")
    report = beta_bound(BetaBoundInputs(beta_hat, M, m, profile, choice.a, choice.b,
                                        choice.mu, delta=delta))
    report.theorem = "beta-opt"
    report.chosen_parameters.update(b_real=choice.b_real, mu_real=choice.mu_real,
                                    shape_value=choice.shape_value)
    report.constants.update(choice.constants)
    return report


def best_beta_bound(beta_hat, M, m, profile: MixingProfile, delta) -> BoundReport:
    """beta-mixing gap minimized over every feasible integer (a, b, mu)."""
    best = None
    for mu in _divisors(int(m)):
        size = m // mu
        for b in range(1, size):
            inputs = BetaBoundInputs(beta_hat, M, m, profile, size - b, b, mu, delta=delta)
            try:
                rep = beta_bound(inputs)
            except InfeasibleError:
                continue
            if best is None or rep.bound_value < best.bound_value:
                best = rep
    if best is None:
        raise InfeasibleError(f"no block choice makes delta' positive for delta={delta}")
    return best


def rate_curve(alpha, r, m_list) -> dict:
    """Growth exponents of the beta-mixing bound when beta_hat = O(m^-alpha).

    term (a): ``3/4 - alpha (1 - 1/(2(r+1)))``, which also governs the
    confidence penalty; term (b): ``alpha/(2(r+1)) - 1/4``. The bound
    converges only if ``alpha > (3r+3)/(4r+2)``.
    """
    if not 0 < alpha <= 1:
        raise BoundError("alpha must lie in (0, 1]")
    exp_a = 0.75 - alpha * (1 - 1 / (2 * (r + 1)))
    exp_b = alpha / (2 * (r + 1)) - 0.25
    threshold = (3 * r + 3) / (4 * r + 2)
    ms = np.asarray(list(m_list), dtype=float)
    return {
        "alpha": alpha,
        "r": r,
        "exponent_a": exp_a,
        "exponent_b": exp_b,
        "dominant_exponent": max(exp_a, exp_b),
        "alpha_threshold": threshold,
        "converges": alpha > threshold,
        "m": ms.tolist(),
        "predicted_a": (ms ** exp_a).tolist(),
        "predicted_b": (ms ** exp_b).tolist(),
    }
