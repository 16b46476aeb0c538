"""Parameter prescriptions, leading-order error terms and numerical lemma checks.

All constants hidden in the asymptotic statements are set to 1 (configurable via
``const``) and logarithmic factors are dropped, so every prescription is a
directional guide rather than a guarantee.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DisconnectedNetworkError, OutOfRegimeError, ParameterError, PreconditionError
from .topology import deviation_table, sigma2 as _sigma2

CAVEAT = "constants set to 1 and logarithmic factors dropped; values are orders of magnitude, not guarantees"


@dataclass(frozen=True)
class TheoryParams:
    r: float = 0.5
    gamma: float = 1.0
    Q: float = 1.0
    kappa: float = math.sqrt(2.0)
    B: float = 1.0
    p: float = 2.0
    eta: float = 1.0

    def __post_init__(self):
        if not 0.5 <= self.r <= 1:
            raise ParameterError(f"source exponent r must lie in [1/2, 1], got {self.r}")
        if not 0 <= self.gamma <= 1:
            raise ParameterError(f"capacity exponent gamma must lie in [0, 1], got {self.gamma}")
        if not self.Q > 0:
            raise ParameterError(f"Q must be positive, got {self.Q}")
        if not self.kappa >= 1:
            raise ParameterError(f"kappa must be >= 1, got {self.kappa}")
        if not self.B > 0 or not self.p > 1:
            raise ParameterError(f"need B > 0 and p > 1, got B={self.B}, p={self.p}")
        if not self.eta > 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")


@dataclass
class Prescription:
    M_star: int
    t_star_iters: int
    m_min: int
    t_mix: int
    conditions: dict
    notes: dict = field(default_factory=dict)
    caveat: str = CAVEAT

    @property
    def satisfied(self):
        return all(self.conditions.values())

    @property
    def violated(self):
        return [k for k, ok in self.conditions.items() if not ok]

    def to_dict(self):
        d = asdict(self)
        d["satisfied"] = self.satisfied
        d["violated"] = self.violated
        return d


def _ceil(x):
    # absorb last-ulp noise so that e.g. 63.99999999999999 and 64.00000000000001 both give 64
    if math.isinf(x):
        raise OverflowError("prescription overflowed")
    return max(1, math.ceil(x - 1e-12 * max(1.0, abs(x))))


def _check_sigma2(sigma2):
    if not 0 <= sigma2 < 1:
        raise DisconnectedNetworkError(f"sigma2 = {sigma2} outside [0, 1): network is not mixing")


def _check_nm(n, m):
    if n < 1 or m < 1:
        raise ParameterError(f"need n, m >= 1, got n={n}, m={m}")


def _power_term(t_star, a, n, b, const=1.0):
    return const * t_star**a * float(n) ** b


def default_t_mix(n, m, t, sigma2):
    """ceil(log(n m t) / (1 - sigma2)): the mixing horizon used in the proofs, constant 1."""
    return _ceil(math.log(max(n * m * t, 1)) / (1.0 - sigma2))


def prescribe_basic(n, m, sigma2, const=1.0):
    """Basic-case prescription: M ~ sqrt(nm), t = sqrt(nm), m >~ n^3 / (1 - sigma2)^4."""
    _check_nm(n, m)
    _check_sigma2(sigma2)
    root = (n * m) ** 0.5
    M_star = _ceil(const * root)
    t_iters = _ceil(root)
    m_min = _ceil(_power_term(1.0 / (1.0 - sigma2), 4.0, n, 3.0, const))
    return Prescription(
        M_star=M_star,
        t_star_iters=t_iters,
        m_min=m_min,
        t_mix=default_t_mix(n, m, t_iters, sigma2),
        conditions={"m >= n^3/(1-sigma2)^4": m >= m_min},
    )


def refined_exponents(r, gamma):
    """Exponents (M, t, residual-branch t*, residual-branch n, population-branch t*, population-branch n)."""
    return {
        "M": (1 + gamma * (2 * r - 1)) / (2 * r + gamma),
        "t": 1 / (2 * r + gamma),
        "residual_tstar": (1 + gamma) * (2 * r + gamma) / (2 * (r + gamma - 1)),
        "residual_n": (r + 1) / (r + gamma - 1),
        "population_tstar": max(2.0, 2 * r + gamma),
        "population_n": 2 * r / gamma,
    }


def prescribe_refined(n, m, sigma2, params=None, const=1.0):
    """Refined prescription under source r and capacity gamma (needs r + gamma > 1).

    t* = 1/(1 - sigma2); each sample-size branch is reported as its own condition.
    The alternative three-branch threshold from the detailed proof, with
    (1 v eta t*) in place of t*, is returned under ``notes`` for comparison only.
    """
    params = params or TheoryParams()
    r, g = params.r, params.gamma
    if r + g <= 1:
        raise OutOfRegimeError(f"r + gamma = {r + g} <= 1: refined prescription requires r + gamma > 1")
    _check_nm(n, m)
    _check_sigma2(sigma2)
    ex = refined_exponents(r, g)
    t_star = 1.0 / (1.0 - sigma2)
    residual = _power_term(t_star, ex["residual_tstar"], n, ex["residual_n"], const)
    population = _power_term(t_star, ex["population_tstar"], n, ex["population_n"], const)
    m_res, m_pop = _ceil(residual), _ceil(population)
    nm = n * m
    M_star = _ceil(const * nm ** ex["M"])
    t_iters = _ceil(nm ** ex["t"])
    ets = max(1.0, params.eta * t_star)
    appendix = max(
        ets ** (2 * r + g) * n ** (2 * r / g),
        ets**2 * n,
        ets ** ex["residual_tstar"] * n ** ex["residual_n"],
    )
    return Prescription(
        M_star=M_star,
        t_star_iters=t_iters,
        m_min=max(m_res, m_pop),
        t_mix=default_t_mix(n, m, t_iters, sigma2),
        conditions={
            "m >= residual-network branch": m >= m_res,
            "m >= population-network branch": m >= m_pop,
        },
        notes={
            "t_star_ideal": t_star,
            "exponents": ex,
            "m_min_residual_branch": m_res,
            "m_min_population_branch": m_pop,
            "appendix_variant_m_min": _ceil(const * appendix),
            "appendix_variant_note": "three-branch threshold with (1 v eta t*); not used for 'satisfied'",
        },
    )


def leading_terms(n, m, M, sigma2, t, t_mix, params=None):
    """Leading-order excess-risk terms, split into network and statistical error."""
    params = params or TheoryParams()
    _check_sigma2(sigma2)
    if min(n, m, M, t, t_mix) <= 0:
        raise ParameterError("leading_terms needs positive n, m, M, t, t_mix")
    eta, r, g = params.eta, params.r, params.gamma
    et = eta * t
    network = {
        "network_population": eta**g / (m * (1 - sigma2) ** g),
        "network_residual": et**2 * (eta * t_mix) ** (1 + g) / m**2,
    }
    statistical = {
        "sample_variance": (et / M + 1) * et**g / (n * m),
        "random_features": 1.0 / (M * et ** ((1 - g) * (2 * r - 1))),
        "bias": (1.0 / et) ** (2 * r),
    }
    out = {**network, **statistical}
    out["network_error"] = sum(network.values())
    out["statistical_error"] = sum(statistical.values())
    out["total"] = out["network_error"] + out["statistical_error"]
    return out


def effective_dimension(C_hat, lam):
    """trace((C + lam I)^{-1} C) = sum_j mu_j / (mu_j + lam)."""
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    C_hat = np.asarray(C_hat, dtype=np.float64)
    mu = np.clip(np.linalg.eigvalsh(0.5 * (C_hat + C_hat.T)), 0.0, None)
    return float(np.sum(mu / (mu + lam)))


@dataclass
class LemmaReport:
    name: str
    holds: bool
    checks: int
    worst_slack: float
    worst_at: tuple
    violations: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["worst_at"] = list(self.worst_at)
        d["violations"] = [list(v) for v in self.violations[:20]]
        d["n_violations"] = len(self.violations)
        return d


def _psd_power(L, a):
    mu, U = np.linalg.eigh(0.5 * (L + L.T))
    if mu.min() < -1e-10 * max(1.0, abs(mu).max()):
        raise PreconditionError("L must be positive semidefinite")
    return (U * np.clip(mu, 0.0, None) ** a) @ U.T, max(mu.max(), 0.0)


def verify_contraction(L, eta, t_max, a, tol=1e-12):
    """Check ||(I - eta L)^s L^a|| <= (eta s)^{-a} for s = 1..t_max (s = t - k).

    The left side is formed by explicit matrix products and measured with the
    spectral norm.
    """
    L = np.asarray(L, dtype=np.float64)
    if a <= 0:
        raise ParameterError(f"a must be positive, got {a}")
    La, top = _psd_power(L, a)
    if eta * top > 1 + 1e-12:
        raise PreconditionError(f"eta * ||L|| = {eta * top:.6g} > 1")
    step = np.eye(L.shape[0]) - eta * L
    B = La
    worst, worst_at, bad = math.inf, (0,), []
    for s in range(1, int(t_max) + 1):
        B = step @ B
        lhs = float(np.linalg.norm(B, 2))
        bound = (eta * s) ** -a
        slack = bound - lhs
        if slack < worst:
            worst, worst_at = slack, (s,)
        if lhs > bound * (1 + tol) + tol:
            bad.append((s, lhs, bound))
    return LemmaReport("contraction", not bad, int(t_max), worst, worst_at, bad)


def verify_spectral_bound(P, s_max, tol=1e-12):
    """Check sum_w |(P^s)_vw - 1/n| <= 2 min(sqrt(n) sigma2^s, 1) for all v and s <= s_max."""
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    s2 = _sigma2(P)
    dev = deviation_table(P, int(s_max))
    s = np.arange(1, int(s_max) + 1)[:, None]
    bound = 2 * np.minimum(math.sqrt(n) * s2**s, 1.0)
    slack = bound - dev
    k, v = np.unravel_index(np.argmin(slack), slack.shape)
    bad = [(int(i + 1), int(j), float(dev[i, j]), float(bound[i, 0]))
           for i, j in zip(*np.nonzero(dev > bound + tol))]
    return LemmaReport("spectral_bound", not bad, dev.size, float(slack[k, v]), (int(k + 1), int(v)), bad)


def random_psd(size, rng, top=1.0):
    """Random symmetric PSD matrix with spectral norm exactly ``top``."""
    Q, _ = np.linalg.qr(rng.standard_normal((size, size)))
    mu = rng.uniform(0.0, 1.0, size)
    mu *= top / mu.max()
    return (Q * mu) @ Q.T


def random_doubly_stochastic(n, rng, iters=2000):
    """Random symmetric doubly stochastic matrix via symmetric Sinkhorn scaling."""
    A = rng.uniform(0.0, 1.0, (n, n))
    A = 0.5 * (A + A.T)
    x = np.ones(n)
    for _ in range(iters):
        x = np.sqrt(x / (A @ x))
    P = x[:, None] * A * x[None, :]
    P = 0.5 * (P + P.T)
    # final diagonal correction keeps rows and columns summing to 1 exactly
    P[np.diag_indices(n)] += 1.0 - P.sum(axis=1)
    return P
