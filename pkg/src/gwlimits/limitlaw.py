"""Asymptotic variances, the delta-method variance oracle and P = Q limit-law samplers.

Scaling conventions
-------------------
one-sample, P != Q:  sqrt(n) (GW_n - GW)                 -> N(0, one_sample_variance)
two-sample, P != Q:  sqrt(nm/(n+m)) (GW_nm - GW)         -> N(0, two_sample_variance), a = n/(n+m)
one-sample, P = Q:   n GW_n                              -> Z1 = 1/2 D^2 Phi[(g, 0, G, 0)]
two-sample, P = Q:   n GW_nn                             -> Z2 = 1/2 D^2 Phi[(g, g', G, G')]
                     (nm/(n+m)) GW_nm                    -> 1/2 D^2 Phi[weighted by a]

Tangent draws follow the Gaussian CLT for sample moments: g ~ N(0, Sigma),
G = Sigma^{1/2} H Sigma^{1/2} with H from ``sample_wigner``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .frechet import GWDerivatives, PerturbationPair
from .gw import GaussianMeasure, gw2
from .symmat import EIG_CLUSTER_RTOL, sample_wigner, spd_inv_sqrt, symmetric_eig

ONE_SAMPLE = "one-sample"
TWO_SAMPLE = "two-sample"
MODES = (ONE_SAMPLE, TWO_SAMPLE)

NULL_DRAWS_DEFAULT = 100_000
ORACLE_DRAWS_DEFAULT = 1_000_000
_CHUNK = 100_000


def _check_mode(mode):
    if mode not in MODES:
        raise InvalidInput(f"mode must be one of {MODES}, got {mode!r}")


def _warn_if_null(P, Q):
    if gw2(P, Q) < 1e-12:
        warnings.warn("P == Q: the first-order limit is degenerate (variance 0)", stacklevel=3)


# ---------------------------------------------------------------------------
# closed forms


def one_sample_variance_terms(P: GaussianMeasure, Q: GaussianMeasure) -> dict:
    S, X = P.cov, Q.cov
    diff = Q.mean - P.mean
    xs = Q.cov_sqrt
    eig = symmetric_eig(xs @ S @ xs)
    kappa, R = eig.values, eig.vectors
    M = spd_inv_sqrt(X) @ S @ xs
    kappa_sum = np.einsum("l,il,ij,jl->", np.sqrt(kappa), R, M, R)
    return {
        "mean": 4.0 * diff @ S @ diff,
        "trace": 2.0 * np.trace(S @ S) + 2.0 * np.trace(S @ X),
        "kappa": -4.0 * kappa_sum,
    }


def one_sample_variance(P: GaussianMeasure, Q: GaussianMeasure) -> float:
    """Asymptotic variance of sqrt(n) (GW_n - GW) when Q is known.

    ``4 (nu-mu)^T S (nu-mu) + 2 tr S^2 + 2 tr S X
    - 4 sum_k kappa_k^{1/2} r_k^T X^{-1/2} S X^{1/2} r_k`` with (kappa_k, r_k)
    the eigenpairs of X^{1/2} S X^{1/2}.
    """
    _warn_if_null(P, Q)
    return float(max(sum(one_sample_variance_terms(P, Q).values()), 0.0))


def two_sample_variance_terms(P: GaussianMeasure, Q: GaussianMeasure, a: float) -> dict:
    """Every term of the two-sample variance, including the two variants below.

    ``trace`` carries the certified 2 tr(S X); ``trace_literal`` the 2a tr(S X)
    variant.  ``tied_correction`` is the repeated-eigenvalue sum (computed with
    the eigenvalue-cluster predicate); the delta-method oracle shows it is not
    part of the variance.
    """
    if not 0.0 < a < 1.0:
        raise InvalidInput(f"weight a must lie in (0, 1), got {a}")
    S, X = P.cov, Q.cov
    diff = Q.mean - P.mean
    ss = P.cov_sqrt
    eig = symmetric_eig(ss @ X @ ss)
    kappa, Qv = eig.values, eig.vectors
    M = (1.0 - a) * S + a * spd_inv_sqrt(S) @ X @ ss
    kappa_sum = np.einsum("l,il,ij,jl->", np.sqrt(kappa), Qv, M, Qv)

    eigS = P.eig
    same = eigS.clusters(EIG_CLUSTER_RTOL)
    np.fill_diagonal(same, False)
    # W[l, i] = q_l^T p_i ; T[i, j] = sum_l kappa_l^{1/2} (q_l^T p_i)(q_l^T p_j)
    W = Qv.T @ eigS.vectors
    T = np.einsum("l,li,lj->ij", np.sqrt(kappa), W, W)
    correction = np.sum(np.where(same, T * T, 0.0))

    tr_sx = np.trace(S @ X)
    return {
        "mean": 4.0 * diff @ ((1.0 - a) * S + a * X) @ diff,
        "trace": 2.0 * np.trace((1.0 - a) * S @ S + a * X @ X) + 2.0 * tr_sx,
        "trace_literal": 2.0 * np.trace((1.0 - a) * S @ S + a * X @ X) + 2.0 * a * tr_sx,
        "kappa": -4.0 * kappa_sum,
        "tied_correction": -2.0 * (1.0 - a) * correction,
    }


def two_sample_variance(P: GaussianMeasure, Q: GaussianMeasure, a: float, paper_literal: bool = False) -> float:
    """Asymptotic variance of sqrt(nm/(n+m)) (GW_nm - GW), a = lim n/(n+m).

    The default is the oracle-certified expression.  ``paper_literal=True``
    evaluates the variant with 2a tr(S X) and the repeated-eigenvalue
    correction, kept for comparison only.
    """
    _warn_if_null(P, Q)
    t = two_sample_variance_terms(P, Q, a)
    if paper_literal:
        return float(t["mean"] + t["trace_literal"] + t["kappa"] + t["tied_correction"])
    return float(max(t["mean"] + t["trace"] + t["kappa"], 0.0))


# ---------------------------------------------------------------------------
# tangent draws


def tangent_draws(P: GaussianMeasure, n: int, rng: np.random.Generator):
    """n independent copies of the limit (g, G) of sqrt(n)(mu_hat - mu, S_hat - S)."""
    d = P.dim
    g = rng.standard_normal((n, d)) @ P.cov_sqrt
    H = sample_wigner(d, rng, size=n)
    s = P.cov_sqrt
    return g, s @ H @ s


@dataclass
class VarianceReport:
    formula_value: float
    oracle_value: float
    oracle_stderr: float
    exact_value: float
    n_draws: int
    mode: str
    a: float | None = None
    components: dict = field(default_factory=dict)

    @property
    def z_score(self) -> float:
        if self.oracle_stderr == 0:
            return 0.0 if self.formula_value == self.oracle_value else math.inf
        return (self.formula_value - self.oracle_value) / self.oracle_stderr

    @property
    def discrepancy(self) -> bool:
        return abs(self.z_score) > 4.0

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "a": self.a,
            "formula_value": self.formula_value,
            "oracle_value": self.oracle_value,
            "oracle_stderr": self.oracle_stderr,
            "exact_value": self.exact_value,
            "n_draws": self.n_draws,
            "z_score": self.z_score,
            "discrepancy": self.discrepancy,
            "components": self.components,
        }


def _variance_with_stderr(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    centred = x - x.mean()
    sq = centred**2
    var = sq.sum() / (n - 1)
    se = math.sqrt(sq.var(ddof=1) / n)
    return float(var), float(se)


def _std_basis_directions(P: GaussianMeasure):
    """Tangent directions for each standard-normal coordinate of (g, G).

    g = S^{1/2} z_g and H has sqrt(2) z on the diagonal and z above it, so
    a linear form evaluated on these directions gives its coefficient
    vector in independent N(0, 1) coordinates.
    """
    d = P.dim
    s = P.cov_sqrt
    gs, Gs = [], []
    for i in range(d):
        gs.append(s[:, i].copy())
        Gs.append(np.zeros((d, d)))
    for i in range(d):
        for j in range(i, d):
            H = np.zeros((d, d))
            if i == j:
                H[i, i] = math.sqrt(2.0)
            else:
                H[i, j] = H[j, i] = 1.0
            gs.append(np.zeros(d))
            Gs.append(s @ H @ s)
    return np.array(gs), np.array(Gs)


def _exact_linear_variance(D: GWDerivatives, P, Q, mode, a) -> float:
    """Var of the linear form by a degree-3 cubature rule (exact for quadratics)."""
    gP, GP = _std_basis_directions(P)
    if mode == ONE_SAMPLE:
        coef = D.first(PerturbationPair(g=gP, G=GP))
        return float(np.sum(coef**2))
    gQ, GQ = _std_basis_directions(Q)
    c1 = D.first(PerturbationPair(g=gP, G=GP))
    c2 = D.first(PerturbationPair(gp=gQ, Gp=GQ))
    return float((1.0 - a) * np.sum(c1**2) + a * np.sum(c2**2))


def variance_oracle(
    P: GaussianMeasure,
    Q: GaussianMeasure,
    a: float | None = None,
    mode: str = ONE_SAMPLE,
    n_draws: int = ORACLE_DRAWS_DEFAULT,
    rng: np.random.Generator | None = None,
    formula_value: float | None = None,
) -> VarianceReport:
    """Monte Carlo variance of the linear limit D Phi[h] over Gaussian tangent draws.

    The derivative is the compositional ``GWDerivatives.first`` evaluated on
    every draw, so the result is independent of the closed-form variances it
    is used to certify.  ``components`` splits the variance into the mean
    directions (g, g') and the covariance directions (G, G').
    """
    _check_mode(mode)
    if n_draws < 10_000:
        raise InvalidInput("variance_oracle needs at least 1e4 draws")
    if mode == TWO_SAMPLE and (a is None or not 0.0 < a < 1.0):
        raise InvalidInput("two-sample mode needs a weight a in (0, 1)")
    if rng is None:
        from .rng import make_rng

        rng = make_rng()
    D = GWDerivatives(P, Q)
    u = 1.0 if mode == ONE_SAMPLE else math.sqrt(1.0 - a)
    v = 0.0 if mode == ONE_SAMPLE else math.sqrt(a)

    total, mean_part, cov_part = [], [], []
    done = 0
    while done < n_draws:
        k = min(_CHUNK, n_draws - done)
        g, G = tangent_draws(P, k, rng)
        if mode == ONE_SAMPLE:
            h_mean = PerturbationPair(g=g)
            h_cov = PerturbationPair(G=G)
        else:
            gp, Gp = tangent_draws(Q, k, rng)
            h_mean = PerturbationPair(g=u * g, gp=v * gp)
            h_cov = PerturbationPair(G=u * G, Gp=v * Gp)
        lm = D.first(h_mean)
        lc = D.first(h_cov)
        mean_part.append(lm)
        cov_part.append(lc)
        total.append(lm + lc)
        done += k
    L = np.concatenate(total)
    var, se = _variance_with_stderr(L)
    vm, sem = _variance_with_stderr(np.concatenate(mean_part))
    vc, sec = _variance_with_stderr(np.concatenate(cov_part))
    if formula_value is None:
        if mode == ONE_SAMPLE:
            formula_value = sum(one_sample_variance_terms(P, Q).values())
        else:
            t = two_sample_variance_terms(P, Q, a)
            formula_value = t["mean"] + t["trace"] + t["kappa"]
    return VarianceReport(
        formula_value=float(formula_value),
        oracle_value=var,
        oracle_stderr=se,
        exact_value=_exact_linear_variance(D, P, Q, mode, a),
        n_draws=n_draws,
        mode=mode,
        a=a,
        components={
            "mean_directions": {"value": vm, "stderr": sem},
            "covariance_directions": {"value": vc, "stderr": sec},
        },
    )


# ---------------------------------------------------------------------------
# P = Q second-order limit


@dataclass
class LimitLawSample:
    draws: np.ndarray
    mode: str
    a: float | None
    seed: int | None = None

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float).ravel()
        if self.draws.size < 1 or not np.all(np.isfinite(self.draws)):
            raise InvalidInput("limit-law sample must be non-empty and finite")
        self._sorted = np.sort(self.draws)

    @property
    def sorted(self) -> np.ndarray:
        return self._sorted

    def exceedance(self, statistic: float) -> float:
        """Monte Carlo estimate of P(Z >= statistic)."""
        n = self._sorted.size
        return float(n - np.searchsorted(self._sorted, statistic, side="left")) / n

    def scaled(self, factor: float) -> "LimitLawSample":
        return LimitLawSample(self.draws * factor, self.mode, self.a, self.seed)


def sample_limit_null(
    P: GaussianMeasure,
    mode: str = ONE_SAMPLE,
    n_draws: int = NULL_DRAWS_DEFAULT,
    rng: np.random.Generator | None = None,
    a: float | None = None,
    seed: int | None = None,
) -> LimitLawSample:
    """Draws of the P = Q limit law 1/2 D^2 Phi[h, h] at (mu, mu, S, S).

    ``one-sample``: h = (g, 0, G, 0), the law of n GW_n.
    ``two-sample`` with ``a=None``: h = (g, g', G, G'), the law of n GW_nn.
    ``two-sample`` with weight a: the law of (nm/(n+m)) GW_nm.
    """
    _check_mode(mode)
    if n_draws < 1000:
        raise InvalidInput("need at least 1e3 null draws")
    if rng is None:
        from .rng import make_rng

        rng = make_rng(seed)
    D = GWDerivatives(P, P)
    out = []
    done = 0
    while done < n_draws:
        k = min(_CHUNK, n_draws - done)
        g, G = tangent_draws(P, k, rng)
        if mode == ONE_SAMPLE:
            h = PerturbationPair(g=g, G=G)
        else:
            gp, Gp = tangent_draws(P, k, rng)
            h = PerturbationPair(g=g, gp=gp, G=G, Gp=Gp)
            if a is not None:
                h = h.weighted(a)
        out.append(0.5 * D.second(h))
        done += k
    draws = np.concatenate(out)
    # the quadratic form is positive semidefinite; clear round-off
    draws = np.where(draws < 0, np.maximum(draws, 0.0), draws)
    return LimitLawSample(draws, mode, a, seed)


def quantile(L: LimitLawSample | np.ndarray, p: float) -> float:
    """Lower order-statistic quantile: the ceil(p n)-th smallest draw."""
    if not 0.0 < p < 1.0:
        raise InvalidInput(f"p must lie in (0, 1), got {p}")
    x = L.sorted if isinstance(L, LimitLawSample) else np.sort(np.asarray(L, dtype=float).ravel())
    if x.size == 0:
        raise InvalidInput("empty sample")
    k = max(int(math.ceil(p * x.size - 1e-9)), 1)
    return float(x[k - 1])


def spherical_null_coefficients() -> dict:
    """The chi-square mixture sigma^2 (2 X + 6 X' + 3/2 X'') quoted for d = 3.

    X, X' ~ chi2_3 and X'' ~ chi2_6.  Kept for comparison with the simulated
    one-sample law at N(0, sigma^2 I_3).
    """
    return {"weights": [2.0, 6.0, 1.5], "dofs": [3, 3, 6]}


def sample_chi2_mixture(weights, dofs, n: int, rng: np.random.Generator) -> np.ndarray:
    return sum(w * rng.chisquare(k, size=n) for w, k in zip(weights, dofs))
