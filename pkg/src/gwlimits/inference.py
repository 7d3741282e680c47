"""Confidence intervals, equality / neighbourhood tests and bootstrap for the Gaussian W2.

Every procedure is deterministic given its data, configuration and generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import DegenerateSample, InvalidInput, NearNullDegenerate
from .gw import (
    GaussianMeasure,
    as_samples,
    batch_moments,
    empirical_gaussian,
    gw2,
    gw2_batch,
)
from .limitlaw import (
    NULL_DRAWS_DEFAULT,
    ONE_SAMPLE,
    TWO_SAMPLE,
    LimitLawSample,
    one_sample_variance,
    quantile,
    sample_limit_null,
    two_sample_variance,
)
from .rng import make_rng
from .symmat import SPD_RTOL

VARIANCE_FLOOR = 1e-10
REJECT = "reject"
RETAIN = "retain"
SKIPPED = "skipped"

NEIGHBORHOOD_CONVENTION = (
    "H: GW > delta vs K: GW <= delta; T = sqrt(n)(GW_hat - delta)/upsilon_hat; "
    "reject H (certify closeness) when T < u_alpha, the alpha-quantile of N(0,1)"
)


@dataclass
class Interval:
    lower: float
    upper: float
    estimate: float
    std_error: float
    alpha: float
    rate: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def as_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "alpha": self.alpha,
            "rate": self.rate,
        }


@dataclass
class TestReport:
    statistic: float
    threshold: float
    p_value: float
    decision: str
    alpha: float
    method: str
    nuisance: dict = field(default_factory=dict)
    convention: str = ""

    __test__ = False  # keep pytest from collecting this class

    @property
    def rejected(self) -> bool:
        return self.decision == REJECT

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "threshold": self.threshold,
            "p_value": self.p_value,
            "decision": self.decision,
            "alpha": self.alpha,
            "method": self.method,
            "nuisance": self.nuisance,
            "convention": self.convention,
        }


@dataclass
class BootstrapDistribution:
    replicates: np.ndarray
    B: int
    m: int
    scheme: str
    skipped: int = 0
    estimate: float = float("nan")

    def as_dict(self) -> dict:
        r = self.replicates
        return {
            "scheme": self.scheme,
            "B": self.B,
            "m": self.m,
            "skipped": self.skipped,
            "estimate": self.estimate,
            "mean": float(r.mean()),
            "std": float(r.std(ddof=1)) if r.size > 1 else 0.0,
            "quantiles": {str(p): float(np.quantile(r, p)) for p in (0.025, 0.05, 0.5, 0.95, 0.975)},
        }


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise InvalidInput(f"alpha must lie in (0, 1], got {alpha}")


def _z(alpha: float) -> float:
    return 0.0 if alpha >= 1.0 else float(norm.ppf(1.0 - alpha / 2.0))


def _interval(est, var, rate, alpha) -> Interval:
    if var < VARIANCE_FLOOR:
        raise NearNullDegenerate(
            f"plug-in variance {var:.3g} is below {VARIANCE_FLOOR:g}; "
            "the distributions look equal, use test_equality / the P = Q limit law instead"
        )
    se = math.sqrt(var) / rate
    half = _z(alpha) * se
    return Interval(max(est - half, 0.0), max(est + half, 0.0), est, se, alpha, rate)


def ci_one_sample(x, Q: GaussianMeasure, alpha: float = 0.05) -> Interval:
    """Wald interval GW_hat +- z_{1-alpha/2} upsilon_hat / sqrt(n), clipped at 0."""
    _check_alpha(alpha)
    x = as_samples(x)
    P_hat = empirical_gaussian(x)
    est = gw2(P_hat, Q)
    var = one_sample_variance(P_hat, Q) if est >= 1e-12 else 0.0
    return _interval(est, var, math.sqrt(x.shape[0]), alpha)


def ci_two_sample(x, y, alpha: float = 0.05) -> Interval:
    """Wald interval with rate sqrt(nm/(n+m)) and a = n/(n+m)."""
    _check_alpha(alpha)
    x, y = as_samples(x), as_samples(y)
    n, m = x.shape[0], y.shape[0]
    P_hat, Q_hat = empirical_gaussian(x), empirical_gaussian(y)
    est = gw2(P_hat, Q_hat)
    a = n / (n + m)
    var = two_sample_variance(P_hat, Q_hat, a) if est >= 1e-12 else 0.0
    return _interval(est, var, math.sqrt(n * m / (n + m)), alpha)


def _decide(statistic: float, law: LimitLawSample, alpha: float):
    threshold = quantile(law, 1.0 - alpha)
    decision = REJECT if statistic >= threshold and statistic > 0 else RETAIN
    return threshold, law.exceedance(statistic), decision


def test_equality(
    x,
    ref: GaussianMeasure | None = None,
    y=None,
    alpha: float = 0.05,
    null_draws: int = NULL_DRAWS_DEFAULT,
    rng: np.random.Generator | None = None,
    null_law: LimitLawSample | None = None,
) -> TestReport:
    """Test H0: P = Q with the second-order (P = Q) limit law.

    One-sample (``ref`` given): statistic n GW_hat against Z1 sampled at the
    fitted Gaussian.  Two-sample (``y`` given): n GW_hat_nn against Z2 when
    n = m, otherwise (nm/(n+m)) GW_hat_nm against the a-weighted law; the
    null is sampled at the Gaussian fitted to the pooled sample.  Reject iff
    the statistic reaches the (1 - alpha) null quantile.
    """
    _check_alpha(alpha)
    if (ref is None) == (y is None):
        raise InvalidInput("pass exactly one of ref (one-sample) or y (two-sample)")
    rng = make_rng() if rng is None else rng
    x = as_samples(x)
    n = x.shape[0]
    P_hat = empirical_gaussian(x)
    if ref is not None:
        statistic = n * gw2(P_hat, ref)
        if null_law is None:
            null_law = sample_limit_null(P_hat, ONE_SAMPLE, null_draws, rng)
        method = "equality-one-sample"
        nuisance = {"n": n, "null": "Z1 at fitted Gaussian", "null_draws": int(null_law.draws.size)}
    else:
        y = as_samples(y)
        m = y.shape[0]
        Q_hat = empirical_gaussian(y)
        est = gw2(P_hat, Q_hat)
        pooled = empirical_gaussian(np.vstack([x - P_hat.mean, y - Q_hat.mean]))
        if n == m:
            statistic = n * est
            a = None
        else:
            statistic = n * m / (n + m) * est
            a = n / (n + m)
        if null_law is None:
            null_law = sample_limit_null(pooled, TWO_SAMPLE, null_draws, rng, a=a)
        method = "equality-two-sample"
        nuisance = {"n": n, "m": m, "a": a, "null": "Z2 at pooled fitted Gaussian", "null_draws": int(null_law.draws.size)}
    threshold, p_value, decision = _decide(statistic, null_law, alpha)
    return TestReport(
        statistic=float(statistic),
        threshold=threshold,
        p_value=p_value,
        decision=decision,
        alpha=alpha,
        method=method,
        nuisance=nuisance,
        convention="reject H0 when statistic >= (1-alpha) quantile of the null law",
    )


def test_neighborhood(x, Q: GaussianMeasure, delta: float, alpha: float = 0.05) -> TestReport:
    """Equivalence test of H: GW > delta against K: GW <= delta.

    Rejecting H certifies that P lies within delta of Q.
    """
    _check_alpha(alpha)
    if delta <= 0:
        raise InvalidInput("delta must be positive")
    x = as_samples(x)
    n = x.shape[0]
    P_hat = empirical_gaussian(x)
    est = gw2(P_hat, Q)
    var = one_sample_variance(P_hat, Q) if est >= 1e-12 else 0.0
    if var < VARIANCE_FLOOR:
        raise NearNullDegenerate(f"plug-in variance {var:.3g} below {VARIANCE_FLOOR:g}")
    se = math.sqrt(var)
    statistic = math.sqrt(n) * (est - delta) / se
    u_alpha = float(norm.ppf(alpha)) if alpha < 1 else math.inf
    return TestReport(
        statistic=statistic,
        threshold=u_alpha,
        p_value=float(norm.cdf(statistic)),
        decision=REJECT if statistic < u_alpha else RETAIN,
        alpha=alpha,
        method="neighborhood-one-sample",
        nuisance={"n": n, "delta": delta, "estimate": est, "upsilon_hat": se},
        convention=NEIGHBORHOOD_CONVENTION,
    )


def default_m(n: int) -> int:
    return int(math.ceil(n ** (2.0 / 3.0)))


def _bootstrap(x, Q, size, B, rng, scale, scheme, chunk=200):
    x = as_samples(x)
    n, d = x.shape
    if size < d + 1:
        raise InvalidInput(f"resample size {size} too small for dimension {d}")
    estimate = gw2(empirical_gaussian(x), Q)
    out = []
    skipped = 0
    done = 0
    while done < B:
        k = min(chunk, B - done)
        idx = rng.integers(0, n, size=(k, size))
        mu, S = batch_moments(x[idx])
        lam = np.linalg.eigvalsh(S)
        ok = (lam[:, -1] > 0) & (lam[:, 0] > SPD_RTOL * lam[:, -1])
        skipped += int(np.count_nonzero(~ok))
        if np.any(ok):
            out.append(scale * (gw2_batch(mu[ok], S[ok], Q) - estimate))
        done += k
    if skipped > 0.01 * B:
        raise DegenerateSample(f"{skipped} of {B} bootstrap resamples had a singular covariance")
    reps = np.concatenate(out) if out else np.empty(0)
    return BootstrapDistribution(reps, B, size, scheme, skipped, estimate)


def bootstrap_n_of_n(x, Q: GaussianMeasure, B: int = 2000, rng: np.random.Generator | None = None) -> BootstrapDistribution:
    """Replicates sqrt(n) (GW*_n - GW_hat_n); valid when P != Q."""
    rng = make_rng() if rng is None else rng
    n = as_samples(x).shape[0]
    return _bootstrap(x, Q, n, B, rng, math.sqrt(n), "n-of-n")


def bootstrap_m_of_n(
    x, Q: GaussianMeasure, m: int | None = None, B: int = 2000, rng: np.random.Generator | None = None
) -> BootstrapDistribution:
    """Replicates m (GW*_m - GW_hat_n) with m = o(n); approximates Z1 when P = Q."""
    rng = make_rng() if rng is None else rng
    n = as_samples(x).shape[0]
    m = default_m(n) if m is None else int(m)
    if m >= n:
        raise InvalidInput(f"m-of-n bootstrap needs m < n, got m={m}, n={n}")
    if m < 1:
        raise InvalidInput("m must be positive")
    return _bootstrap(x, Q, m, B, rng, float(m), "m-of-n")


@dataclass
class Site:
    samples: np.ndarray
    ref_mean: np.ndarray
    b_factor: float
    name: str = ""


def protein_batch_test(
    sites,
    alpha: float = 0.05,
    null_draws: int = NULL_DRAWS_DEFAULT,
    rng: np.random.Generator | None = None,
    null_law: LimitLawSample | None = None,
) -> list[TestReport]:
    """Per-site test of H0: positions ~ N(ref_mean, b_factor I_3).

    The statistic (n / sigma^2) GW_hat is compared with the (1 - alpha)
    quantile of the one-sample null law at N(0, I_3); by homogeneity that
    law serves every site.  No multiplicity correction is applied.
    """
    _check_alpha(alpha)
    rng = make_rng() if rng is None else rng
    if null_law is None:
        null_law = sample_limit_null(GaussianMeasure.standard(3), ONE_SAMPLE, null_draws, rng)
    threshold = quantile(null_law, 1.0 - alpha)
    reports = []
    for k, site in enumerate(sites):
        if not isinstance(site, Site):
            site = Site(*site)
        name = site.name or str(k)
        x = as_samples(site.samples)
        n, d = x.shape
        if d != 3:
            raise InvalidInput(f"site {name}: expected 3-d positions, got d={d}")
        if site.b_factor <= 0:
            raise InvalidInput(f"site {name}: B-factor must be positive")
        nuisance = {"site": name, "n": n, "b_factor": float(site.b_factor)}
        try:
            if n < 4:
                raise DegenerateSample("fewer than 4 observations")
            ref = GaussianMeasure(site.ref_mean, site.b_factor * np.eye(3))
            statistic = n / site.b_factor * gw2(empirical_gaussian(x), ref)
        except DegenerateSample as exc:
            nuisance["reason"] = str(exc)
            reports.append(TestReport(float("nan"), threshold, float("nan"), SKIPPED, alpha, "protein-site", nuisance))
            continue
        reports.append(
            TestReport(
                statistic=float(statistic),
                threshold=threshold,
                p_value=null_law.exceedance(statistic),
                decision=REJECT if statistic >= threshold else RETAIN,
                alpha=alpha,
                method="protein-site",
                nuisance=nuisance,
                convention="reject when (n / b_factor) GW_hat >= q_{1-alpha} of Z1 at N(0, I_3)",
            )
        )
    return reports
