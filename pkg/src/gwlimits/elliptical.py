"""Elliptical extension hook: multivariate t samples and an entropic OT upper bound.

For any two laws with the given means and covariances, the Gaussian formula
is a lower bound on W2^2 (it is exact for Gaussians and, more generally,
within an elliptical family).  ``lower_bound_demo`` checks this against an
entropic transport cost between two point clouds.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp
from scipy.stats import multivariate_t

from .errors import InvalidInput
from .gw import GaussianMeasure, as_samples, gw2
from .symmat import as_spd


def sample_multivariate_t(mean, scale, dof: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. rows of the multivariate t law t_dof(mean, scale).

    The covariance is dof / (dof - 2) * scale for dof > 2.  At dof = 2 the
    law is accepted but its covariance is infinite.
    """
    if not dof >= 2:
        raise InvalidInput(f"degrees of freedom must be >= 2, got {dof}")
    if n < 1:
        raise InvalidInput("n must be >= 1")
    scale = as_spd(scale)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if mean.shape != (scale.shape[0],):
        raise InvalidInput("mean and scale dimensions differ")
    x = multivariate_t(loc=mean, shape=scale, df=dof).rvs(size=n, random_state=rng)
    return np.asarray(x, dtype=float).reshape(n, -1)


def sinkhorn_cost(x, y, eps: float = 0.05, max_iter: int = 5000, tol: float = 1e-4) -> dict:
    """Transport cost of the entropic plan between uniform clouds, squared Euclidean cost.

    Log-domain Sinkhorn iterations with ``eps`` relative to the mean cost.
    The returned ``cost`` is <C, pi_eps>, which is >= the unregularised W2^2
    between the two empirical measures.  Iteration stops once the column
    marginals are within ``tol`` in total variation (rows are exact after
    each f-update).
    """
    x, y = as_samples(x), as_samples(y)
    if x.shape[1] != y.shape[1]:
        raise InvalidInput("point clouds have different dimensions")
    C = cdist(x, y, "sqeuclidean")
    reg = eps * C.mean()
    n, m = C.shape
    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    f = np.zeros(n)
    g = np.zeros(m)
    K = -C / reg
    converged = False
    for it in range(max_iter):
        f = reg * (log_a - logsumexp(K + g[None, :] / reg, axis=1))
        if it % 10 == 9:
            col = np.exp(logsumexp(K + f[:, None] / reg + g[None, :] / reg, axis=0))
            if np.abs(col - 1.0 / m).sum() < tol:
                converged = True
                break
        g = reg * (log_b - logsumexp(K + f[:, None] / reg, axis=0))
    log_pi = K + f[:, None] / reg + g[None, :] / reg
    pi = np.exp(log_pi)
    return {
        "cost": float(np.sum(pi * C)),
        "iterations": it + 1,
        "converged": converged,
        "marginal_error": float(np.abs(pi.sum(axis=0) - 1.0 / m).sum() + np.abs(pi.sum(axis=1) - 1.0 / n).sum()),
        "reg": reg,
    }


def assignment_cost(x, y) -> float:
    """Exact W2^2 between two equal-size uniform clouds (optimal permutation)."""
    x, y = as_samples(x), as_samples(y)
    if x.shape != y.shape:
        raise InvalidInput("assignment cost needs clouds of equal shape")
    C = cdist(x, y, "sqeuclidean")
    r, c = linear_sum_assignment(C)
    return float(C[r, c].mean())


def moment_gaussian(x) -> GaussianMeasure:
    """Gaussian with the exact (1/n) moments of the empirical measure of x."""
    x = as_samples(x)
    mu = x.mean(axis=0)
    xc = x - mu
    return GaussianMeasure(mu, xc.T @ xc / x.shape[0])


def lower_bound_demo(
    dof: float = 5.0,
    n: int = 500,
    d: int = 2,
    rng: np.random.Generator | None = None,
    slack: float = 0.02,
) -> dict:
    """Compare gw2 of moment-matched Gaussians with an entropic cost between t-clouds."""
    from .rng import make_rng
    from .symmat import random_spd

    rng = make_rng() if rng is None else rng
    S1 = random_spd(d, rng, cond=4.0)
    S2 = random_spd(d, rng, cond=4.0)
    shift = rng.standard_normal(d)
    x = sample_multivariate_t(np.zeros(d), S1, dof, n, rng)
    y = sample_multivariate_t(shift, S2, dof, n, rng)
    bound = gw2(moment_gaussian(x), moment_gaussian(y))
    ot = sinkhorn_cost(x, y)
    exact = assignment_cost(x, y)
    return {
        "dof": dof,
        "n": n,
        "d": d,
        "gaussian_bound": bound,
        "entropic_cost": ot["cost"],
        "sinkhorn_converged": ot["converged"],
        "assignment_cost": exact,
        "passed": bool(bound <= ot["cost"] * (1.0 + slack)),
    }
