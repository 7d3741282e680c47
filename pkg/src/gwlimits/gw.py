"""Closed-form 2-Wasserstein distance between Gaussians and its plug-in estimators."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateSample, InvalidInput, NotSpd
from .symmat import SPD_RTOL, as_spd, spd_sqrt, symmetric_eig

_NEG_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """N(mean, cov) with a validated SPD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = as_spd(self.cov)
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        if mean.ndim != 1 or mean.shape[0] != cov.shape[0]:
            raise InvalidInput(f"mean of length {mean.shape} does not match covariance {cov.shape}")
        if not np.all(np.isfinite(mean)):
            raise InvalidInput("mean has non-finite entries")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def cov_sqrt(self) -> np.ndarray:
        return spd_sqrt(self.cov)

    @cached_property
    def eig(self):
        return symmetric_eig(self.cov)

    @classmethod
    def standard(cls, d: int, scale: float = 1.0) -> "GaussianMeasure":
        return cls(np.zeros(d), scale * np.eye(d))

    def transformed(self, R: np.ndarray, shift=None) -> "GaussianMeasure":
        """Push-forward under x -> R x + shift."""
        shift = np.zeros(self.dim) if shift is None else np.asarray(shift, float)
        return GaussianMeasure(R @ self.mean + shift, R @ self.cov @ R.T)

    def __repr__(self):
        return f"GaussianMeasure(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


def as_samples(x) -> np.ndarray:
    """Validate an (n, d) observation matrix; a 1-d array is read as d = 1."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InvalidInput(f"expected an (n, d) sample matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("sample has non-finite entries")
    return x


def sample_gaussian(P: GaussianMeasure, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise InvalidInput("n must be >= 1")
    Z = rng.standard_normal((n, P.dim))
    return P.mean + Z @ P.cov_sqrt


def _check_dims(P: GaussianMeasure, Q: GaussianMeasure):
    if P.dim != Q.dim:
        raise InvalidInput(f"dimension mismatch: {P.dim} vs {Q.dim}")


def _root_trace(eigs: np.ndarray) -> np.ndarray:
    """Sum of square roots of eigenvalues of A^{1/2} B A^{1/2}, with round-off clamping."""
    scale = np.maximum(np.abs(eigs).max(axis=-1), np.finfo(float).tiny)
    if np.any(eigs.min(axis=-1) < -_NEG_RTOL * scale):
        raise NotSpd("A^{1/2} B A^{1/2} has a negative eigenvalue")
    return np.sqrt(np.clip(eigs, 0.0, None)).sum(axis=-1)


def gw2(P: GaussianMeasure, Q: GaussianMeasure) -> float:
    """Squared 2-Wasserstein distance between two Gaussian measures.

    ``|mu - nu|^2 + tr S + tr X - 2 tr (S^{1/2} X S^{1/2})^{1/2}``.  The
    inner root is taken through the symmetric matrix S^{1/2} X S^{1/2},
    never through the non-symmetric product S X.
    """
    _check_dims(P, Q)
    s = P.cov_sqrt
    C = s @ Q.cov @ s
    C = 0.5 * (C + C.T)
    root = _root_trace(np.linalg.eigvalsh(C))
    diff = P.mean - Q.mean
    val = diff @ diff + np.trace(P.cov) + np.trace(Q.cov) - 2.0 * root
    return float(max(val, 0.0))


def gw2_batch(means: np.ndarray, covs: np.ndarray, Q: GaussianMeasure) -> np.ndarray:
    """Vectorised ``gw2(N(means[r], covs[r]), Q)`` over a leading replicate axis.

    Uses the similar matrix X^{1/2} S X^{1/2}; the trace of its root is the
    same, and X^{1/2} is computed once.
    """
    x = Q.cov_sqrt
    C = x @ covs @ x
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    root = _root_trace(np.linalg.eigvalsh(C))
    diff = means - Q.mean
    tr_s = np.trace(covs, axis1=-2, axis2=-1)
    val = np.einsum("...i,...i->...", diff, diff) + tr_s + np.trace(Q.cov) - 2.0 * root
    return np.maximum(val, 0.0)


def gw2_batch_pair(mx, Sx, my, Sy) -> np.ndarray:
    """Vectorised two-sample version: both covariances vary per replicate."""
    lam, V = np.linalg.eigh(Sx)
    if np.any(lam <= 0):
        raise NotSpd("non positive-definite covariance in batch")
    s = (V * np.sqrt(lam)[..., None, :]) @ np.swapaxes(V, -1, -2)
    C = s @ Sy @ s
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    root = _root_trace(np.linalg.eigvalsh(C))
    diff = mx - my
    val = (
        np.einsum("...i,...i->...", diff, diff)
        + np.trace(Sx, axis1=-2, axis2=-1)
        + np.trace(Sy, axis1=-2, axis2=-1)
        - 2.0 * root
    )
    return np.maximum(val, 0.0)


def batch_moments(X: np.ndarray):
    """Sample means and unbiased covariances of a stack of samples (R, n, d)."""
    n = X.shape[-2]
    mu = X.mean(axis=-2)
    Xc = X - mu[..., None, :]
    S = np.einsum("...ki,...kj->...ij", Xc, Xc) / (n - 1)
    return mu, S


def empirical_gaussian(x) -> GaussianMeasure:
    """Gaussian fitted by sample mean and the 1/(n-1) sample covariance."""
    x = as_samples(x)
    n, d = x.shape
    if n < d + 1:
        raise DegenerateSample(f"need at least d + 1 = {d + 1} observations, got {n}")
    mu = x.mean(axis=0)
    xc = x - mu
    S = xc.T @ xc / (n - 1)
    S = 0.5 * (S + S.T)
    lam = np.linalg.eigvalsh(S)
    if lam[-1] <= 0 or lam[0] <= SPD_RTOL * lam[-1]:
        raise DegenerateSample("sample covariance is rank deficient")
    return GaussianMeasure(mu, S)


def gw_hat(x, Q: GaussianMeasure) -> float:
    """One-sample plug-in estimator: ``gw2(N(mu_hat, S_hat), Q)``."""
    return gw2(empirical_gaussian(x), Q)


def gw_hat2(x, y) -> float:
    """Two-sample plug-in estimator."""
    return gw2(empirical_gaussian(x), empirical_gaussian(y))


def w2_empirical_1d(x, y) -> float:
    """Squared W2 between two equal-size empirical measures on the line.

    Both inputs must already be sorted ascending; the optimal coupling then
    matches order statistics.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size == 0:
        raise InvalidInput(f"need two non-empty samples of equal length, got {x.size} and {y.size}")
    if np.any(np.diff(x) < 0) or np.any(np.diff(y) < 0):
        raise InvalidInput("inputs must be sorted ascending")
    return float(np.mean((x - y) ** 2))
