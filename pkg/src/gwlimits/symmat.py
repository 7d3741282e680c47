"""Dense symmetric / SPD matrix kernel.

Matrices are plain ``numpy`` arrays.  ``as_symmetric`` and ``as_spd`` are the
validating constructors: the first enforces exact symmetry, the second also
rejects matrices whose smallest eigenvalue is not above ``SPD_RTOL`` times
the largest.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvalidInput, NotSpd

SPD_RTOL = 1e-10
# Eigenvalue-equality predicate for the "lambda_i == lambda_j" branches.
EIG_CLUSTER_RTOL = 1e-8
# Eigenvalues closer than this (relative) share one canonicalised basis.
_TIE_RTOL = 1e-12


class EigenDecomposition(NamedTuple):
    """Eigenvalues in descending order, eigenvectors as matching columns."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def projector(self, i: int) -> np.ndarray:
        p = self.vectors[:, i]
        return np.outer(p, p)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T

    def clusters(self, rtol: float = EIG_CLUSTER_RTOL) -> np.ndarray:
        """Boolean matrix ``same[i, j]``: eigenvalues i and j are treated as equal."""
        lam = self.values
        scale = max(np.abs(lam).max(), np.finfo(float).tiny)
        return np.abs(lam[:, None] - lam[None, :]) <= rtol * scale


def as_symmetric(A) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InvalidInput(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (A + A.T)


def as_spd(A) -> np.ndarray:
    A = as_symmetric(A)
    lam = np.linalg.eigvalsh(A)
    if lam[-1] <= 0 or lam[0] <= SPD_RTOL * lam[-1]:
        raise NotSpd(
            f"matrix is not positive definite (eigenvalues in [{lam[0]:.3g}, {lam[-1]:.3g}])"
        )
    return A


def min_eigenvalue(A) -> float:
    return float(np.linalg.eigvalsh(as_symmetric(A))[0])


def _canonical_basis(V: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(V), independent of V's rotation."""
    d, k = V.shape
    proj = V @ V.T
    chosen: list[np.ndarray] = []
    for j in range(d):
        v = proj[:, j].copy()
        for _ in range(2):
            for u in chosen:
                v -= (u @ v) * u
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            chosen.append(v / nrm)
        if len(chosen) == k:
            break
    return np.column_stack(chosen)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size and col[idx[0]] < 0:
            V[:, j] = -col
    return V


def symmetric_eig(A) -> EigenDecomposition:
    """Eigendecomposition with descending eigenvalues and a fixed basis.

    Within a group of (numerically) repeated eigenvalues the basis is the
    Gram-Schmidt orthonormalisation of the projected unit vectors
    e_1, e_2, ..., so the result does not depend on the rotation LAPACK
    happens to return.  Each eigenvector's first nonzero entry is positive.
    """
    A = as_symmetric(A)
    lam, V = np.linalg.eigh(A)
    lam = lam[::-1].copy()
    V = V[:, ::-1].copy()
    d = lam.shape[0]
    scale = max(np.abs(lam).max(), np.finfo(float).tiny)
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and lam[start] - lam[stop] <= _TIE_RTOL * scale:
            stop += 1
        if stop - start > 1:
            V[:, start:stop] = _canonical_basis(V[:, start:stop])
        start = stop
    return EigenDecomposition(lam, _fix_signs(V))


def spectral_apply(eig: EigenDecomposition, values: np.ndarray) -> np.ndarray:
    """``sum_i values[i] p_i p_i^T``, symmetrised."""
    M = (eig.vectors * values) @ eig.vectors.T
    return 0.5 * (M + M.T)


def spd_sqrt(A) -> np.ndarray:
    A = as_spd(A)
    eig = symmetric_eig(A)
    return spectral_apply(eig, np.sqrt(eig.values))


def spd_inv_sqrt(A) -> np.ndarray:
    A = as_spd(A)
    eig = symmetric_eig(A)
    return spectral_apply(eig, 1.0 / np.sqrt(eig.values))


def trace_product(A, B) -> float:
    """tr(AB) without forming the product."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0] or A.shape[0] != B.shape[1]:
        raise InvalidInput(f"cannot form tr(AB) for shapes {A.shape} and {B.shape}")
    return float(np.einsum("ij,ji->", A, B))


def sample_wigner(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Symmetric Gaussian matrix: N(0, 2) diagonal, N(0, 1) independent upper triangle.

    This is the limit of sqrt(n) (S_n - I) for the sample covariance S_n of
    standard normal data.  With ``size`` a stack of shape (size, d, d) is returned.
    """
    if d < 1:
        raise InvalidInput("dimension must be >= 1")
    shape = (d, d) if size is None else (size, d, d)
    Z = rng.standard_normal(shape)
    upper = np.triu(Z, 1)
    H = upper + np.swapaxes(upper, -1, -2)
    diag = np.sqrt(2.0) * np.diagonal(Z, axis1=-2, axis2=-1)
    idx = np.arange(d)
    H[..., idx, idx] = diag
    return H


def random_spd(d: int, rng: np.random.Generator, cond: float = 10.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-uniform in [1, cond] and a Haar basis."""
    Q = random_orthogonal(d, rng)
    lam = np.exp(rng.uniform(0.0, np.log(cond), size=d))
    return spectral_apply(EigenDecomposition(lam, Q), lam)


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))
