"""Spectral operator-function calculus and derivatives of the Gaussian W2 functional.

For a symmetric matrix A = sum_i lam_i p_i p_i^T and a scalar function phi,

    phi(A)        = sum_i phi(lam_i) P_i
    D phi_A[G]    = sum_{i,k} phi[lam_i, lam_k] P_i G P_k
    Q phi_A[G]    = sum_{i,j,k} phi[lam_i, lam_j, lam_k] P_i G P_j G P_k

with confluent divided differences phi[.,.] and phi[.,.,.].  Q is the
quadratic Taylor term, phi(A + G) = phi(A) + D phi_A[G] + Q phi_A[G] + O(|G|^3);
the second Frechet derivative is 2 Q.

All matrix-direction arguments may carry leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidInput
from .gw import GaussianMeasure
from .symmat import EigenDecomposition, as_symmetric, spd_sqrt, symmetric_eig

# Below this relative gap a divided difference switches to its confluent limit.
DD1_RTOL = 1e-6
DD2_RTOL = 1e-4


@dataclass(frozen=True)
class ScalarFunction:
    """A smooth scalar function with its first two derivatives.

    ``dd1`` / ``dd2`` optionally give closed-form divided differences that
    are exact and free of cancellation; otherwise generic formulas with a
    confluent switch are used.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    deriv1: Callable[[np.ndarray], np.ndarray]
    deriv2: Callable[[np.ndarray], np.ndarray]
    dd1: Optional[Callable] = None
    dd2: Optional[Callable] = None


def _sqrt_dd1(a, b):
    return 1.0 / (np.sqrt(a) + np.sqrt(b))


def _sqrt_dd2(a, b, c):
    ra, rb, rc = np.sqrt(a), np.sqrt(b), np.sqrt(c)
    return -1.0 / ((ra + rb) * (ra + rc) * (rb + rc))


IDENTITY = ScalarFunction(
    "identity",
    lambda x: x,
    lambda x: np.ones_like(x),
    lambda x: np.zeros_like(x),
    dd1=lambda a, b: np.ones(np.broadcast(a, b).shape),
    dd2=lambda a, b, c: np.zeros(np.broadcast(a, b, c).shape),
)
SQUARE = ScalarFunction(
    "square",
    lambda x: x**2,
    lambda x: 2 * x,
    lambda x: 2 * np.ones_like(x),
    dd1=lambda a, b: a + b,
    dd2=lambda a, b, c: np.ones(np.broadcast(a, b, c).shape),
)
CUBE = ScalarFunction(
    "cube",
    lambda x: x**3,
    lambda x: 3 * x**2,
    lambda x: 6 * x,
    dd1=lambda a, b: a * a + a * b + b * b,
    dd2=lambda a, b, c: a + b + c,
)
SQRT = ScalarFunction(
    "sqrt",
    np.sqrt,
    lambda x: 0.5 / np.sqrt(x),
    lambda x: -0.25 * x**-1.5,
    dd1=_sqrt_dd1,
    dd2=_sqrt_dd2,
)
LOG = ScalarFunction("log", np.log, lambda x: 1.0 / x, lambda x: -1.0 / x**2)
EXP = ScalarFunction("exp", np.exp, np.exp, np.exp)


def divided_difference_1(phi: ScalarFunction, lam: np.ndarray) -> np.ndarray:
    """Matrix F[i, k] = phi[lam_i, lam_k] (phi'(lam_i) on the diagonal and on ties)."""
    a = lam[:, None]
    b = lam[None, :]
    if phi.dd1 is not None:
        return np.asarray(phi.dd1(a, b), dtype=float)
    scale = max(np.abs(lam).max(), 1.0)
    gap = a - b
    close = np.abs(gap) <= DD1_RTOL * scale
    safe = np.where(close, 1.0, gap)
    quotient = (phi.value(a) - phi.value(b)) / safe
    return np.where(close, phi.deriv1(0.5 * (a + b)), quotient)


def _generic_dd2(phi: ScalarFunction, x, y, z, scale):
    # x <= y <= z elementwise
    f = phi.value
    spread = z - x
    conf = spread <= DD2_RTOL * scale
    mean = (x + y + z) / 3.0

    def dd1(u, v):
        gap = v - u
        close = np.abs(gap) <= DD1_RTOL * scale
        safe = np.where(close, 1.0, gap)
        return np.where(close, phi.deriv1(0.5 * (u + v)), (f(v) - f(u)) / safe)

    safe_spread = np.where(conf, 1.0, spread)
    val = (dd1(y, z) - dd1(x, y)) / safe_spread
    return np.where(conf, 0.5 * phi.deriv2(mean), val)


def divided_difference_2(phi: ScalarFunction, lam: np.ndarray) -> np.ndarray:
    """Tensor F[i, j, k] = phi[lam_i, lam_j, lam_k] (phi''/2 at a triple point)."""
    a = lam[:, None, None]
    b = lam[None, :, None]
    c = lam[None, None, :]
    if phi.dd2 is not None:
        return np.asarray(phi.dd2(a, b, c), dtype=float) * np.ones((lam.size,) * 3)
    stacked = np.sort(np.stack(np.broadcast_arrays(a, b, c)), axis=0)
    scale = max(np.abs(lam).max(), 1.0)
    return _generic_dd2(phi, stacked[0], stacked[1], stacked[2], scale)


class SpectralCalculus:
    """phi and its first two derivatives at a fixed symmetric matrix A.

    The eigendecomposition and divided-difference tables are computed once,
    so repeated directional evaluations are cheap.
    """

    def __init__(self, phi: ScalarFunction, A, eig: EigenDecomposition | None = None):
        self.phi = phi
        self.A = as_symmetric(A)
        self.eig = symmetric_eig(self.A) if eig is None else eig
        lam = self.eig.values
        with np.errstate(invalid="ignore", divide="ignore"):
            self.values = np.asarray(phi.value(lam), dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise DomainError(f"{phi.name} is not finite on the spectrum {lam}")
        self._V = self.eig.vectors
        self._F1 = None
        self._F2 = None

    @property
    def F1(self):
        if self._F1 is None:
            self._F1 = divided_difference_1(self.phi, self.eig.values)
        return self._F1

    @property
    def F2(self):
        if self._F2 is None:
            self._F2 = divided_difference_2(self.phi, self.eig.values)
        return self._F2

    def to_eigbasis(self, G):
        V = self._V
        return V.T @ np.asarray(G, dtype=float) @ V

    def from_eigbasis(self, M):
        V = self._V
        out = V @ M @ V.T
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def apply(self) -> np.ndarray:
        V = self._V
        out = (V * self.values) @ V.T
        return 0.5 * (out + out.T)

    def d(self, G) -> np.ndarray:
        return self.from_eigbasis(self.F1 * self.to_eigbasis(G))

    def q(self, G) -> np.ndarray:
        Gt = self.to_eigbasis(G)
        return self.from_eigbasis(np.einsum("ijk,...ij,...jk->...ik", self.F2, Gt, Gt))

    def trace_d(self, G) -> np.ndarray:
        """tr D phi_A[G]; only the confluent diagonal phi'(lam_i) contributes."""
        Gt = self.to_eigbasis(G)
        return np.einsum("i,...ii->...", np.diagonal(self.F1), Gt)

    def trace_q(self, G) -> np.ndarray:
        """tr Q phi_A[G] = sum_{i,j} phi[lam_i, lam_j, lam_i] Gt_ij Gt_ji."""
        Gt = self.to_eigbasis(G)
        F = np.einsum("iji->ij", self.F2)
        return np.einsum("ij,...ij,...ji->...", F, Gt, Gt)


def apply_spectral(phi: ScalarFunction, A) -> np.ndarray:
    return SpectralCalculus(phi, A).apply()


def d_spectral(phi: ScalarFunction, A, G) -> np.ndarray:
    """First Frechet derivative of T -> phi(T) at A in direction G."""
    return SpectralCalculus(phi, A).d(G)


def d2_spectral_taylor(phi: ScalarFunction, A, G) -> np.ndarray:
    """Second-order Taylor term Q[G]; the second Frechet derivative is 2 Q[G]."""
    return SpectralCalculus(phi, A).q(G)


# ---------------------------------------------------------------------------
# The Gaussian W2 functional Phi(mu, nu, A, B)


@dataclass(frozen=True)
class PerturbationPair:
    """Tangent direction (g, g', G, G') in mean/covariance space.

    Entries may carry a common leading batch axis.  ``None`` stands for zero.
    """

    g: Optional[np.ndarray] = None
    gp: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    Gp: Optional[np.ndarray] = None

    def __add__(self, other: "PerturbationPair") -> "PerturbationPair":
        return PerturbationPair(*(_add(a, b) for a, b in zip(self._parts(), other._parts())))

    def __mul__(self, s: float) -> "PerturbationPair":
        return PerturbationPair(*(None if a is None else s * np.asarray(a, float) for a in self._parts()))

    __rmul__ = __mul__

    def _parts(self):
        return (self.g, self.gp, self.G, self.Gp)

    def weighted(self, a: float) -> "PerturbationPair":
        """((1-a)^{1/2} g, a^{1/2} g', (1-a)^{1/2} G, a^{1/2} G')."""
        u, v = np.sqrt(1.0 - a), np.sqrt(a)
        g, gp, G, Gp = self._parts()
        return PerturbationPair(
            None if g is None else u * g,
            None if gp is None else v * gp,
            None if G is None else u * G,
            None if Gp is None else v * Gp,
        )


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return np.asarray(a, float) + np.asarray(b, float)


def _vec(x, d):
    return np.zeros(d) if x is None else np.asarray(x, dtype=float)


def _mat(X, d):
    if X is None:
        return np.zeros((d, d))
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def phi_gw(mu, nu, A, B) -> float:
    """Phi(mu, nu, A, B) = |mu - nu|^2 + tr A + tr B - 2 tr (A^{1/2} B A^{1/2})^{1/2}."""
    mu, nu = np.asarray(mu, float), np.asarray(nu, float)
    s = spd_sqrt(A)
    C = s @ np.asarray(B, float) @ s
    lam = np.linalg.eigvalsh(0.5 * (C + C.T))
    diff = mu - nu
    return float(diff @ diff + np.trace(A) + np.trace(B) - 2.0 * np.sqrt(np.clip(lam, 0, None)).sum())


class GWDerivatives:
    """First and second derivatives of Phi at (mu, nu, A, B).

    Both are assembled by the chain and product rules over
    Psi(A, B) = psi(psi(A) B psi(A)) with psi = sqrt:

        D Psi   = D psi_C[C1],
        D^2 Psi = D^2 psi_C[C1, C1] + D psi_C[C2],

    where C = A^{1/2} B A^{1/2}, C1 = D C[h] and C2 = D^2 C[h, h].
    """

    def __init__(self, P: GaussianMeasure, Q: GaussianMeasure):
        if P.dim != Q.dim:
            raise InvalidInput(f"dimension mismatch: {P.dim} vs {Q.dim}")
        self.P, self.Q = P, Q
        self.d = P.dim
        self.root_A = SpectralCalculus(SQRT, P.cov, eig=P.eig)
        self.sA = self.root_A.apply()
        B = Q.cov
        C = self.sA @ B @ self.sA
        self.root_C = SpectralCalculus(SQRT, 0.5 * (C + C.T))
        self.diff = P.mean - Q.mean

    def _first_order_parts(self, h: PerturbationPair):
        d = self.d
        G, Gp = _mat(h.G, d), _mat(h.Gp, d)
        B, sA = self.Q.cov, self.sA
        DsA = self.root_A.d(G)
        C1 = DsA @ B @ sA + sA @ Gp @ sA + sA @ B @ DsA
        return G, Gp, DsA, C1

    def first(self, h: PerturbationPair) -> np.ndarray:
        d = self.d
        g, gp = _vec(h.g, d), _vec(h.gp, d)
        G, Gp, _, C1 = self._first_order_parts(h)
        mean_part = 2.0 * np.einsum("i,...i->...", self.diff, g - gp)
        tr = np.trace(G, axis1=-2, axis2=-1) + np.trace(Gp, axis1=-2, axis2=-1)
        return mean_part + tr - 2.0 * self.root_C.trace_d(C1)

    def second(self, h: PerturbationPair) -> np.ndarray:
        """Quadratic form D^2 Phi[h, h] (true second derivative, no 1/2)."""
        d = self.d
        g, gp = _vec(h.g, d), _vec(h.gp, d)
        G, Gp, DsA, C1 = self._first_order_parts(h)
        B, sA = self.Q.cov, self.sA
        D2sA = 2.0 * self.root_A.q(G)
        C2 = (
            D2sA @ B @ sA
            + sA @ B @ D2sA
            + 2.0 * DsA @ Gp @ sA
            + 2.0 * DsA @ B @ DsA
            + 2.0 * sA @ Gp @ DsA
        )
        tr_d2_psi = 2.0 * self.root_C.trace_q(C1) + self.root_C.trace_d(C2)
        dg = g - gp
        return 2.0 * np.einsum("...i,...i->...", dg, dg) - 2.0 * tr_d2_psi


def d_gw(P: GaussianMeasure, Q: GaussianMeasure, h: PerturbationPair):
    """Directional derivative of Phi at (mu, nu, Sigma, Xi) along h."""
    out = GWDerivatives(P, Q).first(h)
    return float(out) if np.ndim(out) == 0 else out


def d2_gw(P: GaussianMeasure, Q: GaussianMeasure, h: PerturbationPair):
    """Second Frechet derivative D^2 Phi[h, h]; the Taylor expansion carries 1/2 of it."""
    out = GWDerivatives(P, Q).second(h)
    return float(out) if np.ndim(out) == 0 else out


def d_gw_one_sample(P: GaussianMeasure, Q: GaussianMeasure, g, G):
    """Derivative in (mu, Sigma) with Q = N(nu, B) held fixed.

    Evaluated through the eigenpairs (kappa_l, r_l) of B^{1/2} A B^{1/2}:

        2 (mu - nu).g + tr G - sum_l kappa_l^{-1/2} r_l^T B^{1/2} G B^{1/2} r_l
    """
    d = P.dim
    g, G = _vec(g, d), _mat(G, d)
    sB = Q.cov_sqrt
    K = sB @ P.cov @ sB
    eig = symmetric_eig(K)
    R = eig.vectors
    M = R.T @ sB @ G @ sB @ R
    kappa_sum = np.einsum("l,...ll->...", eig.values**-0.5, M)
    out = 2.0 * np.einsum("i,...i->...", P.mean - Q.mean, g) + np.trace(G, axis1=-2, axis2=-1) - kappa_sum
    return float(out) if np.ndim(out) == 0 else out


def d_gw_paper_literal(P: GaussianMeasure, Q: GaussianMeasure, h: PerturbationPair) -> float:
    """The derivative formula with the tied-pair convention written out literally.

    Pairs (i, m) with i != m but lam_i == lam_m are dropped.  This differs from
    the true derivative whenever Sigma has a repeated eigenvalue and is kept
    only for comparison.
    """
    d = P.dim
    g, gp, G, Gp = _vec(h.g, d), _vec(h.gp, d), _mat(h.G, d), _mat(h.Gp, d)
    eigA = P.eig
    lam, Pv = eigA.values, eigA.vectors
    sA = spd_sqrt(P.cov)
    C = sA @ Q.cov @ sA
    eigC = symmetric_eig(C)
    kappa, Qv = eigC.values, eigC.vectors
    same = eigA.clusters()
    W = np.where(same, 0.0, 1.0 / np.sqrt(np.outer(lam, lam)))
    W[np.diag_indices(d)] = 1.0 / lam
    Gt = Pv.T @ G @ Pv  # Gt[i, m] = p_i^T G p_m
    total = 2.0 * (P.mean - Q.mean) @ (g - gp) + np.trace(G) + np.trace(Gp)
    for l in range(d):
        a = Pv.T @ Qv[:, l]  # a[i] = p_i^T q_l
        total -= np.sqrt(kappa[l]) * np.einsum("i,im,m->", a, W * Gt, a)
        total -= kappa[l] ** -0.5 * (Qv[:, l] @ sA @ Gp @ sA @ Qv[:, l])
    return float(total)
