"""
Dense symmetric kernels for the Newton engines.

Matrices are plain ``ndarray`` objects.  :func:`symmetrize` mirrors the
upper triangle so that every matrix handed to the engines is exactly
symmetric, which keeps per-node arithmetic bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

DEFAULT_TOL = 1e-10


class SPDError(np.linalg.LinAlgError):
    """Cholesky factorization met a non-positive pivot."""


class SMWBreakdown(ArithmeticError):
    """A Sherman-Morrison denominator vanished; fall back to a direct solve."""


class EigenError(ArithmeticError):
    pass


def symmetrize(a) -> np.ndarray:
    """Exactly symmetric copy of ``a`` built from its upper triangle."""
    a = np.asarray(a, dtype=float)
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def upper_triangle(a) -> np.ndarray:
    """Packed upper triangle (row-major), ``p(p+1)/2`` scalars."""
    a = np.asarray(a)
    return a[np.triu_indices(a.shape[0])]


def from_upper_triangle(packed, p: int) -> np.ndarray:
    out = np.zeros((p, p))
    out[np.triu_indices(p)] = packed
    return symmetrize(out)


@dataclass(frozen=True)
class Rank1Innovation:
    s: float
    h: np.ndarray
    r: float

    def matrix(self) -> np.ndarray:
        return self.s * np.outer(self.h, self.h)


def _fix_sign(w: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(w)
    if nz.size and w[nz[0]] < 0:
        return -w
    return w


def top_two_eigen(a, tol: float = DEFAULT_TOL):
    """
    Largest- and second-largest-magnitude eigenvalues of a symmetric matrix.

    Returns ``(lam1, w1, lam2_abs)``: ``lam1`` is the eigenvalue of largest
    magnitude, ``w1`` its unit eigenvector (first nonzero entry positive) and
    ``lam2_abs`` the magnitude of the runner-up.  Magnitude ties prefer the
    positive eigenvalue, then the lower index.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise EigenError("matrix has non-finite entries")
    p = a.shape[0]
    if p == 0:
        raise EigenError("empty matrix")
    lam, vec = np.linalg.eigh(a)
    # rank by (|lam| desc, lam desc, index asc)
    order = sorted(range(p), key=lambda k: (-abs(lam[k]), -lam[k], k))
    k1 = order[0]
    lam1 = float(lam[k1])
    w1 = _fix_sign(vec[:, k1].copy())
    lam2_abs = float(abs(lam[order[1]])) if p > 1 else 0.0
    scale = max(1.0, float(np.max(np.abs(lam))))
    resid = float(np.linalg.norm(a @ w1 - lam1 * w1))
    if resid > tol * scale:
        raise EigenError(f"eigen residual {resid:.3e} exceeds tolerance")
    return lam1, w1, lam2_abs


def rank1_truncate(innovation, tol: float = DEFAULT_TOL) -> Rank1Innovation:
    """
    Best rank-1 approximation ``s h h^T`` of a symmetric matrix in spectral norm.

    ``r`` is the spectral norm of the residual, i.e. the second-largest
    eigenvalue magnitude.  A zero matrix yields ``s=+1, h=0, r=0``.
    """
    lam1, w1, lam2_abs = top_two_eigen(innovation, tol)
    if lam1 == 0.0:
        return Rank1Innovation(1.0, np.zeros_like(w1), lam2_abs)
    s = 1.0 if lam1 > 0 else -1.0
    return Rank1Innovation(s, np.sqrt(abs(lam1)) * w1, lam2_abs)


def cholesky(h):
    """Lower Cholesky factor wrapper raising :class:`SPDError` on failure."""
    try:
        return scipy.linalg.cho_factor(np.asarray(h, dtype=float), lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SPDError(f"matrix is not positive definite: {exc}") from exc


def spd_solve(h, g, factor=None) -> np.ndarray:
    """Solve ``h d = g`` for symmetric positive definite ``h`` via Cholesky."""
    if factor is None:
        factor = cholesky(h)
    return scipy.linalg.cho_solve(factor, np.asarray(g, dtype=float))


def smw_solve(h_prev_factor, rank1_updates, g, tol: float = DEFAULT_TOL) -> np.ndarray:
    """
    Solve ``(H + sum_u s_u h_u h_u^T) d = g`` from a Cholesky factor of ``H``.

    The updates are folded in one at a time with the Sherman-Morrison
    identity; ``k`` updates cost ``O(k p^2 + k^2 p)``.

    Raises
    ------
    SMWBreakdown
        If some denominator ``1 + s h^T A^{-1} h`` is at most ``tol``
        relative to ``1 + |s h^T A^{-1} h|`` (the update would break positive
        definiteness or is numerically unsafe).
    """
    g = np.asarray(g, dtype=float)
    updates = [(float(s), np.asarray(h, dtype=float)) for s, h in rank1_updates]
    base = lambda v: scipy.linalg.cho_solve(h_prev_factor, v)
    # z[j] = A_{j}^{-1} h_j where A_j = H + sum_{t<j} s_t h_t h_t^T
    zs, dens = [], []
    for j, (s, h) in enumerate(updates):
        z = base(h)
        for t in range(j):
            st, ht = updates[t]
            z = z - st * zs[t] * (ht @ z) / dens[t]
        q = s * (h @ z)
        den = 1.0 + q
        if den <= tol * (1.0 + abs(q)):
            raise SMWBreakdown(f"Sherman-Morrison denominator {den:.3e} at update {j}")
        zs.append(z)
        dens.append(den)
    d = base(g)
    for (s, h), z, den in zip(updates, zs, dens):
        d = d - s * z * (h @ d) / den
    return d
