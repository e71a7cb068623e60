"""Sparse saddle-point factorization and the spectral estimators that feed
stability certificates.

Matrices are stored as scipy CSR/CSC (compressed row storage with sorted,
duplicate-free indices); factorization is direct sparse LU, which is
robust at the desk scales this package targets.  The estimators
(``infsup_estimate``, ``kernel_ellipticity``, ``operator_norm_estimate``)
are test and certificate utilities and may densify small matrices.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EstimatorError, SaddleSolverError

__all__ = [
    "SaddleFactorization",
    "KernelEllipticity",
    "factorize_saddle",
    "infsup_estimate",
    "kernel_ellipticity",
    "operator_norm_estimate",
]


def as_csr(matrix) -> sp.csr_matrix:
    """Canonical CSR form: sorted, duplicate-free column indices."""
    out = sp.csr_matrix(matrix)
    out.sum_duplicates()
    out.sort_indices()
    return out


class SaddleFactorization:
    """Reusable LU factorization of ``[[g1 A, g2 B^T], [g3 B, 0]]``."""

    def __init__(self, lu, n_v: int, n_q: int, gammas):
        self._lu = lu
        self.n_v = n_v
        self.n_q = n_q
        self.gammas = gammas

    def solve(self, f: np.ndarray, g: np.ndarray):
        """Solve for (u, p) given block right-hand sides."""
        rhs = np.concatenate([np.asarray(f, float), np.asarray(g, float)])
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SaddleSolverError(
                f"saddle solve produced non-finite values (gammas={self.gammas})")
        return sol[: self.n_v], sol[self.n_v:]


def factorize_saddle(a, b, g1: float = 1.0, g2: float = 1.0,
                     g3: float = 1.0) -> SaddleFactorization:
    """Factor the block system ``[[g1 A, g2 B^T], [g3 B, 0]]``.

    Parameters
    ----------
    a : sparse (n_v, n_v), symmetric positive semi-definite
    b : sparse (n_q, n_v), full row rank
    g1, g2, g3 : nonzero block scalings

    Raises
    ------
    SaddleSolverError
        On structural or numerical singularity; the message carries block
        diagnostics (the gammas, and rank deficiency when B has an
        exactly zero row).
    """
    for name, g in (("g1", g1), ("g2", g2), ("g3", g3)):
        if g == 0.0 or not np.isfinite(g):
            raise SaddleSolverError(f"block scaling {name}={g!r} is singular")
    a = as_csr(a)
    b = as_csr(b)
    n_v = a.shape[0]
    n_q = b.shape[0]
    if a.shape[1] != n_v or b.shape[1] != n_v:
        raise SaddleSolverError(
            f"inconsistent block shapes A{a.shape} B{b.shape}")
    kkt = sp.bmat([[g1 * a, g2 * b.T], [g3 * b, None]], format="csc")
    try:
        lu = spla.splu(kkt)
    except RuntimeError as exc:
        row_norms = np.asarray(abs(b).sum(axis=1)).ravel()
        detail = ""
        if n_q and row_norms.min() == 0.0:
            dead = int(np.argmin(row_norms))
            detail = f"; B is rank deficient (zero row {dead})"
        raise SaddleSolverError(
            f"saddle factorization failed with gammas=({g1:g},{g2:g},{g3:g})"
            f"{detail}: {exc}") from exc
    return SaddleFactorization(lu, n_v, n_q, (g1, g2, g3))


def _dense_schur(gram_v, b) -> np.ndarray:
    """Dense S = B Gv^{-1} B^T via one multi-RHS sparse solve."""
    gram_v = sp.csc_matrix(gram_v)
    b = as_csr(b)
    lu = spla.splu(gram_v)
    x = lu.solve(b.T.toarray())
    s = b @ x
    return 0.5 * (s + s.T)


def infsup_estimate(gram_v, gram_q, b, tol: float = 1e-10,
                    max_iter: int = 500) -> float:
    """Discrete inf-sup constant of ``b`` in the norms of the two Grams.

    Equals the smallest singular value of ``Gq^{-1/2} B Gv^{-1/2}``,
    computed by inverse iteration on the generalized eigenproblem
    ``(B Gv^{-1} B^T) q = lambda Gq q``.  A singular Schur complement
    (rank-deficient B) returns 0.0.

    Raises
    ------
    EstimatorError
        If the iteration does not converge; the message reports the last
        iterate.
    """
    s = _dense_schur(gram_v, b)
    gq = np.asarray(sp.csr_matrix(gram_q).todense())
    try:
        cho = scipy.linalg.cho_factor(s)
    except scipy.linalg.LinAlgError:
        return 0.0
    rng = np.random.RandomState(0)
    x = rng.standard_normal(s.shape[0])
    x /= math.sqrt(x @ gq @ x)
    lam_prev = math.inf
    for _ in range(max_iter):
        y = scipy.linalg.cho_solve(cho, gq @ x)
        if not np.all(np.isfinite(y)):
            return 0.0
        y /= math.sqrt(y @ gq @ y)
        lam = float(y @ s @ y)
        if abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            return math.sqrt(max(lam, 0.0))
        lam_prev = lam
        x = y
    raise EstimatorError(
        f"inf-sup inverse iteration stalled at lambda={lam_prev:.6e}")


class KernelEllipticity(NamedTuple):
    """Coercivity constant of ``a`` on null(B) plus the nullspace size."""

    alpha: float
    null_dim: int


def kernel_ellipticity(a, b, gram_v) -> KernelEllipticity:
    """Smallest generalized eigenvalue of ``a`` restricted to null(B).

    Extracts the nullspace densely (test utility: intended for small
    meshes only) and solves the projected pencil ``(Z^T A Z, Z^T Gv Z)``.
    An empty nullspace yields ``alpha = inf`` with ``null_dim = 0``.
    """
    b_dense = sp.csr_matrix(b).toarray()
    z = scipy.linalg.null_space(b_dense)
    if z.shape[1] == 0:
        return KernelEllipticity(alpha=math.inf, null_dim=0)
    a_z = z.T @ (sp.csr_matrix(a) @ z)
    g_z = z.T @ (sp.csr_matrix(gram_v) @ z)
    eigs = scipy.linalg.eigh(a_z, g_z, eigvals_only=True)
    return KernelEllipticity(alpha=float(eigs[0]), null_dim=z.shape[1])


def operator_norm_estimate(a, gram_v, tol: float = 1e-10,
                           max_iter: int = 2000) -> float:
    """Operator norm of the bilinear form ``a`` in the Gram norm.

    Largest generalized eigenvalue of ``(A, Gv)`` by power iteration with
    a factored Gram solve.
    """
    a = as_csr(a)
    gram = as_csr(gram_v)
    lu = spla.splu(sp.csc_matrix(gram))
    rng = np.random.RandomState(1)
    x = rng.standard_normal(a.shape[0])
    lam_prev = 0.0
    for _ in range(max_iter):
        ax = a @ x
        lam = float(abs(x @ ax) / (x @ (gram @ x)))
        y = lu.solve(ax)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        if abs(lam - lam_prev) <= tol * max(lam, 1e-300):
            return lam
        lam_prev = lam
    raise EstimatorError(
        f"operator norm power iteration stalled at {lam_prev:.6e}")
