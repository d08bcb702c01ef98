"""Projections, their factorizations, the matrix exponential and abscissas.

A rank-``k`` projection ``W`` is always carried together with an invertible
factor ``T`` such that ``W = T diag(I_k, 0) T^-1``.  The first ``k`` columns
of ``T`` span ``Im(W)``; the remaining columns are an orthonormal basis of
``ker(W)``, which is also the subspace the agreement error lives in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import (
    EigenFailure,
    NotAProjection,
    RankDeficientBasis,
    SubspacesNotComplementary,
)

TOL_PROJ = 1e-8
TOL_RANK = 1e-10
TOL_EIG = 1e-8
COND_MAX = 1e12


def numerical_rank(M, rtol=TOL_RANK):
    """Rank of ``M`` counting singular values above ``rtol * sigma_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _orient(Q):
    # deterministic column signs: largest-magnitude entry positive
    Q = np.array(Q, dtype=float, copy=True)
    for c in range(Q.shape[1]):
        idx = np.argmax(np.abs(Q[:, c]))
        if Q[idx, c] < 0:
            Q[:, c] = -Q[:, c]
    return Q


def _orthonormal_range(M, k):
    U, _, _ = np.linalg.svd(M, full_matrices=False)
    return _orient(U[:, :k])


def _null_space(M, dim):
    # orthonormal basis of the ``dim`` smallest right singular directions
    n = M.shape[1]
    if dim == 0:
        return np.zeros((n, 0))
    _, _, Vt = np.linalg.svd(M, full_matrices=True)
    return _orient(Vt[n - dim:].T)


def projection_defect(W):
    """Frobenius norm of ``W @ W - W``."""
    W = np.asarray(W, dtype=float)
    return float(np.linalg.norm(W @ W - W))


@dataclass(frozen=True)
class ProjectionWeights:
    """A rank-``k`` projection and its factorization ``T diag(I_k, 0) T^-1``."""

    W: np.ndarray
    T: np.ndarray
    Tinv: np.ndarray
    k: int
    n: int = field(init=False)

    def __post_init__(self):
        W = np.asarray(self.W)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise NotAProjection(f"W must be square, got shape {W.shape}")
        object.__setattr__(self, "n", W.shape[0])
        if not 0 <= self.k <= self.n:
            raise NotAProjection(f"rank {self.k} outside [0, {self.n}]")

    @property
    def t_cols(self):
        """Columns ``t_1..t_k`` spanning ``Im(W)`` (n x k)."""
        return self.T[:, : self.k]

    @property
    def tau_rows(self):
        """Rows ``tau_1..tau_k`` of ``T^-1`` spanning ``Im(W^T)`` (k x n)."""
        return self.Tinv[: self.k]

    @property
    def error_basis(self):
        """Columns ``t_{k+1}..t_n``: a basis of ``ker(W)``."""
        return self.T[:, self.k:]

    @property
    def error_rows(self):
        return self.Tinv[self.k:]

    @property
    def is_orthogonal(self):
        return bool(np.allclose(self.W, self.W.T, atol=TOL_PROJ))

    def invariant_defects(self):
        """Residuals of the four structural invariants, keyed by name."""
        k = self.k
        D = np.zeros((self.n, self.n))
        D[:k, :k] = np.eye(k)
        return {
            "idempotence": projection_defect(self.W),
            "factorization": float(np.linalg.norm(self.T @ D @ self.Tinv - self.W)),
            "biorthogonality": float(np.linalg.norm(self.tau_rows @ self.t_cols - np.eye(k))),
            "inverse": float(np.linalg.norm(self.Tinv @ self.T - np.eye(self.n))),
        }

    def check(self, tol=TOL_PROJ):
        scale = 1.0 + float(np.linalg.norm(self.W))
        bad = {k: v for k, v in self.invariant_defects().items() if v > tol * scale}
        if bad:
            raise NotAProjection(f"projection invariants violated: {bad}")
        if numerical_rank(self.W) != self.k:
            raise NotAProjection(f"rank(W) = {numerical_rank(self.W)}, expected {self.k}")
        return self


def _from_bases(W, image_basis, kernel_basis):
    k = image_basis.shape[1]
    T = np.hstack([image_basis, kernel_basis])
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SubspacesNotComplementary(
            f"image and kernel bases are numerically dependent (cond(T) = {cond:.3g})"
        )
    return ProjectionWeights(W=W, T=T, Tinv=np.linalg.inv(T), k=k)


def _as_columns(B):
    B = np.asarray(B, dtype=float)
    return B.reshape(-1, 1) if B.ndim == 1 else B


def build_projection(M_basis, N_basis):
    """Oblique projection onto ``Im(M_basis)`` along ``Im(N_basis)^perp``.

    Parameters
    ----------
    M_basis : (n, k) array
        Columns span the target subspace.
    N_basis : (n, k) array
        Columns span the orthogonal complement of the subspace projected
        along.  ``M_basis = N_basis`` gives the orthogonal projection.

    Returns
    -------
    ProjectionWeights
        ``W = M (N^T M)^-1 N^T`` with a completed factor ``T``.
    """
    M = _as_columns(M_basis)
    N = _as_columns(N_basis)
    if M.shape != N.shape:
        raise RankDeficientBasis(f"basis shapes differ: {M.shape} vs {N.shape}")
    n, k = M.shape
    for name, B in (("M_basis", M), ("N_basis", N)):
        r = numerical_rank(B)
        if r < k:
            raise RankDeficientBasis(f"{name} has rank {r} < {k}")
    G = N.T @ M
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SubspacesNotComplementary(
            f"N^T M is numerically singular (cond = {cond:.3g}); subspaces are not complementary"
        )
    W = M @ np.linalg.solve(G, N.T)
    image = _orthonormal_range(M, k)
    # ker(W) = ker(N^T)
    kernel = _null_space(N.T, n - k)
    return _from_bases(W, image, kernel).check()


def decompose_projection(W, k=None):
    """Factor an idempotent ``W`` as ``T diag(I_k, 0) T^-1``.

    ``k`` defaults to the numerical rank of ``W``.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise NotAProjection(f"W must be square, got shape {W.shape}")
    n = W.shape[0]
    defect = projection_defect(W)
    if defect > TOL_PROJ * (1.0 + np.linalg.norm(W)):
        raise NotAProjection(f"||W^2 - W||_F = {defect:.3g} exceeds tolerance")
    r = numerical_rank(W)
    if k is None:
        k = r
    elif r != k:
        raise NotAProjection(f"rank(W) = {r}, expected {k}")
    if k == n:
        return ProjectionWeights(W=W.copy(), T=np.eye(n), Tinv=np.eye(n), k=n)
    if k == 0:
        return ProjectionWeights(W=W.copy(), T=np.eye(n), Tinv=np.eye(n), k=0)
    image = _orthonormal_range(W, k)
    kernel = _null_space(W, n - k)
    return _from_bases(W.copy(), image, kernel).check()


def matrix_exponential(A, t=1.0):
    """``exp(A t)`` by scaling and squaring with a Pade approximant."""
    A = np.asarray(A, dtype=float)
    if t < 0:
        raise ValueError("t must be nonnegative")
    return scipy.linalg.expm(A * t)


@dataclass(frozen=True)
class AbscissaReport:
    spectral: float
    essential_spectral: float
    numerical: float
    deflated_numerical: float
    structural_zeros_ok: bool = True


def _eigvals(A):
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        cond = float(np.linalg.cond(A))
        raise EigenFailure(f"eigensolver did not converge (cond ~ {cond:.3g})", cond) from exc
    if not np.all(np.isfinite(ev)):
        raise EigenFailure("eigensolver returned non-finite values", float(np.linalg.cond(A)))
    return ev


def symmetric_part(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def deflated_numerical_abscissa(A, weights):
    """Largest eigenvalue of ``sym(A)`` compressed onto ``ker(W)``."""
    if weights.k == weights.n:
        return float("nan")
    Q, _ = np.linalg.qr(weights.error_basis)
    return float(np.linalg.eigvalsh(Q.T @ symmetric_part(A) @ Q)[-1])


def abscissas(A, weights=None, tol_eig=TOL_EIG):
    """Spectral and numerical abscissas of ``A``, plain and deflated.

    With ``weights`` given, the ``k`` eigenvalues of smallest modulus are
    removed for the essential spectral abscissa (they are the structural
    zero modes of an agreement matrix) and the symmetric part is compressed
    onto ``ker(W)`` for the deflated numerical abscissa.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    ev = _eigvals(A)
    spectral = float(np.max(ev.real))
    numerical = float(np.linalg.eigvalsh(symmetric_part(A))[-1])
    if weights is None:
        return AbscissaReport(spectral, spectral, numerical, numerical)
    if weights.n != A.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape[0]}, W is {weights.n}")
    k = weights.k
    if k == A.shape[0]:
        return AbscissaReport(spectral, float("nan"), numerical, float("nan"))
    order = np.argsort(np.abs(ev), kind="stable")
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    zeros_ok = bool(np.all(np.abs(ev[order[:k]]) <= tol_eig * scale))
    essential = float(np.max(ev[order[k:]].real))
    return AbscissaReport(
        spectral=spectral,
        essential_spectral=essential,
        numerical=numerical,
        deflated_numerical=deflated_numerical_abscissa(A, weights),
        structural_zeros_ok=zeros_ok,
    )
