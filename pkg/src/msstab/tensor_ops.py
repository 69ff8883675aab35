"""Kronecker-structured linear algebra on V_h and V_h (x) V_h.

Elements of the tensor space are stored as ``N x N`` arrays ``V`` so that the
elementary tensor ``a (x) b`` corresponds to ``outer(a, b)``.  With this
convention ``(A (x) B) V = A @ V @ B.T`` and the dense matrix of the operator
is ``numpy.kron(A, B)`` acting on ``V.ravel()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse.linalg

from .errors import ContractViolation, DenseCapExceeded, InvariantViolation

DENSE_CAP = 1024
VALIDATION_DIM = 32
WINDOW = 16


def _as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ContractViolation(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} has non-finite entries")
    return a


def _offdiag_zero(a):
    return not np.any(a - np.diag(np.diag(a)))


@dataclass(frozen=True)
class KroneckerTerm:
    weight: float
    A: np.ndarray
    B: np.ndarray

    @property
    def diagonal(self):
        return _offdiag_zero(self.A) and _offdiag_zero(self.B)


@dataclass(frozen=True)
class KroneckerSumOperator:
    """``sum_i weight_i * (A_i (x) B_i)`` acting on ``N x N`` arrays.

    Construct with :meth:`from_terms`; the constructor validates shapes and
    precomputes a Hadamard mask when every term is diagonal, which makes the
    application O(N^2) instead of O(terms * N^3).
    """

    terms: tuple
    dim: int
    _mask: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_terms(cls, terms: Sequence) -> "KroneckerSumOperator":
        if len(terms) == 0:
            raise ContractViolation("a Kronecker sum needs at least one term")
        built = []
        dim = None
        for i, t in enumerate(terms):
            w, A, B = t if not isinstance(t, KroneckerTerm) else (t.weight, t.A, t.B)
            A = _as_matrix(A, f"terms[{i}].A")
            B = _as_matrix(B, f"terms[{i}].B")
            w = float(w)
            if not np.isfinite(w):
                raise ContractViolation(f"terms[{i}].weight is not finite")
            if dim is None:
                dim = A.shape[0]
            if A.shape[0] != dim or B.shape[0] != dim:
                raise ContractViolation(
                    f"terms[{i}] has dimension {A.shape[0]}/{B.shape[0]}, expected {dim}")
            A.setflags(write=False)
            B.setflags(write=False)
            built.append(KroneckerTerm(w, A, B))
        mask = None
        if all(t.diagonal for t in built):
            mask = np.zeros((dim, dim))
            for t in built:
                mask += t.weight * np.outer(np.diag(t.A), np.diag(t.B))
            mask.setflags(write=False)
        return cls(tuple(built), dim, mask)

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "KroneckerSumOperator":
        eye = np.eye(dim)
        return cls.from_terms([(scale, eye, eye)])

    @property
    def is_diagonal(self) -> bool:
        return self._mask is not None

    def diagonal_entries(self) -> np.ndarray:
        """Eigenvalues ``Lambda[k, l]`` when the operator is diagonal in tensor coordinates."""
        if self._mask is None:
            raise ContractViolation("operator is not diagonal in tensor coordinates")
        return np.array(self._mask)

    def apply(self, v):
        return kron_apply(self, v)

    def to_dense(self) -> np.ndarray:
        n2 = self.dim * self.dim
        out = np.zeros((n2, n2))
        for t in self.terms:
            out += t.weight * np.kron(t.A, t.B)
        return out

    def transformed(self, Q) -> "KroneckerSumOperator":
        """Operator after the change of basis ``A -> Q^T A Q`` applied to every factor."""
        Q = _as_matrix(Q, "Q")
        return KroneckerSumOperator.from_terms(
            [(t.weight, Q.T @ t.A @ Q, Q.T @ t.B @ Q) for t in self.terms])


def _as_tensor(v, dim):
    V = np.asarray(v, dtype=float)
    if V.ndim == 1 and V.size == dim * dim:
        V = V.reshape(dim, dim)
    if V.shape != (dim, dim):
        raise ContractViolation(f"tensor vector has shape {V.shape}, operator dim is {dim}")
    return V


def kron_apply(op: KroneckerSumOperator, v) -> np.ndarray:
    """Apply ``op`` to the tensor ``v`` (an ``N x N`` array or its ravel)."""
    V = _as_tensor(v, op.dim)
    if op._mask is not None:
        return op._mask * V
    out = np.zeros_like(V)
    for t in op.terms:
        out += t.weight * (t.A @ V @ t.B.T)
    return out


class RadiusEstimate(NamedTuple):
    rho: float
    converged: bool


def _start_tensor(dim, rng):
    # interior of the PSD cone: second-moment maps keep iterates there
    G = rng.standard_normal((dim, dim))
    V = G @ G.T / dim + np.eye(dim)
    return V / np.linalg.norm(V)


def spectral_radius(op: KroneckerSumOperator, tol: float = 1e-10, max_iter: int | None = None,
                    seed: int = 0, restart_every: int = 500,
                    validate: bool = False) -> RadiusEstimate:
    """Dominant eigenvalue magnitude of ``op`` by matrix-free power iteration.

    The start tensor is a seeded random positive definite array.  Convergence
    is declared when the largest change of the estimate over the last
    ``WINDOW`` steps, inflated by the contraction rate observed between two
    windows, falls below ``tol`` relative.

    Power iteration stalls when several eigenvalues share the largest
    modulus (``lambda^2`` and ``conj(lambda)^2`` when ``D`` has a complex
    pair), because the iterate then rotates.  If it has not converged after
    ``restart_every`` steps, the last iterate seeds an implicitly restarted
    Arnoldi run (ARPACK, still matrix-free), which resolves such eigenvalues.
    """
    if not tol > 0:
        raise ContractViolation("tol must be positive")
    dim = op.dim
    if max_iter is None:
        max_iter = max(1000, 50 * dim * dim)
    rng = np.random.default_rng(seed)
    v = _start_tensor(dim, rng)

    prev = None
    est = 0.0
    hist = []
    converged = False
    for _ in range(min(restart_every, max_iter)):
        w = kron_apply(op, v)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            est, converged = 0.0, True
            break
        # two-step geometric mean is immune to a +rho/-rho pair
        est = np.sqrt(nrm * prev) if prev is not None else nrm
        hist.append(est)
        if len(hist) > 2 * WINDOW:
            diffs = np.abs(np.diff(hist[-2 * WINDOW - 1:]))
            d0, d1 = diffs[:WINDOW].max(), diffs[WINDOW:].max()
            rate = min((d1 / d0) ** (1.0 / WINDOW), 0.999999) if d0 > 0 else 0.0
            # geometric tail bound on the remaining error; window maxima keep
            # an oscillating (complex subdominant) error from looking small
            if d1 * max(1.0, rate / (1.0 - rate)) <= tol * est:
                converged = True
                break
        prev = nrm
        v = w / nrm

    rho = float(est)
    if not converged:
        rho, converged = _krylov_radius(op, v, tol, max_iter, fallback=rho)
    if validate and dim <= VALIDATION_DIM:
        exact = dense_spectral_radius(op)
        if abs(exact - rho) > 1e-8 * max(1.0, exact):
            raise InvariantViolation(
                f"power iteration gave {rho!r}, dense eigensolver gave {exact!r}")
    return RadiusEstimate(rho, converged)


def _krylov_radius(op, v0, tol, max_iter, fallback):
    n2 = op.dim * op.dim
    if n2 <= 4:
        # too small for ARPACK (needs k < n - 1)
        return dense_spectral_radius(op), True
    lin = scipy.sparse.linalg.LinearOperator(
        (n2, n2), matvec=lambda x: kron_apply(op, x.reshape(op.dim, op.dim)).ravel(),
        dtype=float)
    k = min(6, n2 - 2)
    try:
        vals = scipy.sparse.linalg.eigs(lin, k=k, which="LM", v0=np.ravel(v0), tol=tol,
                                        maxiter=max_iter, return_eigenvectors=False)
        return float(np.max(np.abs(vals))), True
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        if len(exc.eigenvalues):
            return float(np.max(np.abs(exc.eigenvalues))), False
        return fallback, False


def dense_spectral_radius(op: KroneckerSumOperator, cap: int = DENSE_CAP) -> float:
    """Exact spectral radius from the materialized ``N^2 x N^2`` matrix."""
    n2 = op.dim * op.dim
    if n2 > cap:
        raise DenseCapExceeded(
            f"tensor dimension {n2} exceeds dense cap {cap}; use spectral_radius")
    ev = np.linalg.eigvals(op.to_dense())
    return float(np.max(np.abs(ev)))


def two_norm(M, tol: float = 1e-14, max_iter: int = 10000) -> float:
    """Largest singular value via power iteration on ``M^T M``."""
    M = np.asarray(M, dtype=float)
    if _offdiag_zero(M):
        return float(np.max(np.abs(np.diag(M))))
    MtM = M.T @ M
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = MtM @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        new = float(x @ y)
        x = y / ny
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    else:
        # slow separation of the top singular values; fall back to SVD
        return float(np.linalg.norm(M, 2))
    return float(np.sqrt(lam))


def operator_sum_norm_bound(op: KroneckerSumOperator) -> float:
    """Triangle-inequality bound ``sum |w| ||A||_2 ||B||_2 >= ||op|| >= rho(op)``."""
    return float(sum(abs(t.weight) * two_norm(t.A) * two_norm(t.B) for t in op.terms))
