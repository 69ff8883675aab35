"""Rational semigroup approximations and the fully discrete one-step maps.

Working coordinates are those of the space: sine coefficients for
:class:`~msstab.discretization.SpectralSpace`, nodal values for
:class:`~msstab.discretization.FemSpace`.  Every stochastic operator is
factored as ``C_k = prefix @ B_k`` where ``prefix = r_d^{-1}(dt A_h) P_h`` is
shared and ``B_k`` (the Galerkin matrix of ``v -> G(v) e_k``) is
tridiagonal in both discretizations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .discretization import FemSpace, SpectralSpace, g2_norm_bound, mode_nodal
from .errors import ContractViolation, UnsupportedConfiguration
from .noise import IncrementBatch, NoiseModel, double_increments


class RationalKind(enum.Enum):
    BE = "BE"
    CN = "CN"
    FE = "FE"

    @property
    def order(self) -> int:
        return 2 if self is RationalKind.CN else 1

    def R(self, z):
        z = np.asarray(z, dtype=float)
        if self is RationalKind.BE:
            return 1.0 / (1.0 - z)
        if self is RationalKind.CN:
            return (1.0 + z / 2) / (1.0 - z / 2)
        return 1.0 + z

    def rd_inv(self, z):
        z = np.asarray(z, dtype=float)
        if self is RationalKind.BE:
            return 1.0 / (1.0 - z)
        if self is RationalKind.CN:
            return 1.0 / (1.0 - z / 2)
        return np.ones_like(z)


class Integrator(enum.Enum):
    EM = "EM"
    MILSTEIN = "Milstein"


def as_rational(kind) -> RationalKind:
    return kind if isinstance(kind, RationalKind) else RationalKind(str(kind).upper())


def as_integrator(kind) -> Integrator:
    if isinstance(kind, Integrator):
        return kind
    key = str(kind).lower()
    for member in Integrator:
        if member.value.lower() == key:
            return member
    raise ContractViolation(f"unknown integrator {kind!r}")


@dataclass(frozen=True)
class DiffusionOperator:
    kind: str  # "G1" | "G2" | "zero"
    commutative: bool = True

    def __post_init__(self):
        if self.kind not in ("G1", "G2", "zero"):
            raise ContractViolation(f"unknown diffusion operator {self.kind!r}")

    def norm_bound(self, nu: float) -> float:
        if self.kind == "G1":
            return 1.0
        if self.kind == "G2":
            return g2_norm_bound(nu)
        return 0.0


def h_operator_norm(space, F) -> float:
    """``||F||_{L(H)}`` for a matrix given in working coordinates."""
    if F is None:
        return 0.0
    F = np.asarray(F, dtype=float)
    if isinstance(space, FemSpace):
        L = scipy.linalg.cholesky(space.mass, lower=False)  # M = L^T L
        return float(np.linalg.norm(L @ F @ np.linalg.inv(L), 2))
    return float(np.linalg.norm(F, 2))


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    rational: RationalKind
    integrator: Integrator
    dt: float
    F: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "rational", as_rational(self.rational))
        object.__setattr__(self, "integrator", as_integrator(self.integrator))
        if not self.dt > 0:
            raise ContractViolation("dt must be positive")
        if self.F is not None:
            F = np.atleast_2d(np.asarray(self.F, dtype=float))
            if F.shape[0] != F.shape[1]:
                raise ContractViolation("F must be square")
            object.__setattr__(self, "F", F)


def _spectral_function(space, kind: RationalKind, dt, which):
    """Matrix of ``R(dt A_h)`` or ``r_d^{-1}(dt A_h)`` in working coordinates."""
    fn = kind.R if which == "R" else kind.rd_inv
    if isinstance(space, SpectralSpace):
        return np.diag(fn(-dt * space.lambdas))
    lam, V = space.numeric_lambdas, space.eigvecs
    return (V * fn(-dt * lam)) @ V.T @ space.mass


def build_d_det(cfg: SchemeConfig, space) -> np.ndarray:
    """``D = R(dt A_h) + r_d^{-1}(dt A_h) dt P_h F``.

    FEM matrices are assembled from the generalized eigendecomposition of
    ``K v = lambda M v`` (see :func:`apply_rational_solve` for the
    equivalent tridiagonal-solve route).
    """
    lam = space.discrete_lambdas
    if np.any(lam <= 0):
        raise ContractViolation("discrete eigenvalues must be positive")
    D = _spectral_function(space, cfg.rational, cfg.dt, "R")
    if cfg.F is not None:
        if cfg.F.shape[0] != space.N_h:
            raise ContractViolation(f"F must be {space.N_h}x{space.N_h}")
        D = D + cfg.dt * _spectral_function(space, cfg.rational, cfg.dt, "rd") @ cfg.F
    return D


def apply_rational_solve(kind, space: FemSpace, dt: float, c, which: str = "R") -> np.ndarray:
    """Apply ``R(dt A_h)`` (or ``r_d^{-1}``) to nodal values via banded solves."""
    kind = as_rational(kind)
    c = np.asarray(c, dtype=float)
    M, K = space.mass, space.stiffness

    def banded(A):
        ab = np.zeros((3, A.shape[0]))
        ab[0, 1:] = np.diag(A, 1)
        ab[1] = np.diag(A)
        ab[2, :-1] = np.diag(A, -1)
        return ab

    if kind is RationalKind.FE:
        if which == "rd":
            return c.copy()
        return c - dt * scipy.linalg.solve_banded((1, 1), banded(M), K @ c)
    theta = 1.0 if kind is RationalKind.BE else 0.5
    lhs = banded(M + theta * dt * K)
    if which == "rd" or kind is RationalKind.BE:
        return scipy.linalg.solve_banded((1, 1), lhs, M @ c)
    return scipy.linalg.solve_banded((1, 1), lhs, (M - 0.5 * dt * K) @ c)


def tridiagonal_bands(B) -> np.ndarray:
    """``(3, N)`` bands ``[sub (padded), main, super (padded)]`` of a tridiagonal matrix."""
    B = np.asarray(B)
    n = B.shape[-1]
    out = np.zeros(B.shape[:-2] + (3, n))
    out[..., 1, :] = np.diagonal(B, 0, -2, -1)
    if n > 1:
        out[..., 0, 1:] = np.diagonal(B, -1, -2, -1)
        out[..., 2, :-1] = np.diagonal(B, 1, -2, -1)
    return out


@dataclass(frozen=True, eq=False)
class StepOperators:
    """All matrices needed to step, propagate, and analyze one configuration.

    Milstein pair operators are stored once per unordered pair ``k <= l``
    (``pair_index``) with multiplicity ``pair_mult`` (2 off the diagonal),
    and identically zero pairs are dropped.
    """

    d_det: np.ndarray
    prefix: np.ndarray
    mode_mats: np.ndarray                 # (kappa, N, N), tridiagonal
    amplitudes: np.ndarray                # sqrt(mu_k) * scaling_k
    gram: np.ndarray
    dt: float
    integrator: Integrator
    pair_index: np.ndarray | None = None  # (P, 2) with k <= l
    pair_mats: np.ndarray | None = None   # (P, N, N), tridiagonal

    @property
    def dim(self) -> int:
        return self.d_det.shape[0]

    @property
    def kappa(self) -> int:
        return self.mode_mats.shape[0]

    @property
    def milstein(self) -> bool:
        return self.integrator is Integrator.MILSTEIN

    @property
    def pair_mult(self) -> np.ndarray:
        k, l = self.pair_index[:, 0], self.pair_index[:, 1]
        return np.where(k == l, 1.0, 2.0)

    @property
    def pair_amplitudes(self) -> np.ndarray:
        """``a_k a_l`` for each stored pair."""
        return self.amplitudes[self.pair_index[:, 0]] * self.amplitudes[self.pair_index[:, 1]]

    @cached_property
    def mode_operators(self) -> np.ndarray:
        """``C_k = prefix @ B_k``."""
        return np.einsum("ij,kjl->kil", self.prefix, self.mode_mats)

    @cached_property
    def pair_operators(self) -> np.ndarray | None:
        """``C'_kl = prefix @ B'_kl`` for the stored pairs."""
        if self.pair_mats is None:
            return None
        return np.einsum("ij,pjl->pil", self.prefix, self.pair_mats)

    @cached_property
    def mode_bands(self) -> np.ndarray:
        return tridiagonal_bands(self.mode_mats)

    @cached_property
    def pair_bands(self) -> np.ndarray | None:
        return None if self.pair_mats is None else tridiagonal_bands(self.pair_mats)

    @property
    def is_diagonal(self) -> bool:
        def diag(a):
            return not np.any(a - np.diag(np.diag(a)))
        mats = [self.d_det, self.prefix] + list(self.mode_mats)
        if self.pair_mats is not None:
            mats += list(self.pair_mats)
        return all(diag(m) for m in mats)


def _mode_matrices(space, diffusion: DiffusionOperator, kappa: int, with_pairs: bool):
    n = space.N_h
    B = np.zeros((kappa, n, n))
    pairs, mats = [], []
    if diffusion.kind == "G1":
        if not isinstance(space, SpectralSpace):
            raise UnsupportedConfiguration("G1 is implemented in spectral coordinates only")
        for k in range(min(kappa, n)):
            B[k, k, k] = 1.0
            if with_pairs:
                P = np.zeros((n, n))
                P[k, k] = 1.0
                pairs.append((k, k))
                mats.append(P)
    elif diffusion.kind == "G2":
        if not isinstance(space, FemSpace):
            raise UnsupportedConfiguration("G2 requires the finite element basis")
        modes = [mode_nodal(space, k) for k in range(1, kappa + 1)]
        for k in range(kappa):
            B[k] = space.weighted_mass(modes[k])
        if with_pairs:
            for k in range(kappa):
                for l in range(k, kappa):
                    pairs.append((k, l))
                    mats.append(space.weighted_mass(modes[k] * modes[l]))
    if not with_pairs:
        return B, None, None
    if not pairs:
        return B, np.zeros((0, 2), dtype=np.intp), np.zeros((0, n, n))
    return B, np.array(pairs, dtype=np.intp), np.array(mats)


def build_step_operators(cfg: SchemeConfig, space, diffusion: DiffusionOperator,
                         noise: NoiseModel) -> StepOperators:
    milstein = cfg.integrator is Integrator.MILSTEIN
    if milstein and not diffusion.commutative:
        raise UnsupportedConfiguration("Milstein needs a diffusion satisfying the commutativity condition")
    d_det = build_d_det(cfg, space)
    rd = _spectral_function(space, cfg.rational, cfg.dt, "rd")
    if isinstance(space, FemSpace):
        prefix = scipy.linalg.solve(space.mass, rd.T, assume_a="pos").T  # rd @ M^{-1}
    else:
        prefix = rd
    B, pidx, pmats = _mode_matrices(space, diffusion, noise.kappa, milstein)
    return StepOperators(d_det=d_det, prefix=prefix, mode_mats=B,
                         amplitudes=noise.amplitudes.copy(), gram=np.array(space.gram),
                         dt=cfg.dt, integrator=cfg.integrator,
                         pair_index=pidx, pair_mats=pmats)


def em_stoch_step(ops: StepOperators, state, incr: IncrementBatch) -> np.ndarray:
    """``r_d^{-1}(dt A_h) P_h G(X) dL`` with ``dL = sum_k a_k dbeta_k e_k``."""
    x = np.asarray(state, dtype=float)
    xi = ops.amplitudes * np.asarray(incr.dbeta, dtype=float)
    inner = np.einsum("k,kij,j->i", xi, ops.mode_mats, x)
    return ops.prefix @ inner


def milstein_stoch_step(ops: StepOperators, state, incr: IncrementBatch) -> np.ndarray:
    """EM update plus ``sum_{k,l} a_k a_l r_d^{-1} P_h G(G(X) e_k) e_l dd_kl``."""
    if ops.pair_mats is None:
        raise UnsupportedConfiguration("operators were assembled without Milstein pair terms")
    dd = incr.double_increments
    if dd is None:
        dd = double_increments(incr.dbeta, incr.dt)
    x = np.asarray(state, dtype=float)
    k, l = ops.pair_index[:, 0], ops.pair_index[:, 1]
    w = ops.pair_mult * ops.pair_amplitudes * dd[k, l]
    inner = np.einsum("p,pij,j->i", w, ops.pair_mats, x)
    return em_stoch_step(ops, x, incr) + ops.prefix @ inner


def one_step(ops: StepOperators, state, incr: IncrementBatch) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    out = ops.d_det @ x
    if ops.integrator is Integrator.MILSTEIN:
        return out + milstein_stoch_step(ops, x, incr)
    return out + em_stoch_step(ops, x, incr)
