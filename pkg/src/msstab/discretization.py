"""Spatial discretization of the stochastic heat equation on [0, 1].

Two Galerkin spaces are provided:

* :class:`SpectralSpace` -- span of the Dirichlet eigenfunctions
  ``e_i(x) = sqrt(2) sin(i pi x)``; coordinates are sine coefficients and the
  space is diagonal for ``-A_h``.
* :class:`FemSpace` -- continuous piecewise linear elements on a uniform mesh
  with ``N_h`` interior nodes; coordinates are nodal values and the H-norm is
  ``c^T M c``.

The diffusion operators are ``G1(v)u = sum_i <v,e_i><u,e_i> e_i`` (spectral
coordinates) and the Nemytskii operator ``G2(v)u = v u`` (FEM).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import AccuracyError, ContractViolation, DomainError

# 3-point Gauss-Legendre on [0, 1]; exact up to degree 5
_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)
_GL3_X = 0.5 * (_GL3_X + 1.0)
_GL3_W = 0.5 * _GL3_W
_GL4_X, _GL4_W = np.polynomial.legendre.leggauss(4)
_GL4_X = 0.5 * (_GL4_X + 1.0)
_GL4_W = 0.5 * _GL4_W


def spectral_eigenvalue(nu: float, i: int) -> float:
    """``lambda_i = nu i^2 pi^2`` for the Dirichlet Laplacian scaled by ``nu``."""
    if not nu > 0:
        raise DomainError("nu must be positive")
    if i < 1:
        raise DomainError(f"mode index must be >= 1, got {i}")
    return nu * i * i * np.pi ** 2


def fem_discrete_eigenvalue(nu: float, h: float, i: int) -> float:
    """Closed-form eigenvalue ``lambda_{h,i}`` of ``K v = lambda M v`` for P1 elements."""
    if not nu > 0 or not h > 0:
        raise DomainError("nu and h must be positive")
    n_interior = int(round(1.0 / h)) - 1
    if i < 1 or i > n_interior:
        raise DomainError(f"mode index {i} outside 1..{n_interior}")
    return 4.0 * nu / h ** 2 * 3.0 / (2.0 + np.cos(i * np.pi * h)) * np.sin(i * np.pi * h / 2) ** 2


def eigenfunction(i: int) -> Callable[[np.ndarray], np.ndarray]:
    """Orthonormal sine mode ``sqrt(2) sin(i pi x)``."""
    return lambda x: np.sqrt(2.0) * np.sin(i * np.pi * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SpectralSpace:
    nu: float
    N_h: int

    def __post_init__(self):
        if not self.nu > 0:
            raise ContractViolation("nu must be positive")
        if self.N_h < 1:
            raise ContractViolation("N_h must be >= 1")

    kind = "spectral"

    @cached_property
    def lambdas(self) -> np.ndarray:
        i = np.arange(1, self.N_h + 1)
        return self.nu * i ** 2 * np.pi ** 2

    @property
    def discrete_lambdas(self) -> np.ndarray:
        return self.lambdas

    @property
    def gram(self) -> np.ndarray:
        return np.eye(self.N_h)

    @property
    def eigvecs(self) -> np.ndarray:
        return np.eye(self.N_h)

    def norm_sq(self, c) -> float:
        c = np.asarray(c, dtype=float)
        return float(c @ c)


@dataclass(frozen=True)
class FemSpace:
    """P1 finite elements with ``N_h`` interior nodes, ``h = 1/(N_h + 1)``."""

    nu: float
    N_h: int

    def __post_init__(self):
        if not self.nu > 0:
            raise ContractViolation("nu must be positive")
        if self.N_h < 1:
            raise ContractViolation("N_h must be >= 1")

    kind = "fem"

    @property
    def h(self) -> float:
        return 1.0 / (self.N_h + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.N_h + 1) * self.h

    @cached_property
    def mass(self) -> np.ndarray:
        n, h = self.N_h, self.h
        return h / 6.0 * (4.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1))

    @cached_property
    def stiffness(self) -> np.ndarray:
        n, h = self.N_h, self.h
        return self.nu / h * (2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1))

    @property
    def gram(self) -> np.ndarray:
        return self.mass

    @cached_property
    def discrete_lambdas(self) -> np.ndarray:
        return np.array([fem_discrete_eigenvalue(self.nu, self.h, i)
                         for i in range(1, self.N_h + 1)])

    @cached_property
    def _geig(self):
        lam, V = scipy.linalg.eigh(self.stiffness, self.mass)
        return lam, V

    @property
    def numeric_lambdas(self) -> np.ndarray:
        return self._geig[0]

    @property
    def eigvecs(self) -> np.ndarray:
        """M-orthonormal eigenvectors of ``K v = lambda M v`` (columns)."""
        return self._geig[1]

    def norm_sq(self, c) -> float:
        c = np.asarray(c, dtype=float)
        return float(c @ self.mass @ c)

    def load_vector(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Entries ``int f phi_m dx`` by 4-point Gauss on each element."""
        h, n = self.h, self.N_h
        x = (np.arange(n + 1)[:, None] + _GL4_X[None, :]) * h  # element e = [e h, (e+1) h]
        fx = np.asarray(f(x), dtype=float) * _GL4_W[None, :] * h
        left = (fx * (1.0 - _GL4_X)).sum(axis=1)   # hat of the element's left node
        right = (fx * _GL4_X).sum(axis=1)          # hat of the element's right node
        out = np.zeros(n)
        out += right[:n]      # node m (1-based) is the right node of element m-1
        out += left[1:n + 1]  # and the left node of element m
        return out

    def interpolate(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(f(self.nodes), dtype=float)

    def weighted_mass(self, weights) -> np.ndarray:
        """Tridiagonal matrix ``int w(x) phi_m phi_n dx`` for a P1 weight ``w``.

        ``weights`` holds the nodal values of ``w`` at all ``N_h + 2`` mesh
        points (boundary included).  The integrand is piecewise cubic and is
        integrated exactly by 3-point Gauss-Legendre per element.
        """
        w = np.asarray(weights, dtype=float)
        n, h = self.N_h, self.h
        if w.shape != (n + 2,):
            raise ContractViolation(f"expected {n + 2} nodal weights, got {w.shape}")
        t, q = _GL3_X, _GL3_W * h
        wq = w[:-1, None] * (1 - t) + w[1:, None] * t   # (elements, 3)
        ll = (wq * (1 - t) ** 2 * q).sum(axis=1)
        lr = (wq * (1 - t) * t * q).sum(axis=1)
        rr = (wq * t ** 2 * q).sum(axis=1)
        # element e couples mesh nodes e and e+1; interior node m <-> mesh node m
        main = rr[:n] + ll[1:n + 1]
        off = lr[1:n]
        return np.diag(main) + np.diag(off, 1) + np.diag(off, -1)


def make_space(basis: str, nu: float, N_h: int):
    if basis == "spectral":
        return SpectralSpace(nu, N_h)
    if basis == "fem":
        return FemSpace(nu, N_h)
    raise ContractViolation(f"unknown basis {basis!r}")


def _sine_coefficients(x0, N_h, subintervals_per_mode=8):
    out = np.empty(N_h)
    for k in range(1, N_h + 1):
        n_sub = max(8 * k, subintervals_per_mode * k, 16)
        edges = np.linspace(0.0, 1.0, n_sub + 1)
        h = edges[1] - edges[0]
        x = edges[:-1, None] + _GL4_X[None, :] * h
        vals = np.asarray(x0(x), dtype=float) * np.sqrt(2.0) * np.sin(k * np.pi * x)
        out[k - 1] = float((vals * _GL4_W[None, :]).sum() * h)
    return out


def project_initial(space, x0, check: bool = True) -> np.ndarray:
    """Coordinates of the H-orthogonal projection ``P_h x0``.

    Spectral: ``b_k = <x0, e_k>`` by composite 4-point Gauss with ``8 k``
    subintervals for mode ``k``.  FEM: solves ``M c = (int x0 phi_m)``.
    ``x0`` may also be an array of coordinates, which is returned as-is.
    """
    if not callable(x0):
        c = np.asarray(x0, dtype=float)
        if c.shape != (space.N_h,):
            raise ContractViolation(f"initial coordinates must have shape ({space.N_h},)")
        return c.copy()
    if isinstance(space, SpectralSpace):
        b = _sine_coefficients(x0, space.N_h)
        if check:
            b2 = _sine_coefficients(x0, space.N_h, subintervals_per_mode=16)
            if not np.allclose(b, b2, rtol=1e-8, atol=1e-12):
                raise AccuracyError("sine-coefficient quadrature did not converge")
        return b
    load = space.load_vector(x0)
    return scipy.linalg.solve(space.mass, load, assume_a="pos")


def default_initial_condition(x):
    """``sqrt(30) x (1 - x)``, normalized so that its H-norm is one."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(30.0) * x * (1.0 - x)


def apply_G1(v, u) -> np.ndarray:
    """``G1(v)u`` in spectral coordinates: the entrywise product."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    if v.shape != u.shape:
        raise ContractViolation("coefficient vectors must have equal length")
    return v * u


def _full_nodal(space: FemSpace, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (space.N_h,):
        raise ContractViolation(f"nodal vector must have shape ({space.N_h},)")
    return np.concatenate(([0.0], v, [0.0]))


def mode_nodal(space: FemSpace, k: int) -> np.ndarray:
    """Nodal values (boundary included) of the P1 interpolant of ``e_k``."""
    x = np.linspace(0.0, 1.0, space.N_h + 2)
    return eigenfunction(k)(x)


def g2_mode_matrix(space: FemSpace, mode_values) -> np.ndarray:
    """Tridiagonal ``B[m, n] = int f phi_n phi_m dx`` for a P1 mode ``f``."""
    return space.weighted_mass(mode_values)


def apply_G2_mode(space: FemSpace, v, f_k) -> np.ndarray:
    """``P_h (v f_k)`` for a nodal vector ``v`` and a noise mode ``f_k``.

    ``f_k`` is a callable (interpolated at the mesh points) or an array of
    ``N_h + 2`` nodal values; the product is integrated exactly for the P1
    interpolant.
    """
    fv = mode_values_of(space, f_k)
    B = g2_mode_matrix(space, fv)
    v = np.asarray(v, dtype=float)
    if v.shape != (space.N_h,):
        raise ContractViolation(f"nodal vector must have shape ({space.N_h},)")
    return scipy.linalg.solve(space.mass, B @ v, assume_a="pos")


def mode_values_of(space: FemSpace, f):
    if callable(f):
        return np.asarray(f(np.linspace(0.0, 1.0, space.N_h + 2)), dtype=float)
    f = np.asarray(f, dtype=float)
    if f.shape != (space.N_h + 2,):
        raise ContractViolation(f"mode nodal values must have shape ({space.N_h + 2},)")
    return f


def g2_norm_bound(nu: float) -> float:
    """``g_hat = (2 sum_i lambda_i^{-1})^{1/2} = (1/(3 nu))^{1/2}``."""
    if not nu > 0:
        raise DomainError("nu must be positive")
    return float(np.sqrt(1.0 / (3.0 * nu)))


def g2_norm_bound_series(nu: float, terms: int = 10 ** 6) -> float:
    """Truncated-series version of :func:`g2_norm_bound` for cross-checking."""
    i = np.arange(1, terms + 1, dtype=float)
    s = np.sum(1.0 / (nu * i[::-1] ** 2 * np.pi ** 2))
    return float(np.sqrt(2.0 * s))


G1_NORM_BOUND = 1.0
