"""Linear one-step recursions and propagation of their second moments.

A recursion ``X^{j+1} = (D_det + D_stoch^j) X^j`` whose stochastic part has
zero conditional mean and constant covariance propagates its second moment
``E[X^j (x) X^j]`` by the fixed operator ``S = D_det (x) D_det + E[D_stoch (x) D_stoch]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolation, InvariantViolation
from .tensor_ops import KroneckerSumOperator, kron_apply

SYM_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class RecursionState:
    j: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if not np.all(np.isfinite(c)):
            raise ContractViolation("state has non-finite coefficients")
        object.__setattr__(self, "coeffs", c)


def step(state: RecursionState, d_det, d_stoch) -> RecursionState:
    d_det = np.atleast_2d(np.asarray(d_det, dtype=float))
    d_stoch = np.atleast_2d(np.asarray(d_stoch, dtype=float))
    n = state.coeffs.shape[0]
    if d_det.shape != (n, n) or d_stoch.shape != (n, n):
        raise ContractViolation(
            f"operators {d_det.shape}/{d_stoch.shape} do not match state of length {n}")
    return RecursionState(state.j + 1, (d_det + d_stoch) @ state.coeffs)


@dataclass(frozen=True)
class SecondMoment:
    """``E[X (x) X]`` as an ``N x N`` array; ``gram`` is the coordinate Gram matrix."""

    moment: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.moment, dtype=float))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ContractViolation("second moment must be square")
        object.__setattr__(self, "moment", m)

    @classmethod
    def outer(cls, x) -> "SecondMoment":
        x = np.asarray(x, dtype=float)
        return cls(np.outer(x, x))

    def check(self, gram=None) -> None:
        """Raise :class:`InvariantViolation` unless symmetric and PSD within tolerance."""
        m = self.moment
        scale = max(np.max(np.abs(m)), 1e-300)
        if np.max(np.abs(m - m.T)) > SYM_TOL * scale:
            raise InvariantViolation("second moment is not symmetric")
        g = np.eye(m.shape[0]) if gram is None else np.asarray(gram)
        tr = float(np.trace(g @ m))
        sym = 0.5 * (m + m.T)
        min_ev = float(np.min(np.linalg.eigvalsh(sym))) if m.size else 0.0
        if min_ev < -PSD_TOL * max(abs(tr), 1e-300) and min_ev < -1e-300:
            raise InvariantViolation(f"second moment not PSD (min eigenvalue {min_ev:.3e})")


def propagate_second_moment(S: KroneckerSumOperator, m0, steps: int) -> list:
    """``[m0, S m0, S^2 m0, ...]`` of length ``steps + 1``, no renormalization."""
    if steps < 0:
        raise ContractViolation("steps must be non-negative")
    m = m0 if isinstance(m0, SecondMoment) else SecondMoment(m0)
    out = [m]
    cur = m.moment
    for _ in range(steps):
        cur = kron_apply(S, cur)
        out.append(SecondMoment(cur))
    return out


def ms_norm(m, gram=None) -> float:
    """``E||X||^2`` from the second moment: ``trace(gram @ m)`` (``gram = I`` for orthonormal coordinates)."""
    mm = m.moment if isinstance(m, SecondMoment) else np.atleast_2d(np.asarray(m, dtype=float))
    tr = float(np.trace(mm if gram is None else np.asarray(gram) @ mm))
    scale = float(np.sum(np.abs(np.diag(mm)))) or 1.0
    if tr < -1e-12 * scale:
        raise InvariantViolation(f"negative mean-square norm {tr!r}")
    return max(tr, 0.0)


@dataclass
class CompatibilityReport:
    samples: int
    mean_max_abs: float
    mean_max_z: float
    second_moment: np.ndarray
    second_moment_stderr: np.ndarray
    covariance_discrepancy_max_z: float

    def passed(self, threshold: float = 4.0) -> bool:
        return self.mean_max_z <= threshold and self.covariance_discrepancy_max_z <= threshold


def _z(diff, se):
    diff = np.abs(np.asarray(diff, dtype=float))
    se = np.asarray(se, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, 0.0))
    return float(np.max(z)) if z.size else 0.0


def validate_f_compatibility(sampler: Callable[[int, np.random.Generator], np.ndarray],
                             samples: int, seed: int = 0, steps=(0, 1)) -> CompatibilityReport:
    """Estimate the mean and ``E[D (x) D]`` of a stochastic step operator.

    ``sampler(step_index, rng)`` returns one draw of ``D_stoch^j``.  The mean
    (which must vanish) and the covariance are estimated independently at two
    step indices; the report gives the largest deviations in standard errors.
    """
    if samples < 1000:
        raise ContractViolation("need at least 1000 samples")
    rng = np.random.default_rng(seed)
    per_step = []
    for j in steps:
        draws = np.array([np.atleast_2d(np.asarray(sampler(j, rng), dtype=float))
                          for _ in range(samples)])
        flat = draws.reshape(samples, -1)
        kron = np.einsum("si,sj->sij", flat, flat).reshape(samples, -1)
        per_step.append((flat, kron))

    def mse(x):
        return x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(x.shape[0])

    mean_z, mean_abs = 0.0, 0.0
    moments = []
    for flat, kron in per_step:
        m, se = mse(flat)
        mean_z = max(mean_z, _z(m, se))
        mean_abs = max(mean_abs, float(np.max(np.abs(m))))
        moments.append(mse(kron))
    (m0, s0), (m1, s1) = moments[0], moments[-1]
    cov_z = _z(m0 - m1, np.sqrt(s0 ** 2 + s1 ** 2))
    n = per_step[0][0].shape[1]
    return CompatibilityReport(samples, mean_abs, mean_z, m0.reshape(n, n), s0.reshape(n, n), cov_z)
