"""Assembly of the second-moment operator S and the closed-form stability
conditions for Galerkin Euler-Maruyama / Milstein schemes.

Condition evaluators return ``LHS - RHS`` of the corresponding inequality, so
a negative value means the condition (and hence mean-square stability)
holds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .discretization import FemSpace, SpectralSpace
from .errors import ContractViolation, UnsupportedConfiguration
from .noise import NoiseModel
from .schemes import (DiffusionOperator, Integrator, RationalKind, SchemeConfig, StepOperators,
                      as_integrator, as_rational, build_step_operators, h_operator_norm)
from .tensor_ops import KroneckerSumOperator, dense_spectral_radius, spectral_radius

DEFAULT_BAND = 1e-10


class Classification(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


def classify(rho: float, band: float = DEFAULT_BAND) -> Classification:
    if rho < 1.0 - band:
        return Classification.STABLE
    if rho > 1.0 + band:
        return Classification.UNSTABLE
    return Classification.MARGINAL


def _nonzero(m):
    return bool(np.any(m))


def assemble_S_em(d_det, mode_operators, mus, dt, scalings=None) -> KroneckerSumOperator:
    """``S = D (x) D + dt sum_k mu_k s_k^2 (C_k (x) C_k)``."""
    mus = np.asarray(mus, dtype=float)
    s2 = np.ones_like(mus) if scalings is None else np.asarray(scalings, dtype=float) ** 2
    if len(mode_operators) != len(mus):
        raise ContractViolation("need one mode operator per KL mode")
    terms = [(1.0, d_det, d_det)]
    for C, mu, sc in zip(mode_operators, mus, s2):
        if _nonzero(C) and mu * sc != 0.0:
            terms.append((dt * mu * sc, C, C))
    return KroneckerSumOperator.from_terms(terms)


def assemble_S_milstein(d_det, mode_operators, pair_operators, mus, dt,
                        scalings=None) -> KroneckerSumOperator:
    """EM operator plus ``dt^2/2 sum_{k,l} mu_k mu_l s_k^2 s_l^2 (C'_kl (x) C'_kl)``.

    ``pair_operators`` is either a dense ``(kappa, kappa, N, N)`` array over
    ordered pairs or a ``(pair_index, mats)`` tuple over unordered pairs
    ``k <= l`` (off-diagonal pairs then count twice).
    """
    mus = np.asarray(mus, dtype=float)
    s2 = np.ones_like(mus) if scalings is None else np.asarray(scalings, dtype=float) ** 2
    w = mus * s2
    op = assemble_S_em(d_det, mode_operators, mus, dt, scalings)
    terms = list(op.terms)
    if isinstance(pair_operators, tuple):
        index, mats = pair_operators
        for (k, l), Cp in zip(index, mats):
            mult = 1.0 if k == l else 2.0
            if _nonzero(Cp):
                terms.append((mult * dt * dt / 2 * w[k] * w[l], Cp, Cp))
    else:
        kappa = len(mus)
        for k in range(kappa):
            for l in range(kappa):
                Cp = pair_operators[k][l]
                if _nonzero(Cp):
                    terms.append((dt * dt / 2 * w[k] * w[l], Cp, Cp))
    return KroneckerSumOperator.from_terms(terms)


def assemble_S(ops: StepOperators) -> KroneckerSumOperator:
    """Stability operator for assembled step operators (scalings folded into amplitudes)."""
    a2 = ops.amplitudes ** 2
    if ops.milstein:
        return assemble_S_milstein(ops.d_det, ops.mode_operators,
                                   (ops.pair_index, ops.pair_operators), a2, ops.dt)
    return assemble_S_em(ops.d_det, ops.mode_operators, a2, ops.dt)


def table1_lambda(kind, integrator, nu, C_mu, alpha, dt, k) -> float:
    """Closed-form ``Lambda_{k,k}`` for spectral Galerkin with ``G1``."""
    kind, integrator = as_rational(kind), as_integrator(integrator)
    lam = nu * k * k * np.pi ** 2
    mu = C_mu * float(k) ** -alpha
    return _table1_from(kind, integrator, lam, mu, dt)


def _table1_from(kind, integrator, lam, mu, dt):
    if kind is RationalKind.BE and integrator is Integrator.EM:
        return (1 + dt * mu) / (1 + dt * lam) ** 2
    if kind is RationalKind.BE and integrator is Integrator.MILSTEIN:
        return (1 + dt * mu + dt * dt * mu * mu / 2) / (1 + dt * lam) ** 2
    if kind is RationalKind.CN and integrator is Integrator.EM:
        return ((1 - dt * lam / 2) ** 2 + mu * dt) / (1 + dt * lam / 2) ** 2
    if kind is RationalKind.FE and integrator is Integrator.EM:
        return (1 - dt * lam) ** 2 + mu * dt
    raise UnsupportedConfiguration(f"no closed form for {kind.value}/{integrator.value}")


def table1_condition(kind, integrator, lam, mu, dt) -> float:
    """Left side of the per-mode condition ``< 0`` equivalent to ``Lambda_kk < 1``."""
    kind, integrator = as_rational(kind), as_integrator(integrator)
    if kind is RationalKind.BE and integrator is Integrator.EM:
        return -2 * lam + mu - dt * lam ** 2
    if kind is RationalKind.BE and integrator is Integrator.MILSTEIN:
        return -2 * lam + mu + dt * (-lam ** 2 + mu ** 2 / 2)
    if kind is RationalKind.CN and integrator is Integrator.EM:
        return -2 * lam + mu
    if kind is RationalKind.FE and integrator is Integrator.EM:
        return -2 * lam + mu + dt * lam ** 2
    raise UnsupportedConfiguration(f"no closed form for {kind.value}/{integrator.value}")


def table1_threshold(kind, integrator, lam, mu):
    """Critical step where the per-mode condition changes sign.

    Returns ``(dt_star, stable_side)`` with ``stable_side`` in ``{"below",
    "above", "always", "never"}``.
    """
    kind, integrator = as_rational(kind), as_integrator(integrator)
    a = -2 * lam + mu                   # dt-independent part
    if kind is RationalKind.CN:
        return None, ("always" if a < 0 else "never")
    b = {(RationalKind.BE, Integrator.EM): -lam ** 2,
         (RationalKind.BE, Integrator.MILSTEIN): mu ** 2 / 2 - lam ** 2,
         (RationalKind.FE, Integrator.EM): lam ** 2}.get((kind, integrator))
    if b is None:
        raise UnsupportedConfiguration(f"no closed form for {kind.value}/{integrator.value}")
    if b == 0:
        return None, ("always" if a < 0 else "never")
    dt_star = -a / b
    if dt_star <= 0:
        return None, ("always" if a < 0 else "never")
    return dt_star, ("below" if b > 0 else "above")


def _max_abs(fn, z):
    return float(np.max(np.abs(fn(z))))


def sufficient_general(kind, lambdas, dt, F_norm, traceQ, G_norm) -> float:
    """Norm bound on S for any rational approximation, minus one."""
    kind = as_rational(kind)
    z = -dt * np.asarray(lambdas, dtype=float)
    r = _max_abs(kind.R, z)
    d = _max_abs(kind.rd_inv, z)
    return (r + d * dt * F_norm) ** 2 + d * d * dt * traceQ * G_norm ** 2 - 1.0


def sufficient_theorem(kind, lambdas, dt, F_norm, traceQ, G_norm) -> float:
    """Simplified BE / CN / FE conditions using only ``lambda_{h,1}`` and ``lambda_{h,N_h}``."""
    kind = as_rational(kind)
    lam = np.asarray(lambdas, dtype=float)
    l1, lN = float(lam.min()), float(lam.max())
    noise = dt * traceQ * G_norm ** 2
    if kind is RationalKind.BE:
        return ((1 + dt * F_norm) ** 2 + noise) / (1 + dt * l1) ** 2 - 1.0
    if kind is RationalKind.CN:
        r = max(abs((1 - dt * l / 2) / (1 + dt * l / 2)) for l in (l1, lN))
        return (r + dt * F_norm / (1 + dt * l1 / 2)) ** 2 + noise / (1 + dt * l1 / 2) ** 2 - 1.0
    r = max(abs(1 - dt * l) for l in (l1, lN))
    return (r + dt * F_norm) ** 2 + noise - 1.0


def table2_rho(kind, lambdas, dt, traceQ, g_hat) -> float:
    """``rho_BE``, ``rho_CN`` or ``rho_FE`` for the FEM/``G2`` setting with ``F = 0``."""
    kind = as_rational(kind)
    lam = np.asarray(lambdas, dtype=float)
    l1, lN = float(lam.min()), float(lam.max())
    noise = dt * traceQ * g_hat ** 2
    if kind is RationalKind.BE:
        return noise - 2 * dt * l1 - dt * dt * l1 * l1
    if kind is RationalKind.CN:
        r = max(((1 - dt * l / 2) / (1 + dt * l / 2)) ** 2 for l in (l1, lN))
        return r + noise / (1 + dt * l1 / 2) ** 2 - 1.0
    return max((1 - dt * l) ** 2 for l in (l1, lN)) + noise - 1.0


def sufficient_milstein_be(lambda_h1, dt, F_norm, traceQ, G_norm) -> float:
    g2 = traceQ * G_norm ** 2
    return (1 + dt * F_norm) ** 2 + dt * g2 + dt * dt / 2 * g2 * g2 - (1 + dt * lambda_h1) ** 2


def simultaneous_condition(F_norm, lambda1, traceQ, G_norm) -> float:
    """``2 (||F|| - lambda_1) + Tr(Q) ||G||^2``; negative means the equation and
    the backward Euler-Maruyama scheme are stable for every ``h`` and ``dt``."""
    return 2 * (F_norm - lambda1) + traceQ * G_norm ** 2


def simultaneous_condition_milstein(lambda1, traceQ, G_norm) -> float:
    """``-sqrt(2) lambda_1 + Tr(Q) ||G||^2`` (requires ``F = 0``)."""
    return -np.sqrt(2.0) * lambda1 + traceQ * G_norm ** 2


def analytic_heat_classification(nu, C_mu, band: float = DEFAULT_BAND) -> Classification:
    """Mean-square stability of the continuous heat equation with ``G1``:
    unstable iff ``C_mu > 2 nu pi^2``."""
    threshold = 2 * nu * np.pi ** 2
    gap = C_mu - threshold
    if abs(gap) <= band * max(1.0, threshold):
        return Classification.MARGINAL
    return Classification.UNSTABLE if gap > 0 else Classification.STABLE


def exact_ms_reference(space: SpectralSpace, b, mus, t) -> np.ndarray:
    """``sum_k b_k^2 exp((-2 lambda_k + mu_k) t)`` over the ``N_h`` modes."""
    b = np.asarray(b, dtype=float)
    mu = np.zeros(space.N_h)
    m = np.asarray(mus, dtype=float)[:space.N_h]
    mu[:m.size] = m
    t = np.asarray(t, dtype=float)
    rates = -2 * space.lambdas + mu
    return np.sum(b ** 2 * np.exp(np.multiply.outer(t, rates)), axis=-1)


@dataclass
class StabilityReport:
    rho: float
    classification: Classification
    band: float
    rho_converged: bool = True
    conditions: dict = field(default_factory=dict)
    dominant_mode: tuple | None = None
    analytic_solution_classification: Classification | None = None
    mode_thresholds: list | None = None
    trace_q_full: float | None = None
    trace_q_truncated: float | None = None
    notes: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def enum_value(x):
            return x.value if isinstance(x, enum.Enum) else x
        return {
            "rho": self.rho,
            "rho_converged": self.rho_converged,
            "classification": self.classification.value,
            "band": self.band,
            "conditions": dict(self.conditions),
            "dominant_mode": list(self.dominant_mode) if self.dominant_mode else None,
            "analytic_solution_classification": enum_value(self.analytic_solution_classification),
            "mode_thresholds": self.mode_thresholds,
            "trace_q_full": self.trace_q_full,
            "trace_q_truncated": self.trace_q_truncated,
            "notes": list(self.notes),
            "parameters": self.parameters,
        }


def analyze(space, diffusion: DiffusionOperator, noise: NoiseModel, cfg: SchemeConfig,
            band: float = DEFAULT_BAND, validate: bool = False, seed: int = 0) -> StabilityReport:
    """Assemble S, compute rho(S), and evaluate every applicable closed-form condition."""
    ops = build_step_operators(cfg, space, diffusion, noise)
    S = assemble_S(ops)
    est = spectral_radius(S, seed=seed)
    rho = est.rho
    if validate and S.dim <= 32:
        rho_dense = dense_spectral_radius(S)
        if abs(rho_dense - rho) > 1e-8 * max(1.0, rho_dense):
            rho = rho_dense
    report = StabilityReport(rho=rho, classification=classify(rho, band), band=band,
                             rho_converged=est.converged,
                             trace_q_full=noise.trace_q, trace_q_truncated=noise.trace_q_truncated)
    if not est.converged:
        report.notes.append("power iteration did not converge; rho is the best estimate")

    kind, integ = cfg.rational, cfg.integrator
    lam_h = np.asarray(space.discrete_lambdas, dtype=float)
    l1 = float(lam_h.min())
    lambda1 = float(space.nu * np.pi ** 2)
    F_norm = h_operator_norm(space, cfg.F)
    G_norm = diffusion.norm_bound(space.nu)
    trQ = noise.trace_q
    dt = cfg.dt
    cond = report.conditions

    if integ is Integrator.EM:
        cond["general"] = sufficient_general(kind, lam_h, dt, F_norm, trQ, G_norm)
        cond[kind.value] = sufficient_theorem(kind, lam_h, dt, F_norm, trQ, G_norm)
        if kind is RationalKind.BE:
            cond["simultaneous"] = simultaneous_condition(F_norm, lambda1, trQ, G_norm)
        if isinstance(space, FemSpace) and diffusion.kind == "G2" and cfg.F is None:
            cond[f"table2_rho_{kind.value}"] = table2_rho(kind, lam_h, dt, trQ, G_norm)
    else:
        if kind is RationalKind.BE:
            cond["Milstein-BE"] = sufficient_milstein_be(l1, dt, F_norm, trQ, G_norm)
            if cfg.F is None:
                cond["simultaneous-Milstein"] = simultaneous_condition_milstein(lambda1, trQ, G_norm)
        else:
            report.notes.append(
                f"Milstein with {kind.value}: only rho(S) is available, no closed-form condition")

    if S.is_diagonal:
        Lam = np.abs(S.diagonal_entries())
        k, l = np.unravel_index(int(np.argmax(Lam)), Lam.shape)
        report.dominant_mode = (int(k) + 1, int(l) + 1)

    if isinstance(space, SpectralSpace) and diffusion.kind == "G1" and cfg.F is None:
        report.analytic_solution_classification = analytic_heat_classification(
            space.nu, noise.C_mu, band)
        mus = np.zeros(space.N_h)
        m = noise.mus[:space.N_h]
        mus[:m.size] = m
        try:
            diag = [_table1_from(kind, integ, float(lam), float(mu), dt)
                    for lam, mu in zip(space.lambdas, mus)]
            cond["table1_max_lambda"] = float(max(abs(v) for v in diag))
            thresholds = []
            for i, (lam, mu) in enumerate(zip(space.lambdas, mus), start=1):
                dt_star, side = table1_threshold(kind, integ, float(lam), float(mu))
                thresholds.append({"mode": i, "lambda_kk": diag[i - 1], "dt_star": dt_star,
                                   "stable_side": side,
                                   "condition": table1_condition(kind, integ, float(lam), float(mu), dt)})
            report.mode_thresholds = thresholds
        except UnsupportedConfiguration:
            report.notes.append("no closed-form mode factors for this scheme")

    report.parameters = {
        "basis": space.kind, "N_h": space.N_h, "nu": space.nu,
        "operator": diffusion.kind, "C_mu": noise.C_mu, "alpha": noise.alpha,
        "kappa": noise.kappa, "carrier": noise.carrier,
        "rational": kind.value, "integrator": integ.value, "dt": dt,
        "F_norm": F_norm, "G_norm": G_norm,
    }
    return report
