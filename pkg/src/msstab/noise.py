"""Q-Wiener noise: truncated Karhunen-Loeve expansion, Milstein double
increments, reproducible per-sample random streams, and statistical checks
of the second-moment identities used to assemble the stability operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ContractViolation

CARRIERS = ("H", "H1")
CONVENTIONS = ("normalized", "literal")
ROUNDING_TOL = 1e-12  # relative differences this small are treated as exact


def zeta(alpha: float, n_direct: int = 1000) -> float:
    """Riemann zeta for ``alpha > 1`` by direct summation plus an
    Euler-Maclaurin tail; relative error well below 1e-12."""
    if not alpha > 1:
        raise ContractViolation("zeta needs alpha > 1")
    n = np.arange(n_direct - 1, 0, -1, dtype=float)  # small terms first
    head = np.sum(n ** -alpha)
    N = float(n_direct)
    tail = (N ** (1 - alpha) / (alpha - 1) + 0.5 * N ** -alpha
            + alpha * N ** (-alpha - 1) / 12.0
            - alpha * (alpha + 1) * (alpha + 2) * N ** (-alpha - 3) / 720.0)
    return float(head + tail)


@dataclass(frozen=True)
class NoiseModel:
    """KL spectrum ``mu_i = C_mu i^{-alpha}``, truncated at ``kappa`` modes.

    ``carrier`` selects the space U of the noise.  For ``"H"`` the modes are
    ``f_i = e_i``.  For ``"H1"`` (U = H^1_0) an orthonormal basis is
    ``f_i = lambda_i^{-1/2} e_i`` with ``lambda_i = nu i^2 pi^2``; the
    ``"literal"`` convention instead uses ``lambda_i^{+1/2} e_i``, which is
    not normalized in U and is kept only for comparison.
    """

    C_mu: float
    alpha: float
    kappa: int
    carrier: str = "H"
    nu: float = 1.0
    convention: str = "normalized"

    def __post_init__(self):
        if not self.C_mu > 0:
            raise ContractViolation("C_mu must be positive")
        if not self.alpha > 1:
            raise ContractViolation("alpha must exceed 1 (trace class)")
        if self.kappa < 1:
            raise ContractViolation("kappa must be >= 1")
        if self.carrier not in CARRIERS:
            raise ContractViolation(f"carrier must be one of {CARRIERS}")
        if self.convention not in CONVENTIONS:
            raise ContractViolation(f"convention must be one of {CONVENTIONS}")
        if not self.nu > 0:
            raise ContractViolation("nu must be positive")

    @cached_property
    def mus(self) -> np.ndarray:
        i = np.arange(1, self.kappa + 1, dtype=float)
        return self.C_mu * i ** -self.alpha

    @cached_property
    def mode_scalings(self) -> np.ndarray:
        if self.carrier == "H":
            return np.ones(self.kappa)
        i = np.arange(1, self.kappa + 1, dtype=float)
        lam = self.nu * i ** 2 * np.pi ** 2
        return lam ** -0.5 if self.convention == "normalized" else lam ** 0.5

    @property
    def amplitudes(self) -> np.ndarray:
        """``sqrt(mu_k) * scaling_k``: coefficient of ``dbeta_k e_k`` in ``dL``."""
        return np.sqrt(self.mus) * self.mode_scalings

    @property
    def trace_q(self) -> float:
        """Full series ``C_mu zeta(alpha)``, used by the sufficient conditions."""
        return self.C_mu * zeta(self.alpha)

    @property
    def trace_q_truncated(self) -> float:
        return float(np.sum(self.mus))

    @property
    def truncation_deficit(self) -> float:
        """Relative trace mass lost by truncating at ``kappa`` modes."""
        full = self.trace_q
        return (full - self.trace_q_truncated) / full


@dataclass(frozen=True)
class IncrementBatch:
    dt: float
    dbeta: np.ndarray
    double_increments: np.ndarray | None = None


def double_increments(dbeta, dt) -> np.ndarray:
    """``0.5 (dbeta_k dbeta_l - delta_kl dt)``; symmetric by construction.

    Accepts a ``(kappa,)`` vector or a batch ``(..., kappa)``.
    """
    db = np.asarray(dbeta, dtype=float)
    out = 0.5 * db[..., :, None] * db[..., None, :]
    idx = np.arange(db.shape[-1])
    out[..., idx, idx] -= 0.5 * dt
    return out


def sample_stream(master_seed: int, sample_index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory.

    Keyed by ``(master_seed, sample_index)``; within a trajectory the normals
    are consumed in (step, mode) order, so the value for a given
    ``(step_index, mode_index)`` depends on nothing else.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(sample_index),))
    return np.random.Generator(np.random.Philox(ss))


def draw_increments(model: NoiseModel, dt: float, rng: np.random.Generator,
                    with_double: bool = False) -> IncrementBatch:
    if not dt > 0:
        raise ContractViolation("dt must be positive")
    db = np.sqrt(dt) * rng.standard_normal(model.kappa)
    dd = double_increments(db, dt) if with_double else None
    return IncrementBatch(dt, db, dd)


def draw_increment_block(rng: np.random.Generator, dt: float, steps: int, kappa: int) -> np.ndarray:
    """``(steps, kappa)`` Brownian increments, continuing the stream in order."""
    return np.sqrt(dt) * rng.standard_normal((steps, kappa))


@dataclass
class MomentCheck:
    label: str
    empirical: float
    expected: float
    stderr: float

    @property
    def z(self) -> float:
        diff = self.empirical - self.expected
        if abs(diff) <= ROUNDING_TOL * max(abs(self.expected), abs(self.empirical)):
            return 0.0
        if self.stderr == 0.0:
            return np.inf
        return diff / self.stderr


@dataclass
class LemmaReport:
    name: str
    samples: int
    checks: list = field(default_factory=list)

    @property
    def max_abs_z(self) -> float:
        return max((abs(c.z) for c in self.checks), default=0.0)

    def passed(self, threshold: float = 4.0) -> bool:
        return self.max_abs_z <= threshold

    def to_dict(self) -> dict:
        return {"name": self.name, "samples": self.samples, "max_abs_z": self.max_abs_z,
                "checks": [{"label": c.label, "empirical": c.empirical,
                            "expected": c.expected, "stderr": c.stderr, "z": c.z}
                           for c in self.checks]}


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    m = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(m)
    return m, se


def validate_lemma_A1(model: NoiseModel, dt: float, samples: int, seed: int = 0,
                      increments=None) -> LemmaReport:
    """Check ``E[dL (x) dL] = dt sum_k mu_k f_k (x) f_k`` in KL coordinates.

    ``increments`` optionally replaces the Gaussian draws by a fixed
    ``(samples, kappa)`` array (used to test the estimator itself).
    """
    if not dt > 0:
        raise ContractViolation("dt must be positive")
    if samples < 10_000 and increments is None:
        raise ContractViolation("need at least 1e4 samples")
    kappa = model.kappa
    if increments is None:
        rng = np.random.default_rng(seed)
        db = np.sqrt(dt) * rng.standard_normal((samples, kappa))
    else:
        db = np.asarray(increments, dtype=float)
        samples = db.shape[0]
    y = np.sqrt(model.mus) * db
    prod = y[:, :, None] * y[:, None, :]
    m, se = _mean_se(prod.reshape(samples, -1))
    m = m.reshape(kappa, kappa)
    se = se.reshape(kappa, kappa)
    report = LemmaReport("lemma_A1", samples)
    for k in range(kappa):
        for l in range(kappa):
            expected = dt * model.mus[k] if k == l else 0.0
            report.checks.append(MomentCheck(f"E[dL{k + 1} dL{l + 1}]", float(m[k, l]),
                                             expected, float(se[k, l])))
    return report


def iterated_integrals(rng: np.random.Generator, dt: float, samples: int, kappa: int,
                       substeps: int = 500):
    """Brownian increments and iterated Ito integrals ``I[k, l] = int int dB_k dB_l``.

    Diagonal entries use the exact identity ``0.5 (dB_k^2 - dt)``.  Off-diagonal
    entries are left-point Ito sums on ``substeps`` sub-intervals plus the
    symmetric within-substep correction; their second moment is
    ``dt^2/2 (1 - 1/(2 substeps))``.
    """
    delta = dt / substeps
    inc = np.sqrt(delta) * rng.standard_normal((samples, substeps, kappa))
    path_before = np.cumsum(inc, axis=1) - inc           # B(s_j) - B(a)
    I = np.einsum("njk,njl->nkl", path_before, inc) + 0.5 * np.einsum("njk,njl->nkl", inc, inc)
    db = inc.sum(axis=1)
    idx = np.arange(kappa)
    I[:, idx, idx] = 0.5 * (db ** 2 - dt)
    return db, I


def validate_lemma_A2(model: NoiseModel, dt: float, samples: int, seed: int = 0,
                      substeps: int = 500, block: int = 2000) -> LemmaReport:
    """Check ``E[D2L (x) dL] = 0`` and ``E[D2L (x) D2L] = dt^2/2 sum mu_k mu_l (..)``."""
    if not dt > 0:
        raise ContractViolation("dt must be positive")
    if samples < 10_000:
        raise ContractViolation("need at least 1e4 samples")
    kappa = model.kappa
    mus = model.mus
    rng = np.random.default_rng(seed)
    cross, second, sym = [], [], []
    pairs = [(k, l) for k in range(kappa) for l in range(k + 1, kappa)]
    done = 0
    while done < samples:
        n = min(block, samples - done)
        db, I = iterated_integrals(rng, dt, n, kappa, substeps)
        w = np.sqrt(mus[:, None] * mus[None, :])
        D2 = w * I                                   # sqrt(mu_k mu_l) I_kl
        dL = np.sqrt(mus) * db
        cross.append((D2[:, :, :, None] * dL[:, None, None, :]).reshape(n, -1))
        second.append((D2 ** 2).reshape(n, -1))
        if pairs:
            # the scheme's commutative realization: I_kl + I_lk = dB_k dB_l = 2 dd_kl
            dd = double_increments(db, dt)
            sym.append(np.stack([mus[k] * mus[l] * (2 * dd[:, k, l]) ** 2 for k, l in pairs], axis=1))
        done += n
    cm, cse = _mean_se(np.concatenate(cross))
    sm, sse = _mean_se(np.concatenate(second))
    report = LemmaReport("lemma_A2", samples)
    cm = cm.reshape(kappa, kappa, kappa)
    cse = cse.reshape(kappa, kappa, kappa)
    for k in range(kappa):
        for l in range(kappa):
            for m in range(kappa):
                report.checks.append(MomentCheck(
                    f"E[D2L{k + 1}{l + 1} dL{m + 1}]", float(cm[k, l, m]), 0.0, float(cse[k, l, m])))
    sm = sm.reshape(kappa, kappa)
    sse = sse.reshape(kappa, kappa)
    for k in range(kappa):
        for l in range(kappa):
            report.checks.append(MomentCheck(
                f"E[D2L{k + 1}{l + 1}^2]", float(sm[k, l]), dt ** 2 / 2 * mus[k] * mus[l],
                float(sse[k, l])))
    if pairs:
        ym, yse = _mean_se(np.concatenate(sym))
        for i, (k, l) in enumerate(pairs):
            report.checks.append(MomentCheck(
                f"E[(D2L{k + 1}{l + 1}+D2L{l + 1}{k + 1})^2]", float(ym[i]),
                dt ** 2 * mus[k] * mus[l], float(yse[i])))
    return report
