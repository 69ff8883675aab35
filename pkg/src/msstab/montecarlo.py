"""Ensemble simulation of the fully discrete schemes.

Every trajectory owns a counter-based random stream keyed by
``(master_seed, sample_index)``.  Samples are processed in fixed chunks of
:data:`CHUNK` consecutive indices; per-chunk mean and sum of squared
deviations are merged in chunk order, so results are bit-identical for any
number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .discretization import project_initial
from .errors import BudgetExceeded, ContractViolation
from .noise import NoiseModel, sample_stream
from .recursion import ms_norm
from .schemes import (DiffusionOperator, SchemeConfig, StepOperators, build_step_operators,
                      tridiagonal_bands)
from .stability import assemble_S
from .tensor_ops import kron_apply

CHUNK = 1024
DEFAULT_M = 10_000
DEFAULT_BUDGET = 10 ** 9          # sample-steps
NORMALS_PER_BLOCK = 1 << 20       # bound on buffered normals per chunk and block
REFERENCE_WORK_CAP = 5e9          # flops allowed for the propagated reference
ROUNDING_TOL = 1e-12


@dataclass(frozen=True)
class EnsembleConfig:
    M: int = DEFAULT_M
    master_seed: int = 0
    T: float = 1.0
    record_stride: int = 1
    budget: float = DEFAULT_BUDGET

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ContractViolation("M must be a positive integer")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ContractViolation("master_seed must be a 64-bit unsigned integer")
        if not self.T > 0:
            raise ContractViolation("T must be positive")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ContractViolation("record_stride must be a positive integer")

    def steps(self, dt: float) -> int:
        """Number of whole steps of size ``dt`` that fit in ``[0, T]``."""
        return int(math.floor(self.T / dt * (1 + 1e-12)))

    def cost(self, dt: float) -> int:
        return int(self.M) * self.steps(dt)


@dataclass
class EnsembleResult:
    times: np.ndarray
    ms_estimate: np.ndarray
    ms_stderr: np.ndarray
    reference: np.ndarray | None = None
    samples: int = 0
    backend: str = ""

    def __post_init__(self):
        n = len(self.times)
        if len(self.ms_estimate) != n or len(self.ms_stderr) != n:
            raise ContractViolation("result arrays must have equal length")
        if self.reference is not None and len(self.reference) != n:
            raise ContractViolation("reference must match the recorded times")
        if np.any(np.asarray(self.ms_estimate) < 0):
            raise ContractViolation("mean-square estimates must be non-negative")


def _gram_bands(gram) -> np.ndarray:
    g = np.asarray(gram, dtype=float)
    if np.any(np.triu(g, 2)) or np.any(np.tril(g, -2)):
        raise ContractViolation("gram matrix must be tridiagonal")
    return tridiagonal_bands(g)


def _row_spans(bands) -> np.ndarray:
    """``[lo, hi)`` rows holding the nonzero entries of each stacked band matrix."""
    spans = np.zeros((bands.shape[0], 2), dtype=np.intp)
    for m, b in enumerate(bands):
        rows = np.flatnonzero(np.any(b != 0, axis=0))
        if rows.size:
            spans[m] = rows[0], rows[-1] + 1
    return spans


def _kernel_args(ops: StepOperators):
    P = 0 if ops.pair_index is None else ops.pair_index.shape[0]
    n = ops.dim
    if P:
        pidx = np.ascontiguousarray(ops.pair_index, dtype=np.intp)
        pbands = np.ascontiguousarray(ops.pair_bands)
        pw = np.ascontiguousarray(ops.pair_mult * ops.pair_amplitudes)
    else:
        pidx = np.zeros((0, 2), dtype=np.intp)
        pbands = np.zeros((0, 3, n))
        pw = np.zeros(0)
    diagonal = not np.any(ops.d_det - np.diag(np.diag(ops.d_det))) and \
        not np.any(ops.prefix - np.diag(np.diag(ops.prefix)))
    return dict(d_det=np.ascontiguousarray(ops.d_det, dtype=float),
                mode_span=_row_spans(ops.mode_bands), pair_span=_row_spans(pbands),
                prefix=np.ascontiguousarray(ops.prefix, dtype=float),
                diagonal=bool(diagonal),
                mode_bands=np.ascontiguousarray(ops.mode_bands),
                amplitudes=np.ascontiguousarray(ops.amplitudes, dtype=float),
                pair_index=pidx, pair_bands=pbands, pair_weights=pw,
                gram_bands=np.ascontiguousarray(_gram_bands(ops.gram)))


def _simulate_chunk(kernel, args, dt, x0, start, stop, steps, seed, keep_states):
    """Squared norms ``(n, steps + 1)`` (and optionally states) for samples ``[start, stop)``."""
    n, N, kappa = stop - start, x0.size, args["mode_bands"].shape[0]
    gens = [sample_stream(seed, i) for i in range(start, stop)]
    X = np.tile(x0, (n, 1))
    norms = np.empty((n, steps + 1))
    norms[:, 0] = _norm0(x0, args["gram_bands"])
    states = np.empty((n, steps + 1, N)) if keep_states else None
    if keep_states:
        states[:, 0] = x0
    block = max(1, min(128, NORMALS_PER_BLOCK // max(1, n * kappa)))
    empty = np.zeros((0, 0, N))
    j = 0
    while j < steps:
        b = min(block, steps - j)
        normals = np.empty((n, b, kappa))
        for s, g in enumerate(gens):
            normals[s] = g.standard_normal((b, kappa))
        out = np.empty((n, b))
        st = np.empty((n, b, N)) if keep_states else empty
        kernel(X, normals, float(dt), args["d_det"], args["prefix"], args["diagonal"],
               args["mode_bands"], args["amplitudes"], args["pair_index"],
               args["pair_bands"], args["pair_weights"], args["gram_bands"], out, st,
               args["mode_span"], args["pair_span"])
        norms[:, j + 1:j + 1 + b] = out
        if keep_states:
            states[:, j + 1:j + 1 + b] = st
        j += b
    return norms, states


def _norm0(x0, gram_bands):
    y = gram_bands[1] * x0
    y[1:] += gram_bands[0, 1:] * x0[:-1]
    y[:-1] += gram_bands[2, :-1] * x0[1:]
    return float(x0 @ y)


def _chunk_moments(r):
    """Count, mean and scaled sum of squared deviations per column.

    Columns are divided by their largest magnitude first, so squared norms
    of unstable runs (which may exceed 1e154) do not overflow.
    """
    scale = np.max(np.abs(r), axis=0)
    scale = np.where((scale > 0) & np.isfinite(scale), scale, 1.0)
    u = r / scale
    mu = u.mean(axis=0)
    return r.shape[0], mu * scale, ((u - mu) ** 2).sum(axis=0), scale


def _merge_moments(stats):
    """Chan's pairwise update applied in chunk order; returns ``(n, mean, stderr)``."""
    scale = stats[0][3]
    for s in stats[1:]:
        scale = np.maximum(scale, s[3])
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b, sb in stats:
        mb = mb / scale
        m2b = m2b * (sb / scale) ** 2
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2 = m2 + m2b + delta ** 2 * (n * nb / tot)
        n = tot
    mean = np.asarray(mean * scale, dtype=float)
    stderr = scale * np.sqrt(m2 / (n - 1) / n) if n > 1 else np.zeros_like(mean)
    return n, mean, stderr


def _chunks(M):
    return [(s, min(s + CHUNK, M)) for s in range(0, M, CHUNK)]


def _map_chunks(fn, M, workers):
    spans = _chunks(M)
    if workers and workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda sp: fn(*sp), spans))
    return [fn(*sp) for sp in spans]


def _initial(space, x0):
    c = np.asarray(project_initial(space, x0), dtype=float)
    if c.shape != (space.N_h,):
        raise ContractViolation(f"initial coefficients must have length {space.N_h}")
    return c


def propagated_reference(ops: StepOperators, x0, steps: int, stride: int = 1) -> np.ndarray:
    """``E||X^j||^2`` from exact second-moment propagation, at ``j = 0, stride, ...``."""
    S = assemble_S(ops)
    m = np.outer(x0, x0)
    out = [ms_norm(m, ops.gram)]
    for j in range(1, steps + 1):
        m = kron_apply(S, m)
        if j % stride == 0:
            out.append(ms_norm(m, ops.gram))
    return np.array(out)


def _reference_affordable(ops: StepOperators, steps: int) -> bool:
    n = ops.dim
    if ops.is_diagonal:
        return True
    terms = 1 + ops.kappa + (0 if ops.pair_index is None else ops.pair_index.shape[0])
    return 4.0 * terms * n ** 3 * steps <= REFERENCE_WORK_CAP


def run_ensemble(scheme: SchemeConfig, space, diffusion: DiffusionOperator, noise: NoiseModel,
                 x0, cfg: EnsembleConfig, workers: int = 1, reference: str | None = "auto",
                 backend: str | None = None) -> EnsembleResult:
    """Simulate ``cfg.M`` trajectories and estimate ``E||X^j||^2`` at the recorded steps.

    ``reference`` selects the comparison column: ``"propagated"`` (exact
    second-moment recursion of the scheme), ``"auto"`` (propagated when
    affordable) or ``None``.
    """
    steps = cfg.steps(scheme.dt)
    if steps < 1:
        raise ContractViolation("T must cover at least one time step")
    cost = cfg.cost(scheme.dt)
    if cost > cfg.budget:
        raise BudgetExceeded(
            f"{cfg.M} samples x {steps} steps = {cost} sample-steps exceeds budget {cfg.budget:g}",
            estimated_cost=cost)
    ops = build_step_operators(scheme, space, diffusion, noise)
    c0 = _initial(space, x0)
    return _run(ops, c0, steps, cfg, workers, reference, backend)


def _run(ops, c0, steps, cfg, workers, reference, backend):
    kernel = kernels.get_kernel(backend)
    args = _kernel_args(ops)
    rec = np.arange(0, steps + 1, cfg.record_stride)

    def chunk_stats(start, stop):
        norms, _ = _simulate_chunk(kernel, args, ops.dt, c0, start, stop, steps,
                                   cfg.master_seed, False)
        return _chunk_moments(norms[:, rec])

    stats = _map_chunks(chunk_stats, int(cfg.M), workers)
    n, mean, stderr = _merge_moments(stats)

    ref = None
    if reference == "propagated" or (reference == "auto" and _reference_affordable(ops, steps)):
        ref = propagated_reference(ops, c0, steps, cfg.record_stride)
    elif reference not in (None, "auto"):
        raise ContractViolation(f"unknown reference mode {reference!r}")
    name = backend or kernels.BACKEND
    return EnsembleResult(times=rec * ops.dt, ms_estimate=np.maximum(mean, 0.0),
                          ms_stderr=stderr, reference=ref, samples=n, backend=name)


def sample_paths(ops: StepOperators, x0, steps: int, M: int, master_seed: int = 0,
                 workers: int = 1, backend: str | None = None) -> np.ndarray:
    """All states ``(M, steps + 1, N)`` of ``M`` trajectories (small problems only)."""
    c0 = np.asarray(x0, dtype=float)
    kernel = kernels.get_kernel(backend)
    args = _kernel_args(ops)

    def chunk(start, stop):
        return _simulate_chunk(kernel, args, ops.dt, c0, start, stop, steps, master_seed, True)[1]

    return np.concatenate(_map_chunks(chunk, int(M), workers))


@dataclass
class DivergenceReport:
    z_scores: np.ndarray
    max_abs_z: float
    max_abs_log_ratio: float
    slope: float
    reference_slope: float | None
    trend: str

    def to_dict(self) -> dict:
        return {"max_abs_z": self.max_abs_z, "max_abs_log_ratio": self.max_abs_log_ratio,
                "slope": self.slope, "reference_slope": self.reference_slope,
                "trend": self.trend, "z_scores": [float(z) for z in self.z_scores]}


def _tail_slope(times, values):
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    start = int(math.floor(2 * len(t) / 3))
    t, v = t[start:], v[start:]
    ok = v > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(t[ok], np.log(v[ok]), 1)[0])


def trend_of(slope: float) -> str:
    if not np.isfinite(slope):
        return "undetermined"
    return "decaying" if slope < 0 else "growing" if slope > 0 else "flat"


def compare_to_reference(result: EnsembleResult, reference=None) -> DivergenceReport:
    """Per-time z-scores, worst log-ratio, and the empirical decay/growth trend.

    The trend is the sign of the least-squares slope of ``log MS`` against
    ``t`` over the final third of the recorded times.
    """
    ref = result.reference if reference is None else np.asarray(reference, dtype=float)
    est = np.asarray(result.ms_estimate, dtype=float)
    se = np.asarray(result.ms_stderr, dtype=float)
    if ref is None:
        z = np.zeros_like(est)
        lr = 0.0
        ref_slope = None
    else:
        ref = np.asarray(ref, dtype=float)
        diff = est - ref
        # identical samples (e.g. at t = 0) leave only rounding differences
        diff = np.where(np.abs(diff) <= ROUNDING_TOL * np.maximum(np.abs(est), np.abs(ref)),
                        0.0, diff)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, diff / np.where(se > 0, se, 1.0),
                         np.where(diff == 0, 0.0, np.sign(diff) * np.inf))
            both = (est > 0) & (ref > 0)
            ratios = np.abs(np.log(est[both] / ref[both]))
        lr = float(ratios.max()) if ratios.size else 0.0
        ref_slope = _tail_slope(result.times, ref)
    slope = _tail_slope(result.times, est)
    return DivergenceReport(z_scores=z, max_abs_z=float(np.max(np.abs(z))) if z.size else 0.0,
                            max_abs_log_ratio=lr, slope=slope, reference_slope=ref_slope,
                            trend=trend_of(slope))


def write_csv(result: EnsembleResult, path) -> None:
    """``t,ms_estimate,ms_stderr,reference`` with 17 significant digits."""
    def fmt(v):
        return format(float(v), ".17g")

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "ms_estimate", "ms_stderr", "reference"])
        ref = result.reference
        for i, t in enumerate(result.times):
            w.writerow([fmt(t), fmt(result.ms_estimate[i]), fmt(result.ms_stderr[i]),
                        fmt(ref[i]) if ref is not None else ""])


def read_csv(path) -> EnsembleResult:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
    has_ref = bool(rows) and rows[0]["reference"] != ""
    return EnsembleResult(times=col("t"), ms_estimate=col("ms_estimate"),
                          ms_stderr=col("ms_stderr"), reference=col("reference") if has_ref else None)
