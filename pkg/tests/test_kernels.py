import os
import subprocess
import sys

import numpy as np
import pytest

from msstab import kernels
from msstab.discretization import FemSpace, SpectralSpace
from msstab.montecarlo import sample_paths
from msstab.noise import IncrementBatch, NoiseModel, sample_stream
from msstab.schemes import DiffusionOperator, SchemeConfig, build_step_operators, one_step

BACKENDS = ["python", pytest.param("cython", marks=pytest.mark.skipif(
    kernels.BACKEND != "cython", reason="compiled extension not built"))]

CASES = {
    "spectral-EM": (SpectralSpace(1.0, 4), "G1", NoiseModel(1.0, 3.0, 3), "BE", "EM"),
    "spectral-Milstein": (SpectralSpace(1.0, 4), "G1", NoiseModel(2.0, 2.0, 5), "BE", "Milstein"),
    "fem-EM": (FemSpace(1.0, 6), "G2", NoiseModel(1.0, 3.0, 4, carrier="H1"), "CN", "EM"),
    "fem-Milstein": (FemSpace(1.0, 6), "G2", NoiseModel(3.0, 3.0, 3), "BE", "Milstein"),
    "fem-FE": (FemSpace(1.0, 5), "G2", NoiseModel(1.0, 3.0, 2), "FE", "EM"),
}


def reference_paths(ops, x0, steps, M, seed):
    out = np.empty((M, steps + 1, x0.size))
    for i in range(M):
        rng = sample_stream(seed, i)
        x = x0.copy()
        out[i, 0] = x
        for j in range(steps):
            db = np.sqrt(ops.dt) * rng.standard_normal(ops.kappa)
            x = one_step(ops, x, IncrementBatch(ops.dt, db))
            out[i, j + 1] = x
    return out


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("case", sorted(CASES))
def test_kernel_matches_one_step_loop(case, backend):
    space, op, noise, kind, integ = CASES[case]
    ops = build_step_operators(SchemeConfig(kind, integ, 0.01), space, DiffusionOperator(op), noise)
    x0 = np.linspace(1.0, -0.5, space.N_h)
    got = sample_paths(ops, x0, 7, 5, master_seed=3, backend=backend)
    ref = reference_paths(ops, x0, 7, 5, 3)
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-14)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
def test_backends_agree_on_raw_kernel():
    rng = np.random.default_rng(0)
    S, B, K, N, P = 4, 6, 3, 5, 2
    args = dict(
        normals=rng.standard_normal((S, B, K)), dt=0.01,
        d_det=rng.standard_normal((N, N)) * 0.3, prefix=rng.standard_normal((N, N)) * 0.3,
        diagonal=False, mode_bands=rng.standard_normal((K, 3, N)),
        amplitudes=rng.uniform(0.1, 1.0, K), pair_index=np.array([[0, 0], [0, 2]], dtype=np.intp),
        pair_bands=rng.standard_normal((P, 3, N)), pair_weights=rng.uniform(0.1, 1.0, P),
        gram_bands=np.abs(rng.standard_normal((3, N))))
    for b in (args["mode_bands"], args["pair_bands"], args["gram_bands"][None]):
        b[..., 0, 0] = 0.0
        b[..., 2, -1] = 0.0
    spans_m = np.tile([0, N], (K, 1)).astype(np.intp)
    spans_p = np.tile([0, N], (P, 1)).astype(np.intp)
    X0 = rng.standard_normal((S, N))
    results = []
    for name in ("python", "cython"):
        X = X0.copy()
        norms, states = np.empty((S, B)), np.empty((S, B, N))
        kernels.get_kernel(name)(X, args["normals"], args["dt"], args["d_det"], args["prefix"],
                                 args["diagonal"], args["mode_bands"], args["amplitudes"],
                                 args["pair_index"], args["pair_bands"], args["pair_weights"],
                                 args["gram_bands"], norms, states, spans_m, spans_p)
        results.append((X, norms, states))
    for a, b in zip(*results):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_get_kernel():
    assert kernels.get_kernel("python") is kernels._kernels_py.advance_block
    assert kernels.get_kernel() is kernels.advance_block
    with pytest.raises(ValueError):
        kernels.get_kernel("fortran")


def test_environment_forces_fallback():
    env = dict(os.environ, MSSTAB_KERNEL="python")
    out = subprocess.run([sys.executable, "-c", "import msstab.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
