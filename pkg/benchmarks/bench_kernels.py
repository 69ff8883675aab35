"""Compare the compiled and pure-Python Monte Carlo kernels.

Run with ``python benchmarks/bench_kernels.py``. Each case times
``sample_paths`` for both backends on the same seed and checks that the
trajectories agree before reporting the speedup.
"""

import argparse
import time

import numpy as np

from msstab import kernels
from msstab.discretization import FemSpace, SpectralSpace, default_initial_condition, project_initial
from msstab.montecarlo import sample_paths
from msstab.noise import NoiseModel
from msstab.schemes import DiffusionOperator, SchemeConfig, build_step_operators

CASES = [
    ("spectral N=15 BE/EM", SpectralSpace(1.0, 15), "G1", "H", "BE", "EM"),
    ("spectral N=15 BE/Milstein", SpectralSpace(1.0, 15), "G1", "H", "BE", "Milstein"),
    ("fem N=31 CN/EM", FemSpace(1.0, 31), "G2", "H1", "CN", "EM"),
    ("fem N=31 BE/Milstein", FemSpace(1.0, 31), "G2", "H1", "BE", "Milstein"),
]


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=1000)
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)
    if kernels.BACKEND != "cython":
        raise SystemExit("compiled extension not available; build with pip install -e .")

    print(f"{'case':28s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, space, op, carrier, kind, integ in CASES:
        noise = NoiseModel(1.0, 3.0, space.N_h, carrier=carrier)
        ops = build_step_operators(SchemeConfig(kind, integ, 0.01), space, DiffusionOperator(op), noise)
        x0 = project_initial(space, default_initial_condition)
        run = {b: (lambda b=b: sample_paths(ops, x0, args.steps, args.samples, master_seed=0, backend=b))
               for b in ("python", "cython")}
        t_py, a = best_of(run["python"], args.repeats)
        t_cy, b = best_of(run["cython"], args.repeats)
        if not np.allclose(a, b, rtol=1e-12, atol=1e-14):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:28s} {t_py:11.3f} {t_cy:11.3f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
