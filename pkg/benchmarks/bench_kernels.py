"""Compare the numba loop kernels with the vectorised numpy kernels.

    python benchmarks/bench_kernels.py [--sizes 512 2048 8192] [--repeat 20]

Part 1 times each kernel directly (both variants in one process, numba
compiled on first call and excluded from timing).  Part 2 times a full
split-step evolution in two subprocesses, one per DGL_BACKEND value.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from diracgap import kernels
from diracgap._backend import HAVE_NUMBA
from diracgap.core import Nonlinearity

STEP_SNIPPET = """
import json, time, numpy as np
from diracgap import BACKEND
from diracgap.core import Grid, Nonlinearity, SpinorField
from diracgap.dirac_op import DiracOperator
from diracgap.evolve import SplitStepper
g = Grid.symmetric(40, {n})
op = DiracOperator.reference(g)
st = SplitStepper(op, Nonlinearity.{nl}, 0.5 * g.dx)
x = g.x
u, v = 0.5 * np.exp(-x**2) + 0j, 0.3 * np.exp(-x**2) + 0j
u, v = st.step(u, v)
t = time.perf_counter()
for _ in range({steps}):
    u, v = st.step(u, v)
print(json.dumps({{"backend": BACKEND, "per_step": (time.perf_counter() - t) / {steps}}}))
"""


def _data(n, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return 0.3 * u, 0.3 * v


def bench_kernels(sizes, repeat):
    cases = {
        "sextic": Nonlinearity.feshbach_sextic(1.0).coef,
        "gross_neveu": Nonlinearity.gross_neveu(1.0).coef,
    }
    rows = []
    for n in sizes:
        u, v = _data(n)
        beta = -0.6 / np.cosh(np.linspace(-40, 40, n)) ** 2
        gamma = np.zeros(n)
        for label, coef in cases.items():
            rot = coef[2] == 0 and coef[3] == 0
            jobs = {
                "nonlinearity": (kernels.nonlinearity_numpy, kernels.nonlinearity_loop, (u, v, coef)),
                "hessian_blocks": (kernels.hessian_blocks_numpy, kernels.hessian_blocks_loop, (u, v, coef)),
                "local_flow": (kernels.local_flow_numpy, kernels.local_flow_loop,
                               (u, v, beta, gamma, coef, 0.05, rot, 2)),
            }
            for name, (fnp, floop, args) in jobs.items():
                t_np = min(timeit.repeat(lambda: fnp(*args), number=1, repeat=repeat))
                if HAVE_NUMBA:
                    floop(*args)  # compile
                    t_nb = min(timeit.repeat(lambda: floop(*args), number=1, repeat=repeat))
                    agree = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
                                for a, b in zip(fnp(*args), floop(*args)))
                else:
                    t_nb, agree = float("nan"), float("nan")
                rows.append((n, label, name, t_np, t_nb, agree))
    return rows


def bench_steps(n, steps, nl):
    out = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, DGL_BACKEND=backend)
        code = STEP_SNIPPET.format(n=n, steps=steps, nl=nl)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[backend] = json.loads(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[512, 2048, 8192])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args(argv)

    print(f"{'n':>6} {'nonlinearity':>12} {'kernel':>15} {'numpy [us]':>11} {'numba [us]':>11} {'speedup':>8}"
          f" {'max diff':>9}")
    for n, label, name, t_np, t_nb, agree in bench_kernels(args.sizes, args.repeat):
        print(f"{n:6d} {label:>12} {name:>15} {1e6 * t_np:11.1f} {1e6 * t_nb:11.1f} {t_np / t_nb:8.2f}"
              f" {agree:9.1e}")

    print()
    for nl in ("feshbach_sextic(1.0)", "gross_neveu(1.0)"):
        for n in args.sizes:
            r = bench_steps(n, args.steps, nl)
            a, b = r["numpy"]["per_step"], r["numba"]["per_step"]
            print(f"split step n={n:6d} {nl:>22}: numpy {1e6 * a:9.1f} us  numba ({r['numba']['backend']}) "
                  f"{1e6 * b:9.1f} us  speedup {a / b:5.2f}")


if __name__ == "__main__":
    main()
