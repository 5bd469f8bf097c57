"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--n 50] [--rows 512] [--repeat 3]

Times a full batch of uniform random masked rollouts (mask + step kernels) on a
few variants, plus the min-plus closure used for asymmetric instances, and
checks that both backends produce identical results.
"""

import argparse
import time

import numpy as np

from unirouting import _accel, generate_instance, make_spec
from unirouting.closure import min_plus_closure
from unirouting.feasibility.batch import BatchEnv, EnvStatic
from unirouting.feasibility.rollout import Trace, expand_starts, run, uniform_choice

VARIANTS = ("TSP", "CVRP", "OCVRPBLTW", "MDCVRPTW", "PDCVRP", "OP")


def rollout_batch(instances, rows, seed):
    static = EnvStatic(instances)
    rng = np.random.default_rng(seed)
    per = []
    for b in range(len(instances)):
        options = static.default_starts(b)
        per.append([options[i] for i in rng.integers(0, len(options), size=rows // len(instances))])
    inst, depots, firsts = expand_starts(static, per)
    env = BatchEnv.start(static, inst, depots, firsts)
    trace = Trace(env, depots, firsts)
    run(env, uniform_choice(rng), trace)
    return env.objective()


def timed(fn, repeat):
    fn()  # warm-up (includes JIT compilation)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--rows", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'case':<14}{'numba ms':>10}{'numpy ms':>10}{'speed-up':>10}  identical")
    for name in VARIANTS:
        instances = [generate_instance(make_spec(name, args.n), s) for s in range(8)]
        res = {}
        for backend in ("numba", "numpy"):
            _accel.set_backend(backend)
            res[backend] = timed(lambda: rollout_batch(instances, args.rows, 1), args.repeat)
        same = np.array_equal(res["numba"][1], res["numpy"][1])
        t_jit, t_np = res["numba"][0] * 1e3, res["numpy"][0] * 1e3
        print(f"{name:<14}{t_jit:>10.1f}{t_np:>10.1f}{t_np / t_jit:>10.1f}  {same}")
    raw = np.random.default_rng(0).random((args.n * 2, args.n * 2))
    np.fill_diagonal(raw, 0.0)
    res = {}
    for backend in ("numba", "numpy"):
        res[backend] = timed(lambda: min_plus_closure(raw, backend=backend), args.repeat)
    same = np.array_equal(res["numba"][1], res["numpy"][1])
    t_jit, t_np = res["numba"][0] * 1e3, res["numpy"][0] * 1e3
    print(f"{'closure':<14}{t_jit:>10.2f}{t_np:>10.2f}{t_np / t_jit:>10.1f}  {same}")


if __name__ == "__main__":
    main()
