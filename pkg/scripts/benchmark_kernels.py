"""Compare the compiled and pure-Python simplex pivot kernels.

Times solve_lp on a batch of random dense LPs and on the ACC robust-MPC
program with each kernel, verifying that both return identical results.

Usage: python3 scripts/benchmark_kernels.py [--iters N]
"""

import argparse
import time

import numpy as np

from oic import acc, lp


def random_lps(count, seed=0):
    rng = np.random.default_rng(seed)
    problems = []
    for _ in range(count):
        n = int(rng.integers(4, 12))
        m = int(rng.integers(n, 3 * n))
        G = rng.normal(size=(m, n))
        h = rng.uniform(0.5, 2.0, size=m)  # feasible at the origin
        c = rng.normal(size=n)
        # box constraints keep the LP bounded
        G = np.vstack([G, np.eye(n), -np.eye(n)])
        h = np.concatenate([h, np.full(2 * n, 10.0)])
        problems.append((c, G, h))
    return problems


def bench_random(problems, kernel, iters):
    t0 = time.perf_counter()
    results = []
    for _ in range(iters):
        results = [lp.solve_lp(c, G, h, kernel=kernel) for c, G, h in problems]
    return (time.perf_counter() - t0) / iters, results


def bench_rmpc(kernel, iters):
    sys_, cfg = acc.build_acc_system()
    ctrl = cfg.controller(sys_)
    rng = np.random.default_rng(1)
    xs = [np.array([rng.uniform(140, 160), rng.uniform(35, 45)])
          for _ in range(iters)]
    t0 = time.perf_counter()
    values = []
    for x in xs:
        g = ctrl.g_const - ctrl.Gx0 @ x
        res = lp.solve_lp(ctrl.c, ctrl.G, g, nonneg=ctrl.nonneg, kernel=kernel)
        values.append(res.value)
    return (time.perf_counter() - t0) / iters, values


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=5)
    ap.add_argument("--lps", type=int, default=200)
    args = ap.parse_args()

    print(f"active kernel at import: {lp.KERNEL}")
    problems = random_lps(args.lps)
    times, values = {}, {}
    for kernel in ("python", "compiled"):
        try:
            dt, res = bench_random(problems, kernel, args.iters)
        except ValueError as exc:
            print(f"{kernel}: unavailable ({exc})")
            continue
        times[kernel] = dt
        values[kernel] = [(r.status, r.value) for r in res]
        print(f"{kernel:9s} {args.lps} random LPs: {dt * 1e3:8.1f} ms/pass")
    if len(values) == 2:
        assert values["python"] == values["compiled"], "kernel results differ"
        print(f"speedup on random LPs: {times['python'] / times['compiled']:.1f}x")

    for kernel in ("python", "compiled"):
        try:
            dt, vals = bench_rmpc(kernel, 20)
        except ValueError as exc:
            continue
        times[f"rmpc_{kernel}"] = dt
        values[f"rmpc_{kernel}"] = vals
        print(f"{kernel:9s} MPC solve: {dt * 1e3:8.2f} ms/solve")
    if "rmpc_python" in values and "rmpc_compiled" in values:
        assert np.allclose(values["rmpc_python"], values["rmpc_compiled"])
        print("identical optimal values across kernels: verified")
        print(f"speedup on MPC solves: "
              f"{times['rmpc_python'] / times['rmpc_compiled']:.1f}x")


if __name__ == "__main__":
    main()
