#!/usr/bin/env python3
"""Benchmark the compiled stencil kernels against the pure-NumPy fallback.

Runs the forward and adjoint time-step kernels on a padded grid and reports
steps/second per backend plus the speedup.  The two backends implement the
same contract (see rtmcloud.wavekernel._stencil_py), so this is also a quick
sanity check that both produce matching fields.

Usage: python benchmarks/bench_wavekernel.py [--n 301] [--steps 300]
"""

import argparse
import importlib
import time

import numpy as np


def load_backends():
    backends = {}
    backends["python"] = importlib.import_module("rtmcloud.wavekernel._stencil_py")
    try:
        backends["cython"] = importlib.import_module("rtmcloud.wavekernel._stencil")
    except ImportError:
        print("compiled extension not built; benchmarking the fallback only")
    return backends


def make_fields(n, seed=0):
    rng = np.random.default_rng(seed)
    prv = np.zeros((n, n))
    cur = np.zeros((n, n))
    cur[2:-2, 2:-2] = rng.standard_normal((n - 4, n - 4)) * 1e-3
    nxt = np.zeros((n, n))
    w = np.zeros((n, n))
    vdt2 = np.full((n, n), (1500.0 * 0.0015) ** 2)
    mask = np.ones((n, n))
    mask[:2] = mask[-2:] = mask[:, :2] = mask[:, -2:] = 0.0
    return prv, cur, nxt, w, vdt2, mask


def run(impl, kind, n, steps):
    prv, cur, nxt, w, vdt2, mask = make_fields(n)
    inv_h2 = 1.0 / 10.0**2
    t0 = time.perf_counter()
    for _ in range(steps):
        if kind == "forward":
            impl.forward_step(prv, cur, nxt, vdt2, mask, inv_h2, inv_h2)
        else:
            impl.adjoint_step(prv, cur, nxt, w, vdt2, mask, inv_h2, inv_h2)
        prv, cur, nxt = cur, nxt, prv
    elapsed = time.perf_counter() - t0
    return steps / elapsed, cur


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=301, help="padded grid size (n x n)")
    ap.add_argument("--steps", type=int, default=300)
    args = ap.parse_args()

    backends = load_backends()
    results = {}
    for kind in ("forward", "adjoint"):
        print(f"\n{kind} step, {args.n}x{args.n} grid, {args.steps} steps")
        fields = {}
        for name, impl in backends.items():
            rate, final = run(impl, kind, args.n, args.steps)
            fields[name] = final
            results[(kind, name)] = rate
            print(f"  {name:>7}: {rate:8.1f} steps/s")
        if len(fields) == 2:
            diff = np.abs(fields["cython"] - fields["python"]).max()
            scale = np.abs(fields["python"]).max() or 1.0
            print(f"  max |cython - python| = {diff:.3e} (field scale {scale:.3e})")
            speedup = results[(kind, "cython")] / results[(kind, "python")]
            print(f"  speedup: {speedup:.1f}x")


if __name__ == "__main__":
    main()
