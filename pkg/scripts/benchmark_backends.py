#!/usr/bin/env python3
"""Benchmark the compiled best-response loop against the pure-numpy fallback.

Runs the batched multi-start projected-gradient solver on polynomial
additive models of increasing population size with both backends and prints a
timing table plus the worst result deviation.

    python3 scripts/benchmark_backends.py [--sizes 1000 10000 100000] [--nodes 5]
"""

import argparse
import time

import numpy as np

from stratdag import NodeFunction, NoiseSpec, SeparableCost
from stratdag._backend import _c_loop, have_extension
from stratdag._flatten import flatten_mechanism, flatten_scm
from stratdag._respond_py import Problem, make_starts, py_loop
from stratdag.mechanisms import IsolationMechanism
from stratdag.observe import fit_conditional, natural_distribution
from stratdag.scm import AdditiveScm


def build_case(n_features, rng):
    funcs = [NodeFunction((), ())]
    for j in range(1, n_features + 1):
        funcs.append(NodeFunction((j - 1,), ((rng.uniform(0.4, 0.9), rng.uniform(0.1, 0.3)),)))
    scm = AdditiveScm(n_features, tuple(funcs), tuple(NoiseSpec.gaussian(0, 1) for _ in range(n_features + 1)))
    d0 = natural_distribution(scm, "empirical", 20_000, seed=0)
    target = n_features // 2
    nbrs = tuple(sorted(scm.graph().skeleton.neighbors(target)))
    ghat = fit_conditional(d0, target, nbrs, family="poly", degree=2)
    mech = IsolationMechanism(target, ghat)
    return scm, mech


def time_loop(loop, problem, whiten, radius, starts, iters, repeats=3):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = loop(problem, "l2", whiten, radius, starts, iters)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    parser.add_argument("--nodes", type=int, default=5)
    parser.add_argument("--iters", type=int, default=25)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    scm, mech = build_case(args.nodes, rng)
    fs = flatten_scm(scm)
    fm = flatten_mechanism(mech, scm.n)
    cost = SeparableCost.quadratic(rng.uniform(0.5, 2.0, scm.n))
    kappa = np.array([t[0][0] for t in cost.terms])
    whiten = np.sqrt(kappa)
    radius = 1.0

    print(f"{'agents':>10} {'python (s)':>12} {'compiled (s)':>13} {'speedup':>9} {'max |dy|':>10}")
    for m in args.sizes:
        u = scm.draw_noise(m, 42)
        problem = Problem(fs, fm, u, cost.mutable())
        starts = make_starts(problem, "l2", whiten, radius, 2, seed=1)
        t_py, (y_py, _) = time_loop(py_loop, problem, whiten, radius, starts, args.iters)
        if have_extension():
            t_c, (y_c, _) = time_loop(_c_loop, problem, whiten, radius, starts, args.iters)
            dev = np.abs(y_py - y_c).max()
            print(f"{m:>10} {t_py:>12.4f} {t_c:>13.4f} {t_py / t_c:>8.1f}x {dev:>10.2e}")
        else:
            print(f"{m:>10} {t_py:>12.4f} {'n/a':>13} {'n/a':>9} {'n/a':>10}")
    if not have_extension():
        print("compiled extension not available; showing the fallback only")


if __name__ == "__main__":
    main()
