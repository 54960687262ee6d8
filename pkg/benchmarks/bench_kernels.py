"""Time the compiled and numpy kernel backends on a synthetic activity tensor.

    python benchmarks/bench_kernels.py --clients 200 --labels 22 --slices 16 --rank 25

Each backend is checked against the other before timing.
"""

import argparse
import timeit

import numpy as np

from cpoptnet import kernels
from cpoptnet.cpopt import _objective_and_gradient
from cpoptnet.ingest import synth_generate
from cpoptnet.tensor import flatten, random_kruskal


def time_call(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.2:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--clients", type=int, default=200)
    ap.add_argument("--labels", type=int, default=22)
    ap.add_argument("--slices", type=int, default=16)
    ap.add_argument("--rank", type=int, default=25)
    ap.add_argument("--sparsity", type=float, default=0.8)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    shape = (args.clients, args.labels, args.slices)
    t, _ = synth_generate(shape, args.rank, 0.1, args.sparsity, seed=args.seed)
    k = random_kruskal(shape, args.rank, np.random.default_rng(args.seed))
    backends = kernels.available_backends()
    print(f"shape {shape}, nnz {t.nnz}, rank {args.rank}, backends {backends}")

    ref = [kernels.sparse_mttkrp(t.indices, t.values, *k.factors, m, backend="python")
           for m in range(3)]
    for b in backends:
        for m in range(3):
            got = kernels.sparse_mttkrp(t.indices, t.values, *k.factors, m, backend=b)
            assert np.allclose(got, ref[m], rtol=1e-12, atol=1e-12), (b, m)

    x = flatten(k)
    norm_sq = t.norm_sq()
    timings = {}
    for b in backends:
        timings[b] = {
            "inner": time_call(
                lambda: kernels.sparse_inner(t.indices, t.values, *k.factors, backend=b), args.repeat),
            "mttkrp": time_call(
                lambda: kernels.sparse_mttkrp(t.indices, t.values, *k.factors, 0, backend=b),
                args.repeat),
        }

    # full objective + gradient through whichever backend the solver selected
    timings["solver"] = {"f+grad": time_call(
        lambda: _objective_and_gradient(x, t, args.rank, norm_sq), args.repeat)}

    print(f"{'kernel':<10}" + "".join(f"{b:>14}" for b in backends))
    for name in ("inner", "mttkrp"):
        row = "".join(f"{timings[b][name] * 1e3:>12.3f}ms" for b in backends)
        print(f"{name:<10}{row}")
    if len(backends) == 2:
        for name in ("inner", "mttkrp"):
            speedup = timings["python"][name] / timings["cython"][name]
            print(f"{name} speedup cython/python: {speedup:.1f}x")
    print(f"objective+gradient ({kernels.BACKEND}): {timings['solver']['f+grad'] * 1e3:.3f}ms")


if __name__ == "__main__":
    main()
