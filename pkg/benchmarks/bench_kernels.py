#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Two views:
- microbenchmarks of each kernel at sentence-scale shapes (short index
  vectors, 25-300 dims), where per-call overhead dominates;
- one macro run: attention weights + composition for a batch of synthetic
  sentences through each backend.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from attnsent import kernels


def timeit(fn, inner, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def micro_cases(rng):
    cases = []
    for n, d, rows in ((8, 25, 200), (40, 300, 2000)):
        matrix = rng.normal(size=(rows, d))
        tag_matrix = rng.normal(size=(12, d))
        ids = rng.integers(0, rows, size=n).astype(np.intp)
        tag_ids = rng.integers(0, 12, size=n).astype(np.intp)
        weights = rng.uniform(0.1, 1.0, size=n)
        scores = rng.normal(size=n)
        vec = rng.normal(size=d)
        out = np.zeros((rows, d))
        label = f"n={n:2d} d={d:3d}"
        cases += [
            (f"softmax          {label}", lambda m, s=scores: m.softmax(s)),
            (f"pair_dots        {label}",
             lambda m, a=matrix, i=ids, b=tag_matrix, j=tag_ids: m.pair_dots(a, i, b, j)),
            (f"weighted_rowsum  {label}",
             lambda m, a=matrix, i=ids, w=weights: m.weighted_rowsum(a, i, w, 0.125)),
            (f"scatter_add_rows {label}",
             lambda m, o=out, i=ids, w=weights, v=vec: m.scatter_add_rows(o, i, w, v)),
            (f"cosine           {label}",
             lambda m, a=matrix[0], b=matrix[1]: m.cosine(a, b)),
        ]
    return cases


def macro_embed(mod, sentences, emb, tags):
    total = 0.0
    for word_ids, tag_ids in sentences:
        logits = mod.pair_dots(emb, word_ids, tags, tag_ids)
        weights = mod.softmax(logits)
        vec = mod.weighted_rowsum(emb, word_ids, weights, 1.0 / len(word_ids))
        total += vec[0]
    return total


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--inner", type=int, default=2000)
    args = parser.parse_args()

    names = kernels.available_backends()
    if len(names) < 2:
        print("compiled backend not built; benchmarking the fallback only")
    mods = {name: kernels.backend_module(name) for name in names}
    rng = np.random.default_rng(0)

    print(f"{'kernel':34s}" + "".join(f"{n:>12s}" for n in names) +
          ("       ratio" if len(names) == 2 else ""))
    for label, call in micro_cases(rng):
        times = [timeit(lambda m=mods[n]: call(m), args.inner, args.repeats)
                 for n in names]
        row = f"{label:34s}" + "".join(f"{t * 1e6:10.2f}us" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:11.1f}x"
        print(row)

    # macro: 2000 synthetic sentences, d=25 (the training regime)
    d, rows = 25, 400
    emb = rng.normal(size=(rows, d))
    tags = rng.normal(size=(12, d))
    sentences = []
    for _ in range(2000):
        n = int(rng.integers(4, 13))
        sentences.append((
            rng.integers(0, rows, size=n).astype(np.intp),
            rng.integers(0, 12, size=n).astype(np.intp),
        ))
    print()
    times = []
    for name in names:
        mod = mods[name]
        t = timeit(lambda: macro_embed(mod, sentences, emb, tags), 1,
                   max(args.repeats, 3))
        times.append(t)
        print(f"embed 2000 sentences ({name:7s}): {t * 1e3:8.1f} ms")
    if len(times) == 2:
        print(f"speedup (python / {names[0]}): {times[1] / times[0]:.1f}x")


if __name__ == "__main__":
    main()
