"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--signals 200] [--trees 100]

Times the three hot paths (indicator vectors, tree growing, tree
prediction) on each available backend and checks that both produce the
same output.
"""
import argparse
import time

import numpy as np

from indagg import backend
from indagg.forest import ForestParams, predict_many, train_forest
from indagg.indicators import build_grid, compute_matrix
from indagg.signals import DatasetSpec, gen_dataset


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--signals", type=int, default=200)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    names = backend.available()
    spec = DatasetSpec.scaled("A", 7, args.signals / 6000)
    signals = gen_dataset(spec)
    grid = build_grid()
    params = ForestParams(n_trees=args.trees, seed=7)
    print(f"{len(signals)} signals, {len(grid)} indicators, {args.trees} trees; backends: {', '.join(names)}")

    results = {}
    for name in names:
        k = backend.load(name)
        t_ind, mat = best_of(lambda: compute_matrix(signals, grid, kernels=k), args.repeat)
        t_fit, forest = best_of(lambda: train_forest(mat, params, kernels=k), args.repeat)
        t_pred, pred = best_of(lambda: predict_many(forest, mat.bits, kernels=k), args.repeat)
        results[name] = (t_ind, t_fit, t_pred, mat, forest, pred)

    print(f"{'stage':<22}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for i, stage in enumerate(["indicator matrix", "forest training", "forest prediction"]):
        row = [results[n][i] for n in names]
        line = f"{stage:<22}" + "".join(f"{t:>11.3f}s" for t in row)
        if len(names) == 2:
            line += f"{row[1] / row[0]:>11.1f}x"
        print(line)

    if len(names) == 2:
        a, b = (results[n] for n in names)
        same_bits = np.array_equal(a[3].bits, b[3].bits)
        same_trees = all(np.array_equal(getattr(a[4], f), getattr(b[4], f))
                         for f in ("feature", "left", "right", "value", "offsets"))
        same_pred = np.array_equal(a[5][0], b[5][0])
        print(f"identical output: matrix {same_bits}, trees {same_trees}, predictions {same_pred}")
        return 0 if same_bits and same_trees and same_pred else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
