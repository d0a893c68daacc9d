"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_backends.py [--repeat 5] [--n 2000]

Each case runs once per backend to warm up (JIT compilation is excluded),
then the best of ``--repeat`` timings is reported. Both backends are checked
to return the same result before timing.
"""

import argparse
import timeit

import numpy as np

from lanehouse import kernels, use_backend
from lanehouse.ingest import DesignMatrix
from lanehouse.models import FitConfig, fit_lasso, lasso_lambda_max
from lanehouse.trees import DecisionTree, ForestParams, TreeParams, fit_forest, fit_tree


def make_data(n: int, p: int, seed: int = 0) -> DesignMatrix:
    rng = np.random.Generator(np.random.PCG64(seed))
    # half one-hot style columns, half continuous, like the encoded listings
    x = np.column_stack([rng.integers(0, 2, size=(n, p // 2)), rng.normal(size=(n, p - p // 2))]).astype(float)
    y = x @ rng.normal(size=p) * 1000 + 8000 + rng.normal(size=n) * 500
    return DesignMatrix(x, y, tuple(f"x{j}" for j in range(p)))


def cases(d: DesignMatrix):
    xs_order = np.argsort(d.x[:, -1], kind="stable")
    xs, ys = d.x[xs_order, -1].copy(), d.y[xs_order] - d.y.mean()
    yc = d.y - d.y.mean()
    candidates = np.arange(d.p, dtype=np.int64)
    tree = DecisionTree(fit_tree(d, TreeParams(10, 5, 10)), TreeParams(10, 5, 10), d.p)
    lam = 0.01 * lasso_lambda_max(d)
    small_forest = ForestParams(TreeParams(10, 5, 10), 20, 1 / 3, 7)
    return {
        "split_scan": lambda: kernels.split_scan(xs, ys, 5),
        "node_split": lambda: kernels.node_split(d.x, yc, candidates, 5),
        "fit_tree (depth 10)": lambda: fit_tree(d, TreeParams(10, 5, 10)),
        "tree_predict": lambda: tree.predict(d.x),
        "fit_lasso (0.01 lambda_max)": lambda: fit_lasso(d, FitConfig(lam=lam)).coefficients,
        "fit_forest (20 trees)": lambda: fit_forest(d, small_forest).predict(d.x),
    }


def same(a, b) -> bool:
    if isinstance(a, (tuple, list)):
        return all(same(u, v) for u, v in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-10, atol=1e-12)
    return a == b


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--p", type=int, default=22)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    d = make_data(args.n, args.p)
    print(f"n={args.n} p={args.p}, best of {args.repeat}")
    print(f"{'case':<30}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}  agree")
    for name, fn in cases(d).items():
        timings, results = {}, {}
        for backend in ("numba", "numpy"):
            with use_backend(backend):
                results[backend] = fn()
                number = 1 if "forest" in name or "lasso" in name else 10
                best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
                timings[backend] = best * 1e3
        agree = same(results["numba"], results["numpy"])
        speedup = timings["numpy"] / timings["numba"] if timings["numba"] > 0 else float("inf")
        print(f"{name:<30}{timings['numba']:>12.3f}{timings['numpy']:>12.3f}{speedup:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
