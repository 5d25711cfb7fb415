"""Compare the compiled MI kernels against the NumPy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sides 20 100 400 --repeats 7

Tables are dense multinomial draws, the worst case for the expected-MI
sum whose window grows with the marginals.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from signet.attribution.kernels import backends


def random_table(rng: np.random.Generator, side: int, n: int) -> np.ndarray:
    cells = rng.multinomial(n, np.full(side * side, 1.0 / (side * side)))
    return cells.reshape(side, side).astype(np.int64)


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        times.append(time.perf_counter() - started)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sides", type=int, nargs="+", default=[10, 50, 200])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    impls = backends()
    names = sorted(impls)
    rng = np.random.default_rng(args.seed)

    header = f"{'kernel':<18} {'side':>5} " + " ".join(f"{n:>12}" for n in names)
    print(header)
    print("-" * len(header))
    for side in args.sides:
        table = random_table(rng, side, n=side * side * 20)
        rows = np.ascontiguousarray(table.sum(axis=1))
        cols = np.ascontiguousarray(table.sum(axis=0))
        total = int(table.sum())
        cases = {
            "mi_bits": lambda impl, t=table: impl.mi_bits(t),
            "expected_mi_bits": lambda impl, a=rows, b=cols, n=total: impl.expected_mi_bits(a, b, n),
            "entropy_bits": lambda impl, a=rows: impl.entropy_bits(a),
        }
        for kernel, call in cases.items():
            timings = {
                name: best_of(lambda impl=impls[name]: call(impl), args.repeats)
                for name in names
            }
            cells = " ".join(f"{timings[name] * 1e3:>10.3f}ms" for name in names)
            print(f"{kernel:<18} {side:>5} {cells}")
    if "compiled" in impls and "python" in impls:
        print("\nvalues agree:", end=" ")
        side = args.sides[-1]
        table = random_table(rng, side, n=side * side * 20)
        rows = np.ascontiguousarray(table.sum(axis=1))
        cols = np.ascontiguousarray(table.sum(axis=0))
        a = impls["compiled"].expected_mi_bits(rows, cols, int(table.sum()))
        b = impls["python"].expected_mi_bits(rows, cols, int(table.sum()))
        print(f"|compiled - python| = {abs(a - b):.3e}")


if __name__ == "__main__":
    main()
