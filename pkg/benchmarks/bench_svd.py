"""Time the compiled and pure-Python Jacobi SVD backends on random matrices.

    python benchmarks/bench_svd.py [--repeats N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from deal.numerics import Rng, svd
from deal.numerics._backend import compiled_jacobi_sweeps

SHAPES = ((8, 4), (32, 8), (32, 16), (64, 32), (128, 64))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    backends = ["python"] + (["compiled"] if compiled_jacobi_sweeps is not None else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the Python backend only")
    print(f"{'shape':>10} " + " ".join(f"{b + ' ms':>12}" for b in backends) + f" {'speedup':>8} {'max |dS|':>10}")
    for m, n in SHAPES:
        a = Rng(0, (m, n)).normal((m, n))
        times, values = {}, {}
        for b in backends:
            values[b] = svd(a, backend=b).S
            times[b] = 1e3 * min(timeit.repeat(lambda: svd(a, backend=b), number=1, repeat=args.repeats))
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        diff = float(np.max(np.abs(values["python"] - values.get("compiled", values["python"]))))
        print(f"{m:>4} x {n:<4} " + " ".join(f"{times[b]:>12.3f}" for b in backends) + f" {speed:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
