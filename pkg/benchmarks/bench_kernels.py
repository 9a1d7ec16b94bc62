"""Compiled kernels against the numpy fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N] [--json out.json]``.
Each kernel is timed on a workload taken from the experiments (K=4,
16-QAM where it applies) and the two outputs are checked for equality.
"""
import argparse
import json
import time

import numpy as np

from semac import _fallback
from semac.funcspace import InputDomain, TargetFunction, _all_index_tuples
from semac.powerad import _group_codes, _node_codes, fixed_modulation

try:
    from semac import _kernels
except ImportError:  # extension not built
    _kernels = None


def workloads(rng):
    table = rng.standard_normal((4096, 2)) + 1j * rng.standard_normal((4096, 2))
    y = table[rng.integers(0, 4096, 20000)] + 0.1 * rng.standard_normal((20000, 2))
    yield "nearest_index 20000x4096 L=2", "nearest_index", (y, table)

    pts = rng.standard_normal((3000, 2)) + 1j * rng.standard_normal((3000, 2))
    f = rng.integers(0, 40, 3000).astype(float)
    yield "pair_scan 3000 entries", "pair_scan", (pts, f, 0.01, 1e-7, 1e-6)

    mod = fixed_modulation("16-QAM", 4, 2)
    func = TargetFunction("product", InputDomain(4, list(range(1, 17))))
    codes = [_node_codes(mod.node_points(k)) for k in range(4)]
    pair_codes = [c[1] for c in codes]
    n_codes = [c[0].shape[0] for c in codes]
    code_a, _ = _group_codes(pair_codes, n_codes, [0, 1], 16)
    code_b, n_b = _group_codes(pair_codes, n_codes, [2, 3], 16)
    F = np.ascontiguousarray(func.of_indices(_all_index_tuples(16, 4)).reshape(256, 256))
    yield ("class_max_gap 16-QAM K=4", "class_max_gap",
           (F, code_a, code_b, n_b, int(np.prod(n_codes))))


def timed(fn, args, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        pairs = [sorted(map(tuple, x[1].tolist())) for x in (a, b)]
        return a[0] == b[0] and pairs[0] == pairs[1]
    return np.array_equal(a, b)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--json", help="write the timings to this file")
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'workload':34s} {'compiled s':>11s} {'numpy s':>9s} {'speedup':>8s}  equal")
    for label, name, work in workloads(rng):
        t_py, out_py = timed(getattr(_fallback, name), work, args.repeat)
        if _kernels is None:
            t_c, equal = float("nan"), None
        else:
            t_c, out_c = timed(getattr(_kernels, name), work, args.repeat)
            equal = bool(same(out_c, out_py))
        rows.append({"workload": label, "compiled_s": t_c, "numpy_s": t_py,
                     "speedup": t_py / t_c, "equal": equal})
        print(f"{label:34s} {t_c:11.4f} {t_py:9.4f} {t_py / t_c:8.1f}  {equal}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
