"""Time the compiled core against the numpy fallback on the hot kernels.

    python benchmarks/bench_backends.py [--repeat 3] [--quick]

Each row reports the best of ``--repeat`` runs for SMO training, modified
Gram-Schmidt and compensated squared distances.
"""
import argparse
import time

import numpy as np

from ppsvm import _fallback
from ppsvm.kernels import KernelSpec, gram

try:
    from ppsvm import _core
except ImportError:
    _core = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def smo_case(n, seed=0):
    gen = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 8 == 0, 1.0, -1.0)
    X = gen.standard_normal((n, 64)) / 8 + 0.05 * y[:, None]
    Q = np.ascontiguousarray(np.outer(y, y) * gram(KernelSpec.rbf(81.0), X))
    return lambda impl: impl.smo_solve(Q, y, 34.0, 1e-3, 100 * n * n, False)


def mgs_case(d, seed=0):
    A = np.random.default_rng(seed).standard_normal((d, d))
    return lambda impl: impl.mgs_orthonormalize(A, 1e-8)


def dist_case(rows, d, seed=0):
    gen = np.random.default_rng(seed)
    A, B = gen.standard_normal((rows, d)), gen.standard_normal((rows, d))
    return lambda impl: impl.sq_dists_compensated(A, B)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = p.parse_args(argv)

    if args.quick:
        cases = [("smo n=128", smo_case(128)), ("mgs d=128", mgs_case(128)),
                 ("sqdist 64x64 d=1216", dist_case(64, 1216))]
    else:
        cases = [("smo n=256", smo_case(256)), ("smo n=1152", smo_case(1152)),
                 ("mgs d=256", mgs_case(256)), ("mgs d=1216", mgs_case(1216)),
                 ("sqdist 256x256 d=1216", dist_case(256, 1216))]

    print(f"{'case':<24}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}")
    for name, case in cases:
        t_py = best_of(lambda: case(_fallback), args.repeat)
        if _core is None:
            print(f"{name:<24}{t_py:>12.4f}{'n/a':>14}{'':>10}")
            continue
        t_c = best_of(lambda: case(_core), args.repeat)
        print(f"{name:<24}{t_py:>12.4f}{t_c:>14.4f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
