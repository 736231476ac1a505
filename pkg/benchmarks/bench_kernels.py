"""Time the numba kernels against the pure-numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Both paths are
called directly (independent of ``SLIMTT_DISABLE_NUMBA``) and their outputs
are checked for bit equality before any timing is reported.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from slimtt import _kernels, models
from slimtt.master import pack_reactions


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    for n in (256, 1024):
        mat = rng.standard_normal((n, n))
        vec = rng.standard_normal(n)
        yield f"matvec n={n}", _kernels.matvec_numpy, _kernels.matvec_numba, (mat, vec)
    for label, rs in (
        ("generator toll d=4 n=5", models.build_toll(models.TollParams(d=4, n=5))),
        ("generator cascade d=3 n=12", models.build_cascade(models.CascadeParams(d=3, n=12))),
        ("generator co2 d=6", models.build_co_oxidation(models.CoOxidationParams(d=6))),
    ):
        packed = pack_reactions(rs)
        args = tuple(np.ascontiguousarray(a) for a in packed)
        yield label, _kernels.generator_numpy, _kernels.generator_numba, args


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _kernels.NUMBA_ENABLED:
        print("numba is unavailable or disabled; nothing to compare")
        return 0
    print(f"{'case':32s} {'numpy [s]':>12s} {'numba [s]':>12s} {'speedup':>9s}  equal")
    ok = True
    for label, f_np, f_nb, fargs in cases():
        f_nb(*fargs)  # compile outside the timed region
        same = bool(np.array_equal(f_np(*fargs), f_nb(*fargs)))
        ok &= same
        t_np = best_of(f_np, fargs, args.repeat)
        t_nb = best_of(f_nb, fargs, args.repeat)
        print(f"{label:32s} {t_np:12.5f} {t_nb:12.5f} {t_np / t_nb:9.1f}  {same}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
