"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from stewart_stack import _kernels_py
from stewart_stack.geometry import PlatformGeometry

try:
    from stewart_stack import _kernels as _compiled
except ImportError:
    _compiled = None


def cases():
    rng = np.random.default_rng(0)
    geom = PlatformGeometry.symmetric()
    top, bottom = geom.leg_nodes()
    batch = rng.normal(size=(10000, 4, 3)) * [1.0, 1.0, 0.005] + [0.0, 350.0, 0.0]
    stack = np.column_stack([rng.normal(0, 60, 4), rng.uniform(300, 480, 4), rng.normal(0, 0.3, 4)])
    args = (0.0, top, bottom, geom.l_min, geom.l_max, np.sin(geom.theta_min))
    return {
        "forward_batch (10000 x 4)": lambda k: k.forward_batch(batch),
        "leg_constraints (4 platforms)": lambda k: k.leg_constraints(stack, *args),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = [("python", _kernels_py)] + ([("cython", _compiled)] if _compiled else [])
    if _compiled is None:
        print("compiled kernels not built; timing the numpy fallback only")
    for name, fn in cases().items():
        times = {}
        for label, mod in backends:
            number = 20 if "batch" in name else 2000
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat))
            times[label] = best / number
        line = "  ".join(f"{label} {t * 1e6:9.1f} us" for label, t in times.items())
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:32s} {line}  speedup {speedup:5.1f}x")


if __name__ == "__main__":
    main()
