"""Compare the compiled and pure-Python kernels on representative workloads.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import timeit

import numpy as np

from quakesurrogate.signals import Waveform
from quakesurrogate.solver import SDOFParams, default_building, newmark_mdof, newmark_sdof
from quakesurrogate.solver import kernels


def workloads():
    rng = np.random.default_rng(0)
    gm = Waveform(3.0 * rng.standard_normal(4096), 0.01)
    sdof = SDOFParams(1.0, 2.41, 0.032, 4.33, 0.37)
    b4 = default_building(n_stories=4)
    b20 = default_building()
    n = 1 << 18
    p, g = rng.standard_normal(n), rng.standard_normal(n)
    m, v = np.zeros(n), np.zeros(n)
    mask = (rng.random(n) > 0.1).astype(np.float64)

    def adam(be):
        kernels.get_backend(be).adam_update(p, g, m, v, mask, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)

    return {
        "sdof_newmark 4096 steps": lambda be: newmark_sdof(sdof, gm, backend=be),
        "mdof_newmark 4-story 4096 steps": lambda be: newmark_mdof(b4, gm, backend=be),
        "mdof_newmark 20-story 4096 steps": lambda be: newmark_mdof(b20, gm, backend=be),
        f"adam_update {n} params": adam,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["python"] + (["cython"] if kernels.compiled_backend is not None else [])
    print(f"{'workload':36s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for name, fn in workloads().items():
        times = []
        for be in backends:
            times.append(min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat)))
        speed = times[0] / times[-1] if len(times) > 1 else math.nan
        print(f"{name:36s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + f"{speed:11.1f}x")


if __name__ == "__main__":
    main()
