"""Compare the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times each hot kernel on fixed inputs with both backends, then one full
episode per backend (in a subprocess, since the backend is chosen at import).
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pemsim import _kernels_py as py
from pemsim.world import Pose, Route, footprint

try:
    from pemsim import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None

EPISODE = """
import time
from pemsim.sim import run_episode
from pemsim.world import build_scenario
from pemsim.pem import PemConfig, ErrorGeneratorConfig, FalseNegativeConfig
from pemsim.policy import PolicyConfig
pem = PemConfig.uniform(ErrorGeneratorConfig(false_negative=FalseNegativeConfig(0.75, 1.0)))
sc = build_scenario("TC1", {"lead_speed": 10})
t0 = time.perf_counter()
for seed in range(10):
    run_episode(sc, pem, PolicyConfig(), seed)
print((time.perf_counter() - t0) / 10)
"""


def cases():
    rng = np.random.default_rng(0)
    boxes = [footprint(Pose(*rng.uniform(-3, 3, 2), float(rng.uniform(-3, 3)), 4.5, 1.8, 1.5))
             for _ in range(64)]
    pairs = list(zip(boxes[::2], boxes[1::2]))
    route = Route(((0, 0), (200, 0), (260, 60), (260, 300)))
    u = rng.random(100_000)
    return {
        "sat_overlap x32": lambda k: [k.sat_overlap(a, b) for a, b in pairs],
        "polygon_distance x32": lambda k: [k.polygon_distance(a, b) for a, b in pairs],
        "markov_run 1e5": lambda k: k.markov_run(0.1, 0.3, u, True),
        "project x32": lambda k: [k.project(route.points, route.cum_s, 100.0 + i, 3.0) for i in range(32)],
        "corridor_scan 40 steps": lambda k: k.corridor_scan(route.points, route.cum_s, 150.0, 6.0, 0.0, -1.5,
                                                            40, 0.1, 3.0, 100.0, 220.0),
    }


def episode_time(pure: bool) -> float:
    env = dict(os.environ, PEMSIM_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", EPISODE], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels are not built; only the fallback is available")
        return 1
    print(f"{'kernel':<26}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for name, fn in cases().items():
        res = {}
        for label, mod in (("python", py), ("cython", cy)):
            timer = timeit.Timer(lambda: fn(mod))
            n, _ = timer.autorange()
            res[label] = min(timer.repeat(args.repeat, n)) / n * 1e6
        print(f"{name:<26}{res['python']:>14.1f}{res['cython']:>14.1f}{res['python'] / res['cython']:>9.1f}x")
    tp, tc = episode_time(True), episode_time(False)
    print(f"{'TC1 episode (mean of 10)':<26}{tp * 1e6:>14.0f}{tc * 1e6:>14.0f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
