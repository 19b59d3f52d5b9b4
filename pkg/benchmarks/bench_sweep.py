"""Benchmark the heat-bath sweep: compiled kernel vs pure-Python fallback.

Runs the same conditioned sweep on both backends, checks the resulting
fields are bit-identical, and reports the speedup.  The backend is chosen
at import time, so each backend runs in its own subprocess.

Usage: python benchmarks/bench_sweep.py [--N 16] [--sweeps 20]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import hashlib, json, time
import numpy as np
from hardwall.kernels import BACKEND
from hardwall.lattice import ShapeSpec, build_domain
from hardwall.sampler import BoundaryCondition, make_state, heat_bath_sweep
from hardwall.wall import WallSpec, sample_wall

N, sweeps = {N}, {sweeps}
domain = build_domain(ShapeSpec(kind="ball", radius=1.0), N, 3)
wall = sample_wall(WallSpec(family="gaussian", seed=7, Q=1.0), domain)
state = make_state(domain, wall, BoundaryCondition(), seed=11, support="interior")
heat_bath_sweep(state)  # warm up caches and JIT-free import costs
t0 = time.perf_counter()
for _ in range(sweeps):
    heat_bath_sweep(state)
elapsed = time.perf_counter() - t0
print(json.dumps({{
    "backend": BACKEND,
    "sites": int(domain.n_sites),
    "box": list(domain.box_shape),
    "seconds_per_sweep": elapsed / sweeps,
    "field_sha256": hashlib.sha256(state.field_flat.tobytes()).hexdigest(),
}}))
"""


def run_backend(pure_python: bool, N: int, sweeps: int) -> dict:
    env = dict(os.environ)
    if pure_python:
        env["HARDWALL_PURE_PYTHON"] = "1"
    else:
        env.pop("HARDWALL_PURE_PYTHON", None)
    out = subprocess.run(
        [sys.executable, "-c", _WORKER.format(N=N, sweeps=sweeps)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--sweeps", type=int, default=20)
    args = ap.parse_args()

    compiled = run_backend(False, args.N, args.sweeps)
    fallback = run_backend(True, args.N, args.sweeps)

    print(f"domain: N={args.N}, {compiled['sites']} sites, box {compiled['box']}")
    for r in (compiled, fallback):
        print(f"  {r['backend']:>8}: {r['seconds_per_sweep'] * 1e3:8.2f} ms/sweep")
    if compiled["backend"] == fallback["backend"]:
        print("compiled extension unavailable; both runs used the fallback")
        return 1
    speedup = fallback["seconds_per_sweep"] / compiled["seconds_per_sweep"]
    print(f"speedup: {speedup:.1f}x")
    identical = compiled["field_sha256"] == fallback["field_sha256"]
    print(f"fields bit-identical: {identical}")
    return 0 if identical else 1


if __name__ == "__main__":
    sys.exit(main())
