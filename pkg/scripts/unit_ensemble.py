"""Unit-case ensemble: |S_n| against log n over many seeded runs.

    python scripts/unit_ensemble.py --runs 200 --steps 1000000 --out results/unit
"""

import argparse
import time

from greedywalk.dynamics import SimConfig
from greedywalk.experiments import run_ensemble


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--steps", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--restart-eps", type=float, default=None,
                   help="also scan every run for blocks at this epsilon")
    p.add_argument("--out", default="results/unit")
    a = p.parse_args()
    t0 = time.perf_counter()
    s = run_ensemble(SimConfig(lam=a.lam, horizon=a.steps, seed=a.seed), a.runs,
                     restart_eps=a.restart_eps, workers=a.workers)
    paths = s.write(a.out, "unit")
    print(f"{a.runs} runs x {a.steps} steps in {time.perf_counter() - t0:.1f}s")
    print(f"median |S| lam/log t = {s.median_ratio:.3f}, mean slope = {s.mean_slope:.4f}, "
          f"positive = {s.positive_fraction:.3f}, flips = {s.flip_fraction:.3f}")
    print("wrote", ", ".join(map(str, paths.values())))


if __name__ == "__main__":
    main()
