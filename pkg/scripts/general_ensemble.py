"""General case (random service times, finite speed) ensemble.

    python scripts/general_ensemble.py --service exp --v 1 --runs 100
"""

import argparse
import time

from greedywalk.dynamics import SimConfig
from greedywalk.experiments import run_ensemble


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--steps", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--service", default="exp")
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="results/general")
    a = p.parse_args()
    cfg = SimConfig(case="general", service=a.service, v=a.v, horizon=a.steps, seed=a.seed)
    t0 = time.perf_counter()
    s = run_ensemble(cfg, a.runs, workers=a.workers)
    s.write(a.out, "general")
    print(f"{a.runs} runs in {time.perf_counter() - t0:.1f}s: mean slope vs log t = "
          f"{s.mean_slope:.4f}, median ratio = {s.median_ratio:.3f}")


if __name__ == "__main__":
    main()
