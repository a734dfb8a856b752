"""Walks started from a non-uniform initial intensity.

``--mu`` takes ``value@lo..hi`` pieces and a background value, for example
``3@0..10,1`` (intensity 3 on [0, 10], 1 elsewhere).

    python scripts/inhomogeneous_start.py --mu 3@0..10,1 --runs 100
"""

import argparse

from greedywalk.dynamics import SimConfig
from greedywalk.experiments import inhomogeneous_run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--mu", default="3@0..10,1")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--steps", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="results/inhomogeneous")
    a = p.parse_args()
    s = inhomogeneous_run(a.mu, SimConfig(horizon=a.steps, seed=a.seed), a.runs)
    s.write(a.out, "inhomogeneous")
    print(f"mu = {a.mu}: mean slope = {s.mean_slope:.4f}, "
          f"positive fraction = {s.positive_fraction:.3f}")


if __name__ == "__main__":
    main()
