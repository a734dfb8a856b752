"""Law of the first step from the flat start, for a few intensities.

    python scripts/first_step.py --samples 100000 --lams 0.5,1,2
"""

import argparse

from greedywalk.experiments import first_step_law


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--samples", type=int, default=10**5)
    p.add_argument("--lams", default="0.5,1,2")
    p.add_argument("--seed", type=int, default=5)
    a = p.parse_args()
    print("lam   KS stat   KS p    left frac   side z")
    for lam in (float(x) for x in a.lams.split(",")):
        r = first_step_law(a.samples, lam, seed=a.seed)
        print(f"{lam:<5} {r.ks_stat:.5f}  {r.ks_p:.3f}   {r.left_fraction:.4f}     {r.side_z:+.2f}")


if __name__ == "__main__":
    main()
