"""Compare the tabulated arg-min horizon of the H-step bound with the closed-form H*.

Prints one CSV row per (alpha, epsilon, gamma) grid point where H* >= 2, then a
count of points whose arg-min lies within +-1 of round(H*).

    python scripts/horizon_agreement.py > agreement.csv
"""

import argparse
import csv
import sys

import numpy as np

from blendmpc.theory import BoundInputs, horizon_agreement


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--h-max", type=int, default=400)
    p.add_argument("--v-max", type=float, default=10.0)
    args = p.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["alpha", "epsilon", "gamma", "h_star", "argmin_H", "deviation"])
    agree = total = 0
    for gamma in (0.9, 0.95, 0.99):
        for alpha in (0.0, 0.001, 0.01, 0.05, 0.1):
            for eps in (0.1, 0.5, 1.0, 5.0):
                b = BoundInputs(alpha, eps, gamma, 1, 0.0, 1.0, 0.0, args.v_max)
                r = horizon_agreement(b, range(1, args.h_max + 1))
                if r["h_star"] is None or r["h_star"] < 2:
                    continue
                total += 1
                agree += abs(r["deviation"]) <= 1
                w.writerow([alpha, eps, gamma, f"{r['h_star']:.3f}", r["argmin_H"], r["deviation"]])
    print(f"# within +-1: {agree}/{total}", file=sys.stderr)


if __name__ == "__main__":
    main()
