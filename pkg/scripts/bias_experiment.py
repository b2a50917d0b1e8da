"""Desk-scale bias experiment: true MPPI, biased MPPI and MPQ(lambda) on cartpole.

Runs the three shipped configs through the harness and prints the final-window
comparison per seed. Artifacts land under ``--out``.

    python scripts/bias_experiment.py --out runs/bias
"""

import argparse
import logging

import numpy as np

from blendmpc import harness


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/bias")
    p.add_argument("--configs", default="configs")
    p.add_argument("--steps", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")
    runs = {}
    for name in ("cartpole_mppi_true", "cartpole_mppi_biased", "cartpole_mpq_lambda"):
        cfg = harness.load_config(f"{args.configs}/{name}.toml", steps=args.steps, out=args.out)
        runs[name] = (cfg, harness.run_experiment(cfg))
    cfg, mpq = runs["cartpole_mpq_lambda"]
    _, biased = runs["cartpole_mppi_biased"]
    _, true = runs["cartpole_mppi_true"]
    print("seed,true_mppi,biased_mppi,mpq_final_window,margin_needed")
    for seed in cfg.seeds:
        mean, se = harness.final_window(mpq.curves[seed], cfg.final_window)
        base = biased.curves[seed][0]
        print(f"{seed},{true.curves[seed][0].mean_reward:.2f},{base.mean_reward:.2f},{mean:.2f},"
              f"{2 * np.hypot(se, base.stderr):.2f}")


if __name__ == "__main__":
    main()
