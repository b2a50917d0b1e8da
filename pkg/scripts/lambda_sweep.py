"""Fixed-lambda sweep under planner bias; prints final-window reward per lambda and seed.

    python scripts/lambda_sweep.py --values 1.0,0.9,0.8,0.6 --out runs/lambda
"""

import argparse
import logging

from blendmpc import harness
from blendmpc.cli import parse_values


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/cartpole_lambda_fixed_sweep.toml")
    p.add_argument("--values", default="1.0,0.9,0.8,0.6")
    p.add_argument("--out", default="runs/lambda")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")
    cfg = harness.load_config(args.config, out=args.out)
    _, rows = harness.run_sweep(cfg, "lambda_fixed", parse_values(args.values))
    print("lambda,seed,final_window_reward")
    for r in rows:
        for seed, value in r["per_seed"].items():
            print(f"{r['value']},{seed},{value:.2f}")


if __name__ == "__main__":
    main()
