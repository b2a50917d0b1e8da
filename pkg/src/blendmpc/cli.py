"""Command-line entry point: ``run``, ``sweep``, ``bound`` and ``validate-checkpoint``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from . import harness, theory
from .qnet import load_checkpoint
from .trainer import lambda_at, validate

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def parse_range(text: str) -> list[int]:
    """``"1..128"`` (inclusive), ``"1,2,4"`` or a single integer."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty range {text!r}")
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def parse_values(text: str) -> list:
    out = []
    for v in text.split(","):
        v = v.strip()
        if not v:
            continue
        out.append(int(v) if v.lstrip("-").isdigit() else float(v))
    return out


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blendmpc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--steps", type=int)

    common(sub.add_parser("run", help="run one experiment (or its [sweep] table, if present)"))
    sp = sub.add_parser("sweep", help="run the experiment once per axis value")
    common(sp)
    sp.add_argument("--axis", choices=harness.SWEEP_AXES)
    sp.add_argument("--values", help="comma-separated axis values")

    bp = sub.add_parser("bound", help="tabulate the H-step bound as CSV")
    bp.add_argument("--alpha", type=float, required=True)
    bp.add_argument("--epsilon", type=float, required=True)
    bp.add_argument("--gamma", type=float, required=True)
    bp.add_argument("--H", dest="H", default="1..64", help="e.g. 1..128 or 1,2,4,8")
    bp.add_argument("--c-min", type=float, default=0.0)
    bp.add_argument("--c-max", type=float, default=1.0)
    bp.add_argument("--V-min", type=float, default=0.0)
    bp.add_argument("--V-max", type=float, default=1.0)

    vp = sub.add_parser("validate-checkpoint", help="evaluate a saved Q network")
    common(vp)
    vp.add_argument("--checkpoint", required=True)
    vp.add_argument("--lambda", dest="lam", type=float,
                    help="blending lambda (default: the schedule's final value)")
    return p


def _bound(args) -> int:
    try:
        hs = parse_range(args.H)
        b = theory.BoundInputs(args.alpha, args.epsilon, args.gamma, hs[0] if hs else 1,
                               args.c_min, args.c_max, args.V_min, args.V_max)
        curve = theory.bound_tradeoff_curve(b, hs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["H", "bound", "cost_model", "value_model", "one_step_model", "value_error"])
    for r in curve.rows:
        t = r.terms
        w.writerow([r.H, repr(r.bound), repr(t.cost_model), repr(t.value_model), repr(t.one_step_model),
                    repr(t.value_error)])
    w.writerow(["# argmin_H", curve.argmin_H])
    w.writerow(["# H_star", "undefined" if curve.h_star is None else repr(curve.h_star)])
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.command == "bound":
        return _bound(args)
    try:
        cfg = harness.load_config(args.config, seed=args.seed, steps=args.steps, out=args.out)
        if args.command == "sweep":
            axis = args.axis or cfg.sweep_axis
            values = parse_values(args.values) if args.values is not None else None
            if axis is None:
                raise harness.ConfigError("sweep needs --axis or a [sweep] table")
            if values is None:
                values = cfg.sweep_values if axis == cfg.sweep_axis else ()
            if not values:
                raise harness.ConfigError(f"sweep axis {axis!r} has no values")
    except (harness.ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run" and cfg.sweep_axis is None:
            outcome = harness.run_experiment(cfg)
            print(outcome.out_dir / "aggregate.csv")
        elif args.command in ("run", "sweep"):
            if args.command == "run":
                axis, values = cfg.sweep_axis, cfg.sweep_values
            root, _ = harness.run_sweep(cfg, axis, values)
            print(root / "summary.csv")
        else:
            net, _ = load_checkpoint(args.checkpoint)
            tcfg = cfg.for_seed(cfg.seeds[0])
            lam = args.lam if args.lam is not None else lambda_at(tcfg.schedule, tcfg.total_steps)
            v = validate(net, lam, tcfg)
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(["lambda", "mean_reward", "stderr", "success_rate"])
            w.writerow([repr(lam), repr(v.mean_reward), repr(v.stderr), repr(v.success_rate)])
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
