"""Experiment configs, seeded runs, sweeps and CSV artifacts.

A config is a TOML file. ``include`` (a path or list of paths, relative to the
including file) is merged first and the including file's tables override it
key by key. Recognised tables: top level (``name``, ``agent``, ``seeds``,
``validation_seed``, ``out``, ``final_window``), ``[env]`` (cartpole
parameters plus ``bias``), ``[mppi]``, ``[schedule]``, ``[train]`` and an
optional ``[sweep]`` (``axis`` and ``values``).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .cartpole import CartpoleParams
from .mppi import MppiConfig
from .qnet import save_checkpoint
from .trainer import CurvePoint, LambdaSchedule, TrainConfig, train, validate

log = logging.getLogger(__name__)

AGENTS = ("mppi_true", "mppi_biased", "mpq_lambda")
SWEEP_AXES = ("lambda_fixed", "lambda_final", "horizon", "particles", "bias")
CURVE_COLUMNS = ("step", "lambda", "mean_reward", "stderr", "success_rate")


class ConfigError(ValueError):
    """A config file is malformed or names an unknown or invalid field."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    agent: str
    train: TrainConfig
    seeds: tuple[int, ...] = (0, 1, 2)
    out: str = "runs"
    final_window: int = 3
    sweep_axis: str | None = None
    sweep_values: tuple = ()

    def __post_init__(self):
        if self.agent not in AGENTS:
            raise ConfigError(f"agent: expected one of {AGENTS}, got {self.agent!r}")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds: duplicate seeds")
        if self.final_window < 1:
            raise ConfigError("final_window: must be >= 1")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"sweep.axis: expected one of {SWEEP_AXES}, got {self.sweep_axis!r}")
            if not self.sweep_values:
                raise ConfigError("sweep.values: axis values must be non-empty")

    @property
    def planning_bias(self) -> float:
        return 0.0 if self.agent == "mppi_true" else self.train.bias

    def for_seed(self, seed: int) -> TrainConfig:
        return replace(self.train, seed=seed, bias=self.planning_bias)

    def resolved(self) -> dict:
        """Plain-data view of the config, including which model each role uses."""
        t = self.train
        return {
            "name": self.name,
            "agent": self.agent,
            "seeds": list(self.seeds),
            "final_window": self.final_window,
            "executed_env": asdict(t.env),
            "planning_env": {**asdict(t.env), "bias": self.planning_bias},
            "mppi": asdict(t.mppi),
            "schedule": asdict(t.schedule),
            "train": {f.name: _plain(getattr(t, f.name)) for f in fields(TrainConfig)
                      if f.name not in ("env", "mppi", "schedule", "seed")},
            "sweep": {"axis": self.sweep_axis, "values": list(self.sweep_values)} if self.sweep_axis else None,
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def _plain(value):
    if isinstance(value, tuple):
        return list(value)
    return value


# ---------------------------------------------------------------- loading


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_raw(path, _seen: frozenset = frozenset()) -> dict:
    path = Path(path).resolve()
    if path in _seen:
        raise ConfigError(f"{path}: include cycle")
    try:
        data = tomli.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: no such config file") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    includes = data.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    merged: dict = {}
    for inc in includes:
        merged = _merge(merged, load_raw(path.parent / inc, _seen | {path}))
    return _merge(merged, data)


def _build(cls, table: dict, section: str, **extra):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"[{section}] unknown field(s): {', '.join(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}
    try:
        return cls(**kwargs, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


TOP_LEVEL = {"name", "agent", "seeds", "validation_seed", "out", "final_window",
             "env", "mppi", "schedule", "train", "sweep"}


def from_dict(raw: dict) -> ExperimentConfig:
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {', '.join(unknown)}")
    env_table = dict(raw.get("env", {}))
    b = env_table.pop("bias", -0.5)
    env = _build(CartpoleParams, env_table, "env")
    mppi = _build(MppiConfig, raw.get("mppi", {}), "mppi")
    train_table = dict(raw.get("train", {}))
    for key in ("env", "mppi", "schedule", "seed", "bias", "validation_seed"):
        if key in train_table:
            raise ConfigError(f"[train] field {key!r} belongs elsewhere")
    total = train_table.get("total_steps", TrainConfig.total_steps)
    sched_table = dict(raw.get("schedule", {}))
    sched_table.setdefault("total_steps", total)
    schedule = _build(LambdaSchedule, sched_table, "schedule")
    extra = {"env": env, "mppi": mppi, "schedule": schedule, "bias": b}
    if "validation_seed" in raw:
        extra["validation_seed"] = raw["validation_seed"]
    tcfg = _build(TrainConfig, train_table, "train", **extra)
    sweep = raw.get("sweep")
    axis, values = None, ()
    if sweep is not None:
        bad = sorted(set(sweep) - {"axis", "values"})
        if bad:
            raise ConfigError(f"[sweep] unknown field(s): {', '.join(bad)}")
        if "axis" not in sweep:
            raise ConfigError("[sweep] axis is required")
        axis, values = sweep["axis"], tuple(sweep.get("values", ()))
    try:
        return ExperimentConfig(
            name=raw.get("name", "experiment"),
            agent=raw.get("agent", "mpq_lambda"),
            train=tcfg,
            seeds=tuple(raw.get("seeds", (0, 1, 2))),
            out=raw.get("out", "runs"),
            final_window=raw.get("final_window", 3),
            sweep_axis=axis,
            sweep_values=values,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, seed: int | None = None, steps: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Parse a config file and apply the command-line overrides."""
    cfg = from_dict(load_raw(path))
    return apply_overrides(cfg, seed=seed, steps=steps, out=out)


def apply_overrides(cfg: ExperimentConfig, seed=None, steps=None, out=None) -> ExperimentConfig:
    if seed is not None:
        cfg = replace(cfg, seeds=(int(seed),))
    if steps is not None:
        if steps < 1:
            raise ConfigError("--steps must be >= 1")
        t = cfg.train
        sched = t.schedule
        if sched.kind == "sublinear_decay":
            sched = replace(sched, total_steps=steps)
        cfg = replace(cfg, train=replace(t, total_steps=steps, schedule=sched,
                                         validate_from=min(t.validate_from, steps)))
    if out is not None:
        cfg = replace(cfg, out=out)
    return cfg


def with_axis_value(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    t = cfg.train
    if axis == "lambda_fixed":
        t = replace(t, schedule=LambdaSchedule("constant", float(value), float(value), t.total_steps))
    elif axis == "lambda_final":
        s = t.schedule
        lam0 = s.lambda0 if s.kind == "sublinear_decay" else 1.0
        t = replace(t, schedule=LambdaSchedule("sublinear_decay", lam0, float(value), t.total_steps))
    elif axis == "horizon":
        t = replace(t, mppi=replace(t.mppi, horizon=int(value)))
    elif axis == "particles":
        t = replace(t, mppi=replace(t.mppi, n_particles=int(value)))
    elif axis == "bias":
        t = replace(t, bias=float(value))
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return replace(cfg, train=t, sweep_axis=None, sweep_values=())


# ---------------------------------------------------------------- artifacts


def curve_csv(points) -> str:
    """Render curve rows with round-trippable floats; identical inputs give identical bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for p in points:
        w.writerow([p.step, repr(float(p.lam)), repr(float(p.mean_reward)), repr(float(p.stderr)),
                    repr(float(p.success_rate))])
    return buf.getvalue()


def read_curve(path) -> list[CurvePoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [CurvePoint(int(r["step"]), float(r["lambda"]), float(r["mean_reward"]), float(r["stderr"]),
                       float(r["success_rate"])) for r in rows]


def aggregate(curves: list[list[CurvePoint]]) -> list[CurvePoint]:
    """Pointwise mean over seeds; stderr is the standard error of that mean."""
    steps = [p.step for p in curves[0]]
    if any([p.step for p in c] != steps for c in curves):
        raise ValueError("per-seed curves have different validation steps")
    out = []
    n = len(curves)
    for i, step in enumerate(steps):
        col = [c[i] for c in curves]
        out.append(CurvePoint(
            step,
            col[0].lam,
            float(np.mean([p.mean_reward for p in col])),
            float(np.sqrt(np.sum([p.stderr**2 for p in col])) / n),
            float(np.mean([p.success_rate for p in col])),
        ))
    return out


def final_window(curve: list[CurvePoint], k: int) -> tuple[float, float]:
    """Mean reward over the last ``k`` points and its (independence-assumed) stderr."""
    tail = curve[-k:]
    mean = float(np.mean([p.mean_reward for p in tail]))
    stderr = float(np.sqrt(np.sum([p.stderr**2 for p in tail])) / len(tail))
    return mean, stderr


def mppi_curve(tcfg: TrainConfig) -> list[CurvePoint]:
    """Validation curve of a non-learning planner.

    With no trainable state every validation would reproduce the same episodes,
    so one evaluation is repeated at each validation step.
    """
    v = validate(None, 1.0, tcfg)
    steps = [0] + [s for s in range(tcfg.validation_interval, tcfg.total_steps + 1, tcfg.validation_interval)
                   if s >= tcfg.validate_from]
    return [CurvePoint(s, 1.0, v.mean_reward, v.stderr, v.success_rate) for s in steps]


def code_version() -> str:
    root = Path(__file__).parent
    h = hashlib.sha256()
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


@dataclass
class RunOutcome:
    out_dir: Path
    elapsed_seconds: float = 0.0
    curves: dict[int, list[CurvePoint]] = field(default_factory=dict)
    aggregate: list[CurvePoint] = field(default_factory=list)
    status: str = "ok"


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunOutcome:
    """Run every seed, writing per-seed and aggregate CSVs plus metadata.

    On a mid-run failure the metadata records ``status = "failed"`` and the
    exception is re-raised after the completed seeds have been written.
    """
    out_dir = Path(out_dir if out_dir is not None else Path(cfg.out) / cfg.name)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.json").write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n")
    outcome = RunOutcome(out_dir)
    meta = {"config_hash": cfg.config_hash(), "code_version": code_version(), "seeds": list(cfg.seeds),
            "completed_seeds": [], "status": "running"}

    def write_meta():
        (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    write_meta()
    started = time.perf_counter()
    try:
        for seed in cfg.seeds:
            tcfg = cfg.for_seed(seed)
            log.info("%s: seed %d (%s)", cfg.name, seed, cfg.agent)
            if cfg.agent == "mpq_lambda":
                result = train(tcfg)
                curve = result.curve
                save_checkpoint(result.net, out_dir / f"seed_{seed}.qnet",
                                {"config_hash": meta["config_hash"], "seed": seed})
            else:
                curve = mppi_curve(tcfg)
            (out_dir / f"seed_{seed}.csv").write_text(curve_csv(curve))
            outcome.curves[seed] = curve
            meta["completed_seeds"].append(seed)
            write_meta()
    except Exception as exc:
        meta["status"] = "failed"
        meta["error"] = f"{type(exc).__name__}: {exc}"
        write_meta()
        outcome.status = "failed"
        raise
    outcome.aggregate = aggregate(list(outcome.curves.values()))
    outcome.elapsed_seconds = time.perf_counter() - started
    (out_dir / "aggregate.csv").write_text(curve_csv(outcome.aggregate))
    meta["status"] = "ok"
    # wall-clock only; kept out of the CSVs so those stay byte-reproducible
    meta["elapsed_seconds"] = round(time.perf_counter() - started, 3)
    write_meta()
    return outcome


def _value_label(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def run_sweep(cfg: ExperimentConfig, axis: str | None = None, values=None, out_dir=None) -> tuple[Path, list[dict]]:
    """One :func:`run_experiment` per axis value plus ``summary.csv``."""
    axis = axis or cfg.sweep_axis
    values = tuple(values if values is not None else cfg.sweep_values)
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError(f"sweep axis {axis!r} has no values")
    root = Path(out_dir if out_dir is not None else Path(cfg.out) / cfg.name)
    rows = []
    for value in values:
        sub = with_axis_value(cfg, axis, value)
        outcome = run_experiment(sub, root / f"{axis}={_value_label(value)}")
        mean, se = final_window(outcome.aggregate, cfg.final_window)
        per_seed = {s: final_window(c, cfg.final_window)[0] for s, c in outcome.curves.items()}
        rows.append({"axis": axis, "value": value, "final_mean_reward": mean, "final_stderr": se,
                     "final_success_rate": float(np.mean([p.success_rate for p in outcome.aggregate[-cfg.final_window:]])),
                     "per_seed": per_seed})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "value", "final_mean_reward", "final_stderr", "final_success_rate"])
    for r in rows:
        w.writerow([r["axis"], _value_label(r["value"]), repr(r["final_mean_reward"]), repr(r["final_stderr"]),
                    repr(r["final_success_rate"])])
    root.mkdir(parents=True, exist_ok=True)
    (root / "summary.csv").write_text(buf.getvalue())
    return root, rows


def cached_run(cfg: ExperimentConfig, cache_root) -> RunOutcome:
    """:func:`run_experiment`, reusing a previous result for the same config and code.

    The cache key combines the config hash and :func:`code_version`, so any
    source edit invalidates every entry. Curves are read back from the CSVs.
    """
    key = f"{cfg.name}-{cfg.config_hash()}-{code_version().split('+')[1]}"
    out_dir = Path(cache_root) / key
    meta_path = out_dir / "metadata.json"
    if meta_path.exists() and json.loads(meta_path.read_text()).get("status") == "ok":
        outcome = RunOutcome(out_dir, json.loads(meta_path.read_text()).get("elapsed_seconds", 0.0))
        outcome.curves = {s: read_curve(out_dir / f"seed_{s}.csv") for s in cfg.seeds}
        outcome.aggregate = read_curve(out_dir / "aggregate.csv")
        return outcome
    return run_experiment(cfg, out_dir)
