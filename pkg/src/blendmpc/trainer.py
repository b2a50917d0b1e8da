"""Model-predictive Q-learning with lambda-blended targets, on cartpole swing-up.

Each environment step plans with MPPI on the (possibly biased) model using the
current Q network, executes the first action on the true system and, in the
default online mode, turns the planner's optimised value at ``s_{t+1}`` into the
target ``c_t + gamma * value`` for ``(s_t, a_t)``. The network is regressed on
replayed targets every ``update_every`` steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import cartpole
from .blending import BlendConfig
from .cartpole import CartpoleModel, CartpoleParams
from .mdp import DivergenceError
from .mppi import MppiConfig, PlanResult, plan_action, zero_plan
from .qnet import AdamState, QNetwork, ReplayBuffer, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LambdaSchedule:
    kind: str = "constant"  # "constant" | "sublinear_decay"
    lambda0: float = 1.0
    lambda_final: float = 1.0
    total_steps: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "sublinear_decay"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        for lam in (self.lambda0, self.lambda_final):
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda values must lie in [0, 1], got {lam}")
        if self.kind == "sublinear_decay":
            if self.lambda_final <= 0.0 or self.lambda0 <= 0.0:
                raise ValueError("sublinear decay needs lambda0 > 0 and lambda_final > 0")
            if self.total_steps < 1:
                raise ValueError("total_steps must be >= 1")

    @property
    def kappa(self) -> float:
        """Decay rate that lands exactly on ``lambda_final`` at ``total_steps``."""
        if self.kind == "constant":
            return 0.0
        return (self.lambda0 / self.lambda_final - 1.0) / np.sqrt(self.total_steps)


def lambda_at(schedule: LambdaSchedule, t: int) -> float:
    """``lambda0 / (1 + kappa sqrt(t))``; held at its final value past ``total_steps``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if schedule.kind == "constant":
        return schedule.lambda0
    if t >= schedule.total_steps:
        return schedule.lambda_final
    return schedule.lambda0 / (1.0 + schedule.kappa * np.sqrt(t))


@dataclass(frozen=True)
class TrainConfig:
    env: CartpoleParams = field(default_factory=CartpoleParams)
    bias: float = -0.5
    mppi: MppiConfig = field(default_factory=MppiConfig)
    schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    buffer_capacity: int = 10_000
    batch_size: int = 64
    n_minibatches: int = 4
    update_every: int = 1
    learning_rate: float = 1e-3
    hidden: tuple[int, ...] = (100, 100)
    total_steps: int = 30_000
    episode_length: int = 100
    validation_interval: int = 2_000
    validation_episodes: int = 30
    # validations before this step are skipped (step 0 is always kept)
    validate_from: int = 0
    seed: int = 0
    validation_seed: int = 12345
    target_mode: str = "online"  # "online" | "batch"
    learn: bool = True
    zero_init: bool = False
    # the network regresses Q / value_scale; the planner sees value_scale * output
    value_scale: float = 1.0
    # costs are non-negative, so Q is too; flooring stops the planner chasing
    # negative extrapolations of the network off the data distribution
    q_floor: Optional[float] = None
    features: str = "trig"  # Q-network input map, see cartpole.features

    def __post_init__(self):
        for name in ("buffer_capacity", "batch_size", "n_minibatches", "update_every",
                     "total_steps", "episode_length", "validation_interval", "validation_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.target_mode not in ("online", "batch"):
            raise ValueError(f"unknown target_mode {self.target_mode!r}")
        if self.bias <= -1.0:
            raise ValueError("bias must exceed -1")
        if self.features not in cartpole.FEATURE_KINDS:
            raise ValueError(f"unknown features {self.features!r}")
        if not self.value_scale > 0:
            raise ValueError("value_scale must be > 0")

    def blend(self, lam: float) -> BlendConfig:
        return BlendConfig(lam, self.mppi.horizon, self.mppi.gamma)


@dataclass
class ValidationResult:
    mean_reward: float
    stderr: float
    success_rate: float
    rewards: np.ndarray


@dataclass
class CurvePoint:
    step: int
    lam: float
    mean_reward: float
    stderr: float
    success_rate: float


@dataclass
class TrainResult:
    curve: list[CurvePoint]
    net: QNetwork
    targets: list[dict] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, record: dict):
        super().__init__(message)
        self.record = record


def q_function(
    net: QNetwork | None,
    features: str = "trig",
    scale: float = 1.0,
    floor: float | None = None,
    dtype=np.float32,
):
    """Snapshot a network as the planner's ``q(states, actions)`` callable.

    The network sees ``cartpole.features(states, features)`` and predicts
    ``Q / scale``; values below ``floor`` (if given) are raised to it.
    """
    if net is None:
        return None
    forward = net.frozen(dtype)

    def q(states, actions):
        out = scale * forward(cartpole.features(states, features), actions)
        return out if floor is None else np.maximum(out, floor)

    return q


def config_q(net: QNetwork | None, config: TrainConfig, dtype=np.float32):
    """:func:`q_function` with the read-out settings of ``config``."""
    return q_function(net, config.features, config.value_scale, config.q_floor, dtype)


def compute_target(
    cost: float,
    next_state,
    plan,
    model,
    q,
    cfg: MppiConfig,
    blend: BlendConfig,
    rng: np.random.Generator,
) -> tuple[float, PlanResult]:
    """``c + gamma * (optimised blended value at next_state)``, in cost units."""
    res = plan_action(next_state, plan, model, q, cfg, blend, rng)
    return cost + blend.gamma * res.value, res


def run_episode(start, true_model, plan_model, q, mppi_cfg, blend, rng, length):
    """One closed-loop episode; returns (total cost, visited states, actions)."""
    s = np.asarray(start, dtype=np.float64)
    plan = zero_plan(mppi_cfg)
    total = 0.0
    states, actions = [s], []
    for _ in range(length):
        res = plan_action(s, plan, plan_model, q, mppi_cfg, blend, rng)
        total += float(true_model.cost(s[None], res.action[None])[0])
        s = true_model.step(s[None], res.action[None])[0]
        plan = res.plan
        states.append(s)
        actions.append(res.action)
    return total, np.array(states), np.array(actions)


def validation_starts(validation_seed: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(validation_seed)
    return np.array([cartpole.reset(rng) for _ in range(n)])


def validate(
    net: QNetwork | None,
    lam: float,
    config: TrainConfig,
    validation_seed: int | None = None,
    plan_bias: float | None = None,
) -> ValidationResult:
    """Roll out ``validation_episodes`` seed-fixed episodes with lambda frozen.

    Start states depend only on ``validation_seed``; planner noise is drawn from
    a stream keyed by both the validation and the training seed.
    """
    vseed = config.validation_seed if validation_seed is None else validation_seed
    b = config.bias if plan_bias is None else plan_bias
    true_model = CartpoleModel(config.env)
    plan_model = CartpoleModel(cartpole.bias(config.env, b))
    rng = np.random.default_rng([vseed, config.seed, 7])
    blend = config.blend(lam)
    q = config_q(net, config)
    rewards, successes = [], []
    for start in validation_starts(vseed, config.validation_episodes):
        total, states, _ = run_episode(start, true_model, plan_model, q, config.mppi, blend, rng, config.episode_length)
        rewards.append(-total)
        successes.append(cartpole.is_success(states[1:, 1]))
    rewards = np.array(rewards)
    stderr = float(rewards.std(ddof=1) / np.sqrt(len(rewards))) if len(rewards) > 1 else 0.0
    return ValidationResult(float(rewards.mean()), stderr, float(np.mean(successes)), rewards)


class _TransitionBuffer:
    """Raw ``(s, a, c, s')`` store for the batch-recompute target mode."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.rows: list[tuple] = []
        self.cursor = 0

    def __len__(self):
        return len(self.rows)

    def push(self, row):
        if len(self.rows) < self.capacity:
            self.rows.append(row)
        else:
            self.rows[self.cursor] = row
        self.cursor = (self.cursor + 1) % self.capacity

    def sample(self, n, rng):
        idx = rng.integers(0, len(self.rows), size=n)
        return [self.rows[i] for i in idx]


def train(
    config: TrainConfig,
    progress: Optional[Callable[[CurvePoint], None]] = None,
    trace_targets: bool = False,
) -> TrainResult:
    seed = config.seed
    env_rng = np.random.default_rng([seed, 0])
    plan_rng = np.random.default_rng([seed, 1])
    buffer_rng = np.random.default_rng([seed, 2])
    target_rng = np.random.default_rng([seed, 4])
    sizes = [cartpole.FEATURE_KINDS[config.features] + cartpole.ACTION_DIM, *config.hidden, 1]
    net = QNetwork(sizes, np.random.default_rng([seed, 3]), zero=config.zero_init)
    adam = AdamState.for_network(net, learning_rate=config.learning_rate)
    true_model = CartpoleModel(config.env)
    plan_model = CartpoleModel(cartpole.bias(config.env, config.bias))
    online = config.target_mode == "online"
    replay = ReplayBuffer(config.buffer_capacity, cartpole.FEATURE_KINDS[config.features], cartpole.ACTION_DIM)
    transitions = _TransitionBuffer(config.buffer_capacity)
    result = TrainResult([], net)

    def record(step):
        lam = lambda_at(config.schedule, step)
        v = validate(net, lam, config)
        point = CurvePoint(step, lam, v.mean_reward, v.stderr, v.success_rate)
        result.curve.append(point)
        log.info("step %d lambda %.4f reward %.2f +- %.2f success %.2f",
                 step, lam, v.mean_reward, v.stderr, v.success_rate)
        if progress is not None:
            progress(point)

    def push_target(prev, res, lam):
        s, a, c = prev
        target = c + config.mppi.gamma * res.value
        replay.push(cartpole.features(s, config.features), a, target / config.value_scale)
        if trace_targets:
            result.targets.append({"cost": c, "target": target, "lam": lam, **res_snapshot})

    def update(t):
        if online:
            if len(replay) == 0:
                return
            obs, act, y = replay.sample(config.batch_size * config.n_minibatches, buffer_rng)
        else:
            if len(transitions) == 0:
                return
            lam = lambda_at(config.schedule, t)
            rows = transitions.sample(config.batch_size * config.n_minibatches, buffer_rng)
            obs = cartpole.features(np.array([r[0] for r in rows]), config.features)
            act = np.array([r[1] for r in rows])
            q = config_q(net, config)
            y = np.array([
                compute_target(r[2], r[3], zero_plan(config.mppi), plan_model, q, config.mppi,
                               config.blend(lam), target_rng)[0]
                for r in rows
            ]) / config.value_scale
        loss, grads = net.loss_and_grad(obs, act, y)
        if not np.isfinite(loss):
            raise TrainingAborted(f"non-finite loss at step {t}", {"step": t, "loss": loss})
        adam_step(net, adam, grads)
        result.losses.append(loss)

    t = 0
    record(0)
    res_snapshot: dict = {}
    while t < config.total_steps:
        s = cartpole.reset(env_rng)
        plan = zero_plan(config.mppi)
        prev = None
        for _ in range(config.episode_length):
            lam = lambda_at(config.schedule, t)
            if trace_targets:
                res_snapshot = {"state": s.copy(), "plan": plan.copy(), "rng": plan_rng.bit_generator.state, "net": net.copy()}
            res = plan_action(s, plan, plan_model, config_q(net, config), config.mppi, config.blend(lam), plan_rng)
            if prev is not None and online and config.learn:
                push_target(prev, res, lam)
            a = res.action
            c = float(true_model.cost(s[None], a[None])[0])
            s_next = true_model.step(s[None], a[None])[0]
            if not np.all(np.isfinite(s_next)):
                raise TrainingAborted(f"environment diverged at step {t}", {"step": t, "state": s.tolist()})
            if not online and config.learn:
                transitions.push((s, a, c, s_next))
            prev = (s, a, c)
            plan, s = res.plan, s_next
            t += 1
            if config.learn and t % config.update_every == 0:
                update(t)
            if t % config.validation_interval == 0 and t >= config.validate_from:
                record(t)
            if t >= config.total_steps:
                break
        if prev is not None and online and config.learn:
            lam = lambda_at(config.schedule, t)
            if trace_targets:
                res_snapshot = {"state": s.copy(), "plan": plan.copy(), "rng": plan_rng.bit_generator.state, "net": net.copy()}
            res = plan_action(s, plan, plan_model, config_q(net, config), config.mppi, config.blend(lam), plan_rng)
            push_target(prev, res, lam)
    return result


__all__ = [
    "CurvePoint",
    "DivergenceError",
    "LambdaSchedule",
    "TrainConfig",
    "TrainResult",
    "TrainingAborted",
    "ValidationResult",
    "compute_target",
    "config_q",
    "lambda_at",
    "q_function",
    "run_episode",
    "train",
    "validate",
    "validation_starts",
]
