"""MPPI planner whose particle objective is the lambda-blended Q estimate.

A particle ``a_0..a_{H-1}`` is rolled through the planning model; Q-hat is read
at every visited ``(s_i, a_i)`` (the terminal pair reuses the last action) and
the blended estimate ``q_0 + lam * sum_i (gamma lam)^i A_i`` is its cost.
With ``lam = 1`` this is the ordinary discounted H-step cost plus a terminal
Q-hat; with ``lam = 0`` only ``Q-hat(s_0, a_0)`` matters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from .blending import BlendConfig, blended_q_telescoped
from .mdp import EnvModel, rollout_batch

# q(states (N, n), actions (N, m)) -> (N,)
QFunction = Callable[[NDArray, NDArray], NDArray]


@dataclass(frozen=True)
class MppiConfig:
    horizon: int = 32
    n_particles: int = 60
    covariance: float = 0.45
    temperature: float = 0.1
    step_size: float = 1.0
    filter_coeffs: tuple[float, float, float] = (1.0, 0.0, 0.0)
    gamma: float = 0.99
    n_iters: int = 1
    action_low: Optional[float] = -1.0
    action_high: Optional[float] = 1.0
    stochastic_execution: bool = False

    def __post_init__(self):
        if self.horizon < 1 or self.n_particles < 1 or self.n_iters < 1:
            raise ValueError("horizon, n_particles and n_iters must be positive")
        if not self.covariance > 0 or not self.temperature > 0:
            raise ValueError("covariance and temperature must be > 0")
        if not 0.0 < self.step_size <= 1.0:
            raise ValueError("step_size must lie in (0, 1]")
        if len(self.filter_coeffs) != 3:
            raise ValueError("filter_coeffs needs exactly 3 entries")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    def clip(self, actions):
        if self.action_low is None and self.action_high is None:
            return actions
        return np.clip(actions, self.action_low, self.action_high)


@dataclass
class PlanResult:
    action: NDArray
    value: float  # blended objective under the optimised sampling distribution
    plan: NDArray  # optimised mean, shifted one step for warm starting
    mean: NDArray  # optimised mean before shifting
    weights: NDArray
    fallback: bool = False


def zero_plan(cfg: MppiConfig, action_dim: int = 1) -> NDArray:
    return np.zeros((cfg.horizon, action_dim))


def sample_controls(plan: NDArray, cfg: MppiConfig, rng: np.random.Generator) -> NDArray:
    """``n_particles`` perturbed copies of ``plan`` with AR-filtered Gaussian noise.

    ``noise[t] = c0 eps[t] + c1 noise[t-1] + c2 noise[t-2]``; samples are clipped
    to the action bounds so the weighted mean never leaves them.
    """
    plan = np.asarray(plan, dtype=np.float64)
    if plan.ndim == 1:
        plan = plan[:, None]
    if len(plan) != cfg.horizon:
        raise ValueError(f"plan length {len(plan)} != horizon {cfg.horizon}")
    eps = rng.standard_normal((cfg.n_particles,) + plan.shape) * np.sqrt(cfg.covariance)
    c0, c1, c2 = cfg.filter_coeffs
    if (c0, c1, c2) == (1.0, 0.0, 0.0):
        noise = eps
    else:
        noise = np.empty_like(eps)
        for t in range(cfg.horizon):
            noise[:, t] = c0 * eps[:, t]
            if t >= 1:
                noise[:, t] += c1 * noise[:, t - 1]
            if t >= 2:
                noise[:, t] += c2 * noise[:, t - 2]
    return cfg.clip(plan + noise)


def _q_along(q_fn: QFunction | None, states: NDArray, controls: NDArray) -> NDArray:
    n_particles, horizon = controls.shape[:2]
    if q_fn is None:
        return np.zeros((n_particles, horizon + 1))
    actions = np.concatenate([controls, controls[:, -1:]], axis=1)
    flat = q_fn(states.reshape(-1, states.shape[-1]), actions.reshape(-1, actions.shape[-1]))
    return np.asarray(flat, dtype=np.float64).reshape(n_particles, horizon + 1)


def evaluate_particles(
    model: EnvModel,
    state: NDArray,
    controls: NDArray,
    q_fn: QFunction | None,
    blend: BlendConfig,
    rng: np.random.Generator | None = None,
) -> NDArray:
    """Blended objective for each control sequence ``(K, H, m)``."""
    controls = np.asarray(controls, dtype=np.float64)
    if controls.ndim == 2:
        controls = controls[..., None]
    if controls.shape[1] != blend.horizon:
        raise ValueError(f"control length {controls.shape[1]} != blend horizon {blend.horizon}")
    states, costs = rollout_batch(model, state, controls, rng)
    q = _q_along(q_fn, states, controls)
    return np.asarray(blended_q_telescoped(costs, q, blend.lam, blend.gamma))


def evaluate_particle(model, state, controls, q_fn, blend, rng=None) -> float:
    controls = np.asarray(controls, dtype=np.float64)
    if controls.ndim == 1:
        controls = controls[:, None]
    return float(evaluate_particles(model, state, controls[None], q_fn, blend, rng)[0])


def softmin_weights(costs: NDArray, temperature: float) -> tuple[NDArray, bool]:
    """``exp(-(J - min J) / beta)`` normalised; non-finite costs get zero weight.

    Returns ``(weights, fallback)``; ``fallback`` is set when the exponentials
    could not be normalised and all mass went to the best particle.
    """
    costs = np.asarray(costs, dtype=np.float64)
    finite = np.isfinite(costs)
    if not finite.any():
        raise ValueError("all particle costs are non-finite")
    best = np.min(costs[finite])
    w = np.zeros_like(costs)
    w[finite] = np.exp(-(costs[finite] - best) / temperature)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        w = np.zeros_like(costs)
        w[np.argmin(np.where(finite, costs, np.inf))] = 1.0
        return w, True
    return w / total, False


def update_plan(plan: NDArray, particle_controls: NDArray, particle_costs: NDArray, cfg: MppiConfig):
    """Exponentiated-cost average of the particles, blended in with ``step_size``.

    Returns ``(new_plan, weights, fallback)``.
    """
    plan = np.asarray(plan, dtype=np.float64)
    controls = np.asarray(particle_controls, dtype=np.float64)
    if plan.ndim == 1:
        plan = plan[:, None]
    if controls.ndim == 2:
        controls = controls[..., None]
    w, fallback = softmin_weights(particle_costs, cfg.temperature)
    target = np.tensordot(w, controls, axes=1)
    return (1.0 - cfg.step_size) * plan + cfg.step_size * target, w, fallback


def shift_plan(plan: NDArray) -> NDArray:
    """Drop the first action and repeat the last one."""
    plan = np.asarray(plan)
    return np.concatenate([plan[1:], plan[-1:]], axis=0)


def plan_action(
    state: NDArray,
    plan: NDArray,
    model: EnvModel,
    q_fn: QFunction | None,
    cfg: MppiConfig,
    blend: BlendConfig,
    rng: np.random.Generator,
) -> PlanResult:
    plan = np.asarray(plan, dtype=np.float64)
    if plan.ndim == 1:
        plan = plan[:, None]
    value = np.nan
    for _ in range(cfg.n_iters):
        controls = sample_controls(plan, cfg, rng)
        values = evaluate_particles(model, state, controls, q_fn, blend, rng)
        plan, weights, fallback = update_plan(plan, controls, values, cfg)
        finite = np.isfinite(values)
        value = float(weights[finite] @ values[finite])
    action = plan[0].copy()
    if cfg.stochastic_execution:
        action = cfg.clip(action + rng.standard_normal(action.shape) * np.sqrt(cfg.covariance))
    return PlanResult(cfg.clip(action), value, shift_plan(plan), plan, weights, fallback)
