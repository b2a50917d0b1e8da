"""Core MDP plumbing: models, trajectories, returns and disadvantages.

Everything here is a *cost* to minimise. Rewards only appear at the harness
boundary, where ``reward = -cost``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from numpy.typing import NDArray


class DivergenceError(RuntimeError):
    """A rollout produced a non-finite state."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state produced at step {step}")
        self.step = step


class EnvModel(Protocol):
    """Batched dynamics + cost.

    ``step`` maps states ``(K, state_dim)`` and actions ``(K, action_dim)`` to
    next states; ``cost`` maps the same pair to ``(K,)`` costs. Stochastic
    models draw from ``rng``; deterministic ones ignore it.
    """

    state_dim: int
    action_dim: int

    def step(self, states: NDArray, actions: NDArray, rng: np.random.Generator | None = None) -> NDArray: ...

    def cost(self, states: NDArray, actions: NDArray) -> NDArray: ...


@dataclass(frozen=True)
class MdpSpec:
    state_dim: int
    action_dim: int
    gamma: float
    horizon_episode: int
    cost_bounds: tuple[float, float]

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1 or self.horizon_episode < 1:
            raise ValueError("dimensions and episode horizon must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.cost_bounds[0] > self.cost_bounds[1]:
            raise ValueError("c_min must not exceed c_max")


@dataclass
class Trajectory:
    states: NDArray  # (T+1, state_dim)
    actions: NDArray  # (T, action_dim)
    costs: NDArray  # (T,)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.costs = np.asarray(self.costs, dtype=np.float64)
        if self.actions.ndim == 1:
            self.actions = self.actions[:, None]
        if not (len(self.states) == len(self.actions) + 1 == len(self.costs) + 1):
            raise ValueError(
                f"inconsistent lengths: {len(self.states)} states, "
                f"{len(self.actions)} actions, {len(self.costs)} costs"
            )

    def __len__(self) -> int:
        return len(self.costs)


@dataclass(frozen=True)
class DisadvantageSample:
    c: float
    q_curr: float
    q_next: float
    gamma: float


def disadvantage(sample: DisadvantageSample) -> float:
    """One-step disadvantage ``c + gamma * q_next - q_curr``."""
    return sample.c + sample.gamma * sample.q_next - sample.q_curr


def rollout_batch(
    model: EnvModel,
    start_state: NDArray,
    controls: NDArray,
    rng: np.random.Generator | None = None,
) -> tuple[NDArray, NDArray]:
    """Roll ``K`` control sequences ``(K, H, action_dim)`` out from one state.

    Returns states ``(K, H+1, state_dim)`` and costs ``(K, H)``. Divergence is
    not checked here; callers that need it use :func:`rollout`. Models may
    supply their own compiled ``rollout_batch`` with identical semantics.
    """
    controls = np.asarray(controls, dtype=np.float64)
    if controls.ndim == 2:
        controls = controls[..., None]
    if hasattr(model, "rollout_batch"):
        return model.rollout_batch(start_state, controls, rng)
    n_particles, horizon, _ = controls.shape
    start = np.asarray(start_state, dtype=np.float64)
    states = np.empty((n_particles, horizon + 1, start.shape[-1]))
    costs = np.empty((n_particles, horizon))
    states[:, 0] = start
    for i in range(horizon):
        costs[:, i] = model.cost(states[:, i], controls[:, i])
        states[:, i + 1] = model.step(states[:, i], controls[:, i], rng)
    return states, costs


def rollout(
    model: EnvModel,
    start_state: NDArray,
    controls: NDArray,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    controls = np.asarray(controls, dtype=np.float64)
    if controls.ndim == 1:
        controls = controls[:, None]
    if len(controls) == 0:
        raise ValueError("controls must be non-empty")
    state = np.asarray(start_state, dtype=np.float64)
    if not np.all(np.isfinite(state)):
        raise ValueError("start_state must be finite")
    states = [state]
    costs = []
    for i, a in enumerate(controls):
        s = states[-1][None]
        costs.append(float(model.cost(s, a[None])[0]))
        nxt = model.step(s, a[None], rng)[0]
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(i)
        states.append(nxt)
    return Trajectory(np.array(states), controls, np.array(costs))


def discounted_return(traj: Trajectory, gamma: float, terminal_value: float = 0.0) -> float:
    """``sum_i gamma^i c_i + gamma^T * terminal_value``."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    costs = traj.costs
    weights = gamma ** np.arange(len(costs))
    return float(weights @ costs + gamma ** len(costs) * terminal_value)


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    n_samples: int
    # gamma^T / (1 - gamma): multiply by a cost bound to get the truncation error.
    tail_weight: float


def monte_carlo_q(
    model: EnvModel,
    state: NDArray,
    action: NDArray,
    policy: Callable[[NDArray, np.random.Generator], NDArray],
    gamma: float,
    n_samples: int,
    truncate_T: int,
    rng: np.random.Generator,
) -> MonteCarloEstimate:
    """Brute-force Q(s, a) under ``policy``: mean of truncated discounted returns."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    state = np.asarray(state, dtype=np.float64)
    action = np.atleast_1d(np.asarray(action, dtype=np.float64))
    returns = np.empty(n_samples)
    for n in range(n_samples):
        s, a = state, action
        total, discount = 0.0, 1.0
        for _ in range(truncate_T):
            total += discount * float(model.cost(s[None], a[None])[0])
            s = model.step(s[None], a[None], rng)[0]
            a = np.atleast_1d(np.asarray(policy(s, rng), dtype=np.float64))
            discount *= gamma
        returns[n] = total
    stderr = float(returns.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return MonteCarloEstimate(float(returns.mean()), stderr, n_samples, gamma**truncate_T / (1.0 - gamma))
