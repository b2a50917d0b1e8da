"""Lambda-blended Q estimates: model-free Q-hat mixed with every k-horizon model return.

Three algebraically equivalent forms are provided:

* :func:`blended_q_recursive`  - ``Q_i = (1-lam) q_i + lam (c_i + gamma Q_{i+1})``, ``Q_H = q_H``
* :func:`blended_q_weighted`   - exponentially weighted average of the k-horizon estimates
* :func:`blended_q_telescoped` - ``q_0 + lam * sum_i (gamma lam)^i A_i`` with one-step
  disadvantages ``A_i = c_i + gamma q_{i+1} - q_i``

The telescoped form is the cheap one used by the planner. It is vectorised over
any leading batch dimensions (particles).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .mdp import Trajectory


@dataclass(frozen=True)
class BlendConfig:
    lam: float
    horizon: int
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


def _check_lam(lam: float):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")


def naive_blend(q_model_free: float, q_mpc_h: float, lam: float) -> float:
    _check_lam(lam)
    return (1.0 - lam) * q_model_free + lam * q_mpc_h


def blend_weights(lam: float, horizon: int) -> NDArray:
    """Weights ``(1-lam) lam^i`` for ``i < H`` and ``lam^H`` on the last estimate."""
    _check_lam(lam)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    powers = lam ** np.arange(horizon + 1, dtype=np.float64)
    w = (1.0 - lam) * powers
    w[-1] = powers[-1]
    return w


def horizon_estimates(costs: ArrayLike, q_hat_values: ArrayLike, gamma: float) -> NDArray:
    """k-horizon estimates ``sum_{i<k} gamma^i c_i + gamma^k q_k`` for k = 0..H."""
    costs, q = _as_pair(costs, q_hat_values)
    horizon = costs.shape[-1]
    discounts = gamma ** np.arange(horizon + 1, dtype=np.float64)
    partial = np.zeros(costs.shape[:-1] + (horizon + 1,))
    partial[..., 1:] = np.cumsum(discounts[:-1] * costs, axis=-1)
    return partial + discounts * q


def blended_q_weighted(q_by_horizon: ArrayLike, lam: float) -> NDArray | float:
    q_by_horizon = np.asarray(q_by_horizon, dtype=np.float64)
    w = blend_weights(lam, q_by_horizon.shape[-1] - 1)
    out = q_by_horizon @ w
    return float(out) if np.ndim(out) == 0 else out


def blended_q_telescoped(costs, q_hat_values: ArrayLike, lam: float, gamma: float) -> NDArray | float:
    """Blended estimate via discounted one-step disadvantages.

    ``costs`` is ``(..., H)`` (or a :class:`Trajectory`) and ``q_hat_values`` is
    ``(..., H+1)`` holding ``Q-hat(s_i, a_i)`` along the rollout.
    """
    _check_lam(lam)
    if isinstance(costs, Trajectory):
        costs = costs.costs
    costs, q = _as_pair(costs, q_hat_values)
    adv = costs + gamma * q[..., 1:] - q[..., :-1]
    weights = lam * (gamma * lam) ** np.arange(costs.shape[-1], dtype=np.float64)
    out = q[..., 0] + adv @ weights
    return float(out) if np.ndim(out) == 0 else out


def blended_q_recursive(costs: ArrayLike, q_hat_values: ArrayLike, lam: float, gamma: float) -> float:
    """Backward recursion for a single rollout; kept loop-based as an independent check."""
    _check_lam(lam)
    costs, q = _as_pair(costs, q_hat_values)
    if costs.ndim != 1:
        raise ValueError("blended_q_recursive takes a single rollout")
    value = float(q[-1])
    for i in range(len(costs) - 1, -1, -1):
        value = (1.0 - lam) * float(q[i]) + lam * (float(costs[i]) + gamma * value)
    return value


def _as_pair(costs, q_hat_values):
    costs = np.asarray(costs, dtype=np.float64)
    q = np.asarray(q_hat_values, dtype=np.float64)
    if costs.shape[-1] < 1:
        raise ValueError("need at least one cost")
    if q.shape[:-1] != costs.shape[:-1] or q.shape[-1] != costs.shape[-1] + 1:
        raise ValueError(f"q_hat_values shape {q.shape} does not match costs shape {costs.shape} (+1 on last axis)")
    return costs, q
