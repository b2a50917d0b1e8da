"""Closed-form performance bounds for planning with an approximate model and value.

``alpha`` bounds both the per-(s, a) L1 transition error and the cost error,
``epsilon`` the sup-norm error of the learned value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class BoundInputs:
    alpha: float
    epsilon: float
    gamma: float
    H: int
    c_min: float = 0.0
    c_max: float = 1.0
    V_min: float = 0.0
    V_max: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.epsilon < 0:
            raise ValueError("alpha and epsilon must be >= 0")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.H < 1:
            raise ValueError(f"horizon must be >= 1, got {self.H}")
        if self.c_min > self.c_max or self.V_min > self.V_max:
            raise ValueError("ranges must satisfy min <= max")


@dataclass(frozen=True)
class HStepTerms:
    """The four summands of the H-step bound (before the leading factor 2)."""

    cost_model: float
    value_model: float
    one_step_model: float
    value_error: float

    @property
    def total(self) -> float:
        return 2.0 * (self.cost_model + self.value_model + self.one_step_model + self.value_error)


def h_step_terms(b: BoundInputs) -> HStepTerms:
    g, H, a = b.gamma, b.H, b.alpha
    gH = g**H
    return HStepTerms(
        cost_model=g * (1.0 - g ** (H - 1)) / ((1.0 - gH) * (1.0 - g)) * a * H * (b.c_max - b.c_min) / 2.0,
        value_model=gH * a * H / (1.0 - gH) * (b.V_max - b.V_min) / 2.0,
        one_step_model=a / (1.0 - g),
        value_error=gH * b.epsilon / (1.0 - gH),
    )


def h_step_bound(b: BoundInputs) -> float:
    """Sup-norm loss of the H-step greedy policy relative to the optimal one."""
    return h_step_terms(b).total


def one_step_bound(alpha: float, epsilon: float, gamma: float, V_min: float, V_max: float) -> float:
    return 2.0 * (gamma * epsilon + alpha + gamma * alpha * (V_max - V_min) / 2.0) / (1.0 - gamma)


def one_step_residual(alpha: float, epsilon: float, gamma: float, V_min: float, V_max: float,
                      c_min: float = 0.0, c_max: float = 1.0) -> float:
    """``h_step_bound(H=1) - one_step_bound`` for the same inputs.

    At ``H = 1`` the cost-range term carries ``1 - gamma^0 = 0`` and the
    remaining terms coincide algebraically, so this is zero up to roundoff.
    """
    b = BoundInputs(alpha, epsilon, gamma, 1, c_min, c_max, V_min, V_max)
    return h_step_bound(b) - one_step_bound(alpha, epsilon, gamma, V_min, V_max)


def optimal_horizon(epsilon: float, alpha: float, gamma: float, V_min: float, V_max: float) -> float:
    """``H* = eps / ((1 - gamma)(eps + alpha (V_max - V_min) / 4))``."""
    if epsilon < 0 or alpha < 0:
        raise ValueError("epsilon and alpha must be >= 0")
    denom = epsilon + alpha * (V_max - V_min) / 4.0
    if denom == 0.0:
        raise ValueError("optimal horizon undefined when epsilon = alpha = 0")
    return epsilon / ((1.0 - gamma) * denom)


def simulation_gap_bound(b: BoundInputs) -> float:
    """Bound on the H-step cost gap of one policy between the true and approximate MDP."""
    g, H, a = b.gamma, b.H, b.alpha
    return (
        g * (1.0 - g ** (H - 1)) / (1.0 - g) * a * H * (b.c_max - b.c_min) / 2.0
        + g**H * a * H * (b.V_max - b.V_min) / 2.0
        + (1.0 - g**H) / (1.0 - g) * a
    )


@dataclass(frozen=True)
class TradeoffRow:
    H: int
    bound: float
    terms: HStepTerms


@dataclass(frozen=True)
class TradeoffCurve:
    rows: list[TradeoffRow]
    argmin_H: int
    h_star: float | None  # None when alpha = epsilon = 0

    @property
    def bounds(self) -> np.ndarray:
        return np.array([r.bound for r in self.rows])


def bound_tradeoff_curve(b: BoundInputs, H_range) -> TradeoffCurve:
    """Tabulate the H-step bound over ``H_range``; ties resolve to the smallest H."""
    hs = [int(h) for h in H_range]
    if not hs:
        raise ValueError("H_range must be non-empty")
    rows = []
    for h in hs:
        terms = h_step_terms(replace(b, H=h))
        rows.append(TradeoffRow(h, terms.total, terms))
    bounds = np.array([r.bound for r in rows])
    argmin = hs[int(np.argmin(bounds))]
    try:
        h_star = optimal_horizon(b.epsilon, b.alpha, b.gamma, b.V_min, b.V_max)
    except ValueError:
        h_star = None
    return TradeoffCurve(rows, argmin, h_star)


def horizon_agreement(b: BoundInputs, H_range) -> dict:
    """Compare the tabulated arg-min horizon with the closed-form H*."""
    curve = bound_tradeoff_curve(b, H_range)
    if curve.h_star is None:
        return {"argmin_H": curve.argmin_H, "h_star": None, "deviation": None}
    return {
        "argmin_H": curve.argmin_H,
        "h_star": curve.h_star,
        "deviation": curve.argmin_H - round(curve.h_star),
    }
