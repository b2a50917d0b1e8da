"""Cartpole swing-up: frictionless cart-pole dynamics with a bias-injectable model.

State is ``[x_cart, theta_pole, v_cart, omega_pole]`` with ``theta = 0`` upright.
The pole is a uniform rod; ``pole_length`` is its half-length.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numba
import numpy as np
from numpy.typing import NDArray

STATE_DIM = 4
ACTION_DIM = 1


@dataclass(frozen=True)
class CartpoleParams:
    mass_cart: float = 1.0
    mass_pole: float = 0.1
    pole_length: float = 0.5
    gravity: float = 9.81
    dt: float = 0.03
    force_limit: float = 20.0
    substeps: int = 4
    # "squared" -> 0.01 v^2 + 0.01 w^2 ; "linear" -> 0.01 v + 0.01 w
    velocity_cost: str = "squared"

    def __post_init__(self):
        for name in ("mass_cart", "mass_pole", "pole_length", "gravity", "dt", "force_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.velocity_cost not in ("squared", "linear"):
            raise ValueError(f"unknown velocity_cost {self.velocity_cost!r}")


def wrap_angle(theta):
    """Map angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - theta, 2.0 * np.pi)


def _step_batch(states: NDArray, actions: NDArray, p: CartpoleParams) -> NDArray:
    x, th, v, w = states[:, 0], states[:, 1], states[:, 2], states[:, 3]
    force = np.clip(actions[:, 0], -1.0, 1.0) * p.force_limit
    total_mass = p.mass_cart + p.mass_pole
    pml = p.mass_pole * p.pole_length
    h = p.dt / p.substeps
    for _ in range(p.substeps):
        sin, cos = np.sin(th), np.cos(th)
        tmp = (force + pml * w * w * sin) / total_mass
        th_acc = (p.gravity * sin - cos * tmp) / (p.pole_length * (4.0 / 3.0 - p.mass_pole * cos * cos / total_mass))
        x_acc = tmp - pml * th_acc * cos / total_mass
        # semi-implicit Euler: velocities first, positions with the new velocities
        v = v + h * x_acc
        w = w + h * th_acc
        x = x + h * v
        th = th + h * w
    return np.stack([x, th, v, w], axis=-1)


@numba.njit(cache=True)
def _step_compiled(states, actions, mass_cart, mass_pole, length, gravity, dt, force_limit, substeps):
    out = np.empty_like(states)
    total_mass = mass_cart + mass_pole
    pml = mass_pole * length
    h = dt / substeps
    for k in range(states.shape[0]):
        x, th, v, w = states[k, 0], states[k, 1], states[k, 2], states[k, 3]
        force = min(max(actions[k, 0], -1.0), 1.0) * force_limit
        for _ in range(substeps):
            sin, cos = np.sin(th), np.cos(th)
            tmp = (force + pml * w * w * sin) / total_mass
            th_acc = (gravity * sin - cos * tmp) / (length * (4.0 / 3.0 - mass_pole * cos * cos / total_mass))
            x_acc = tmp - pml * th_acc * cos / total_mass
            v = v + h * x_acc
            w = w + h * th_acc
            x = x + h * v
            th = th + h * w
        out[k, 0], out[k, 1], out[k, 2], out[k, 3] = x, th, v, w
    return out


def _step_fast(states: NDArray, actions: NDArray, p: CartpoleParams) -> NDArray:
    """Compiled twin of :func:`_step_batch` (same arithmetic, per-row loop)."""
    return _step_compiled(
        np.ascontiguousarray(states, dtype=np.float64), np.ascontiguousarray(actions, dtype=np.float64),
        p.mass_cart, p.mass_pole, p.pole_length, p.gravity, p.dt, p.force_limit, p.substeps,
    )


@numba.njit(cache=True)
def _rollout_compiled(start, controls, mass_cart, mass_pole, length, gravity, dt, force_limit, substeps, squared):
    n_particles, horizon = controls.shape[0], controls.shape[1]
    states = np.empty((n_particles, horizon + 1, 4))
    costs = np.empty((n_particles, horizon))
    total_mass = mass_cart + mass_pole
    pml = mass_pole * length
    h = dt / substeps
    for k in range(n_particles):
        x, th, v, w = start[0], start[1], start[2], start[3]
        states[k, 0, 0], states[k, 0, 1], states[k, 0, 2], states[k, 0, 3] = x, th, v, w
        for i in range(horizon):
            a = min(max(controls[k, i, 0], -1.0), 1.0)
            wrapped = np.pi - np.mod(np.pi - th, 2.0 * np.pi)
            if squared:
                vel = 0.01 * v * v + 0.01 * w * w
            else:
                vel = 0.01 * v + 0.01 * w
            costs[k, i] = x * x + wrapped * wrapped + vel + 0.01 * a * a
            force = a * force_limit
            for _ in range(substeps):
                sin, cos = np.sin(th), np.cos(th)
                tmp = (force + pml * w * w * sin) / total_mass
                th_acc = (gravity * sin - cos * tmp) / (length * (4.0 / 3.0 - mass_pole * cos * cos / total_mass))
                x_acc = tmp - pml * th_acc * cos / total_mass
                v = v + h * x_acc
                w = w + h * th_acc
                x = x + h * v
                th = th + h * w
            states[k, i + 1, 0], states[k, i + 1, 1], states[k, i + 1, 2], states[k, i + 1, 3] = x, th, v, w
    return states, costs


def _cost_batch(states: NDArray, actions: NDArray, velocity_cost: str = "squared") -> NDArray:
    x, v, w = states[:, 0], states[:, 2], states[:, 3]
    th = wrap_angle(states[:, 1])
    a = np.clip(actions[:, 0], -1.0, 1.0)
    if velocity_cost == "squared":
        vel = 0.01 * v * v + 0.01 * w * w
    else:
        vel = 0.01 * v + 0.01 * w
    return x * x + th * th + vel + 0.01 * a * a


def step(state: NDArray, action, params: CartpoleParams) -> NDArray:
    """Advance one control interval; the action is clamped to [-1, 1]."""
    s = np.asarray(state, dtype=np.float64)[None]
    a = np.atleast_1d(np.asarray(action, dtype=np.float64))[None]
    return _step_batch(s, a, params)[0]


def cost(state: NDArray, action, velocity_cost: str = "squared") -> float:
    s = np.asarray(state, dtype=np.float64)[None]
    a = np.atleast_1d(np.asarray(action, dtype=np.float64))[None]
    return float(_cost_batch(s, a, velocity_cost)[0])


def bias(params: CartpoleParams, b: float) -> CartpoleParams:
    """Scale cart and pole masses by ``1 + b``."""
    if b <= -1.0:
        raise ValueError(f"bias factor must exceed -1 (got {b}); masses would be non-positive")
    return replace(params, mass_cart=params.mass_cart * (1.0 + b), mass_pole=params.mass_pole * (1.0 + b))


def reset(rng: np.random.Generator) -> NDArray:
    x = rng.uniform(-1.0, 1.0)
    th = wrap_angle(rng.uniform(-np.pi, np.pi))
    v, w = rng.uniform(-0.05, 0.05, size=2)
    return np.array([x, th, v, w])


def energy(state: NDArray, params: CartpoleParams) -> float:
    """Total mechanical energy (rod inertia about its centre is m l^2 / 3)."""
    _, th, v, w = np.asarray(state, dtype=np.float64)
    mc, mp, l, g = params.mass_cart, params.mass_pole, params.pole_length, params.gravity
    kinetic = 0.5 * mc * v**2 + 0.5 * mp * (v**2 + 2.0 * v * l * w * np.cos(th) + l**2 * w**2) + 0.5 * mp * l**2 * w**2 / 3.0
    return float(kinetic + mp * g * l * np.cos(th))


def observation(states: NDArray) -> NDArray:
    """Network input: the state with theta wrapped into (-pi, pi]."""
    obs = np.array(states, dtype=np.float64, copy=True)
    obs[..., 1] = wrap_angle(obs[..., 1])
    return obs


FEATURE_KINDS = {"wrapped": 4, "trig": 5}


def features(states: NDArray, kind: str = "trig") -> NDArray:
    """Q-network input for a batch of states.

    ``"wrapped"`` is :func:`observation`. ``"trig"`` replaces theta by
    ``(sin, cos)``, which removes the jump at the hanging position where the
    wrapped angle flips between ``-pi`` and ``pi``.
    """
    if kind == "wrapped":
        return observation(states)
    if kind != "trig":
        raise ValueError(f"unknown feature kind {kind!r}")
    s = np.asarray(states, dtype=np.float64)
    th = s[..., 1]
    return np.stack([s[..., 0], np.sin(th), np.cos(th), s[..., 2], s[..., 3]], axis=-1)


def is_success(thetas: NDArray, window: int = 20, tol: float = 0.2) -> bool:
    """Pole within ``tol`` rad of upright over the final ``window`` states."""
    tail = np.abs(wrap_angle(np.asarray(thetas)[-window:]))
    return bool(np.all(tail < tol))


class CartpoleModel:
    """Batched :class:`~blendmpc.mdp.EnvModel` for one parameter set."""

    state_dim = STATE_DIM
    action_dim = ACTION_DIM

    def __init__(self, params: CartpoleParams | None = None):
        self.params = params or CartpoleParams()

    def step(self, states, actions, rng=None):
        return _step_fast(states, actions, self.params)

    def cost(self, states, actions):
        return _cost_batch(states, actions, self.params.velocity_cost)

    def rollout_batch(self, start_state, controls, rng=None):
        """Compiled equivalent of :func:`blendmpc.mdp.rollout_batch` for this model."""
        p = self.params
        return _rollout_compiled(
            np.ascontiguousarray(start_state, dtype=np.float64), np.ascontiguousarray(controls, dtype=np.float64),
            p.mass_cart, p.mass_pole, p.pole_length, p.gravity, p.dt, p.force_limit, p.substeps,
            p.velocity_cost == "squared",
        )

    def observe(self, states):
        return observation(states)

    def __repr__(self):
        return f"CartpoleModel({self.params})"
