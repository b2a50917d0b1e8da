"""Tiny tabular MDPs and exact dynamic programming.

Used as oracles: Monte-Carlo Q checks and the simulation-gap dominance test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray


@dataclass
class TabularModel:
    """Finite MDP exposed through the batched :class:`~blendmpc.mdp.EnvModel` interface.

    States and actions travel as length-1 float vectors holding the index.
    """

    transitions: NDArray  # (S, A, S)
    costs: NDArray  # (S, A)

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.costs = np.asarray(self.costs, dtype=np.float64)
        if not np.allclose(self.transitions.sum(-1), 1.0):
            raise ValueError("transition rows must sum to 1")
        self.state_dim = 1
        self.action_dim = 1

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def step(self, states, actions, rng=None):
        s = states[:, 0].astype(int)
        a = actions[:, 0].astype(int)
        probs = self.transitions[s, a]
        cdf = np.cumsum(probs, axis=1)
        u = rng.random((len(s), 1))
        nxt = np.minimum((u > cdf).sum(axis=1), self.n_states - 1)
        return nxt[:, None].astype(np.float64)

    def cost(self, states, actions):
        return self.costs[states[:, 0].astype(int), actions[:, 0].astype(int)]


def value_iteration(model: TabularModel, gamma: float, tol: float = 1e-12, max_iter: int = 100_000):
    """Optimal (minimum-cost) V and Q."""
    v = np.zeros(model.n_states)
    for _ in range(max_iter):
        q = model.costs + gamma * model.transitions @ v
        v_new = q.min(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    return v, model.costs + gamma * model.transitions @ v


def policy_q(model: TabularModel, policy: NDArray, gamma: float):
    """Exact Q^pi for a stochastic policy ``(S, A)`` by solving the linear system."""
    n = model.n_states
    p_pi = np.einsum("sa,sat->st", policy, model.transitions)
    c_pi = (policy * model.costs).sum(axis=1)
    v = np.linalg.solve(np.eye(n) - gamma * p_pi, c_pi)
    return model.costs + gamma * model.transitions @ v


def h_step_cost(model: TabularModel, policy: NDArray, gamma: float, horizon: int, terminal: NDArray) -> NDArray:
    """Expected ``sum_{i<H} gamma^i c_i + gamma^H terminal(s_H)`` from each start state."""
    j = np.asarray(terminal, dtype=np.float64)
    for _ in range(horizon):
        j = (policy * (model.costs + gamma * model.transitions @ j)).sum(axis=1)
    return j


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, cost_scale: float = 1.0) -> TabularModel:
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    c = rng.uniform(0.0, cost_scale, size=(n_states, n_actions))
    return TabularModel(p, c)


def perturb(model: TabularModel, alpha: float, rng: np.random.Generator) -> TabularModel:
    """Return a model with ``||P' - P||_1 <= alpha`` per (s, a) and ``|c' - c| <= alpha``.

    Each row is mixed toward a random distribution with the largest weight
    that keeps the L1 distance at or below ``alpha``.
    """
    other = rng.dirichlet(np.ones(model.n_states), size=model.transitions.shape[:2])
    dist = np.abs(other - model.transitions).sum(-1, keepdims=True)
    mix = np.minimum(1.0, alpha / np.maximum(dist, 1e-300)) * rng.uniform(0.5, 1.0, size=dist.shape)
    p = (1.0 - mix) * model.transitions + mix * other
    p /= p.sum(-1, keepdims=True)
    c = model.costs + rng.uniform(-alpha, alpha, size=model.costs.shape)
    return TabularModel(p, c)
