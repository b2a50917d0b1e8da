"""Feed-forward Q(s, a) network with manual backprop, Adam, and a FIFO replay buffer.

Checkpoint byte layout (all little-endian)::

    b"QNET"                      magic, 4 bytes
    uint32 version               currently 1
    uint32 n_sizes               number of layer sizes (layers + 1)
    uint32 sizes[n_sizes]        e.g. 5, 100, 100, 1
    float64 params[...]          per layer: W (in x out, row-major) then b (out)

A JSON sidecar (``<path>.json``) carries free-form config metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

MAGIC = b"QNET"
VERSION = 1


class QNetwork:
    """ReLU MLP over the concatenated ``(observation, action)``; identity output."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, zero: bool = False):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or sizes[-1] != 1 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        self.params: list[NDArray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if zero:
                w, b = np.zeros((fan_in, fan_out)), np.zeros(fan_out)
            else:
                bound = 1.0 / np.sqrt(fan_in)
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            self.params += [w, b]

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def copy(self) -> QNetwork:
        new = QNetwork.__new__(QNetwork)
        new.sizes = list(self.sizes)
        new.params = [p.copy() for p in self.params]
        return new

    def _inputs(self, obs, action) -> tuple[NDArray, bool]:
        obs = np.asarray(obs, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        single = obs.ndim == 1
        obs = np.atleast_2d(obs)
        if action.ndim == 0:
            action = action.reshape(1, 1)
        elif action.ndim == 1:
            action = action[None] if single else action[:, None]
        x = np.concatenate([obs, action], axis=1)
        if x.shape[1] != self.input_dim:
            raise ValueError(f"input dim {x.shape[1]} != network input dim {self.input_dim}")
        return x, single

    def _forward(self, x: NDArray):
        acts = [x]
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            z = acts[-1] @ self.params[2 * k] + self.params[2 * k + 1]
            acts.append(z if k == n_layers - 1 else np.maximum(z, 0.0))
        return acts

    def forward(self, obs, action):
        """Q estimate; scalar for a single input, ``(N,)`` for a batch."""
        x, single = self._inputs(obs, action)
        out = self._forward(x)[-1][:, 0]
        return float(out[0]) if single else out

    __call__ = forward

    def frozen(self, dtype=np.float32):
        """Immutable snapshot ``f(obs, actions) -> (N,)`` for planner use.

        Parameters are copied (and cast, float32 by default) at call time, so
        later optimiser steps do not leak into a running plan.
        """
        params = [p.astype(dtype) for p in self.params]
        n_layers = len(params) // 2

        def forward(obs, actions):
            h = np.concatenate([obs, actions], axis=1).astype(dtype)
            for k in range(n_layers):
                h = h @ params[2 * k] + params[2 * k + 1]
                if k < n_layers - 1:
                    np.maximum(h, 0.0, out=h)
            return h[:, 0].astype(np.float64)

        return forward

    def loss_and_grad(self, obs, action, target) -> tuple[float, list[NDArray]]:
        """Mean squared error against ``target`` and its exact parameter gradient."""
        x, _ = self._inputs(obs, action)
        target = np.atleast_1d(np.asarray(target, dtype=np.float64))
        if len(x) == 0:
            raise ValueError("empty batch")
        acts = self._forward(x)
        err = acts[-1][:, 0] - target
        loss = float(np.mean(err**2))
        delta = (2.0 / len(x)) * err[:, None]
        grads: list[NDArray] = [None] * len(self.params)  # type: ignore[list-item]
        for k in range(len(self.params) // 2 - 1, -1, -1):
            grads[2 * k] = acts[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.params[2 * k].T) * (acts[k] > 0.0)
        return loss, grads


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_network(cls, net: QNetwork, **kwargs) -> AdamState:
        state = cls(**kwargs)
        state.m = [np.zeros_like(p) for p in net.params]
        state.v = [np.zeros_like(p) for p in net.params]
        return state


def adam_step(net: QNetwork, state: AdamState, grads: list[NDArray]) -> None:
    """In-place Adam update with bias correction."""
    if len(grads) != len(net.params):
        raise ValueError("gradient list does not match parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for p, g, m, v in zip(net.params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.eps)


class ReplayBuffer:
    """Fixed-capacity FIFO of ``(obs, action, target)`` rows."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.targets = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, obs, action, target: float) -> None:
        self.obs[self.cursor] = obs
        self.actions[self.cursor] = action
        self.targets[self.cursor] = target
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return self.obs[idx], self.actions[idx], self.targets[idx]

    def ordered(self):
        """Stored rows oldest first."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (self.cursor + np.arange(self.capacity)) % self.capacity
        return self.obs[idx], self.actions[idx], self.targets[idx]


def save_checkpoint(net: QNetwork, path, metadata: dict | None = None) -> None:
    path = Path(path)
    header = MAGIC + struct.pack("<II", VERSION, len(net.sizes)) + struct.pack(f"<{len(net.sizes)}I", *net.sizes)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params)
    path.write_bytes(header + body)
    sidecar = {"format": "QNET", "version": VERSION, "sizes": net.sizes, "config": metadata or {}}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple[QNetwork, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic bytes")
    version, n_sizes = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    sizes = list(struct.unpack_from(f"<{n_sizes}I", raw, 12))
    offset = 12 + 4 * n_sizes
    net = QNetwork(sizes, zero=True)
    for k, p in enumerate(net.params):
        count = p.size
        net.params[k] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(p.shape).astype(np.float64)
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text()).get("config", {}) if sidecar.exists() else {}
    return net, meta
