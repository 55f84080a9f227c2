"""Shared building blocks for the networks: init, norm, embeddings, Adam.

Parameters live in plain ``dict[str, np.ndarray]`` collections with float32
storage. Graph arithmetic happens in float64 (see :mod:`diffsep.autodiff`);
:func:`leaves` upcasts a parameter dict into differentiable graph leaves and
:class:`Adam` writes float64 update math back into float32 state, so a
checkpoint of the float32 arrays restores training bit-exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor

__all__ = ["he_normal", "leaves", "linear", "group_norm", "norm_groups",
           "sinusoidal_embedding", "Adam", "n_parameters"]


def he_normal(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Variance-scaled normal init, float32."""
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(np.float32)


def leaves(params: dict[str, np.ndarray], trainable: bool = True) -> dict[str, Tensor]:
    """Wrap a parameter dict as graph leaves (upcast to float64)."""
    return {k: Tensor(v.astype(np.float64), requires_grad=trainable) for k, v in params.items()}


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = x @ w
    return out if b is None else out + b


def norm_groups(channels: int) -> int:
    """Largest group count ≤ 8 dividing the channel count."""
    return math.gcd(8, channels)


def group_norm(x: Tensor, gain: Tensor, bias: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    """Per-example group normalization over a (B, C, H, W) tensor."""
    B, C, H, W = x.shape
    xg = x.reshape(B, groups, (C // groups) * H * W)
    mu = xg.mean(axis=2, keepdims=True)
    d = xg - mu
    var = (d * d).mean(axis=2, keepdims=True)
    xn = (d / (var + eps).sqrt()).reshape(B, C, H, W)
    return xn * gain.reshape(1, C, 1, 1) + bias.reshape(1, C, 1, 1)


def sinusoidal_embedding(t, dim: int) -> np.ndarray:
    """Standard sinusoidal position embedding of integer steps, shape (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb


def n_parameters(params: dict[str, np.ndarray]) -> int:
    return int(sum(v.size for v in params.values()))


class Adam(object):
    """Adaptive moment estimation with bias correction.

    Moments are stored float32 next to the float32 parameters; the update is
    computed in float64 and rounded back, keeping serialized optimizer state
    exact for deterministic resume.
    """

    def __init__(self, lr: float = 2e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, lr_scales: dict[str, float] | None = None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_scales = dict(lr_scales or {})
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def _lr_for(self, name: str) -> float:
        for prefix, mult in self.lr_scales.items():
            if name.startswith(prefix):
                return self.lr * mult
        return self.lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros(params[name].shape, dtype=np.float32)
                self.v[name] = np.zeros(params[name].shape, dtype=np.float32)
            m = b1 * self.m[name].astype(np.float64) + (1.0 - b1) * g
            v = b2 * self.v[name].astype(np.float64) + (1.0 - b2) * g * g
            update = self._lr_for(name) * (m / c1) / (np.sqrt(v / c2) + self.eps)
            params[name] = (params[name].astype(np.float64) - update).astype(np.float32)
            self.m[name] = m.astype(np.float32)
            self.v[name] = v.astype(np.float32)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name, arr in self.m.items():
            out[f"m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"v.{name}"] = arr
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        self.m = {k[2:]: v for k, v in tensors.items() if k.startswith("m.")}
        self.v = {k[2:]: v for k, v in tensors.items() if k.startswith("v.")}
