"""Compact convolutional feature extractor and angular-margin subject head.

The extractor follows the classic compact EEG recipe adapted to stacked
windows: the stacks axis enters as input feature planes, a temporal
convolution mixes them, a depthwise convolution spanning all sensor channels
collapses the spatial axis, a separable temporal convolution refines, and
average pooling plus a linear projection yield a d-dimensional embedding.
After the spatial stage the activations are squared, pooled, and passed
through a log — band-power features in the filter-bank tradition, which
makes the embedding phase-insensitive (rhythm energy, not waveform sign,
identifies a subject).

The head keeps one weight row per subject on the unit hypersphere. Logits
are r·cos θ_j with θ_j the angle between the normalized embedding and row j;
in training mode an additive angular margin m is applied to the target row:
logit_target = r·cos(θ_target + m), with θ + m clamped at π.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .autodiff import Tensor, conv2d, select_index
from .errors import GeometryError, NonFiniteError

__all__ = ["ClassifierArch", "ClassifierParams", "init_classifier",
           "extract_features", "extract_features_tensors", "extract_intermediate",
           "ArcMarginHead", "init_arc_head", "arc_logits", "arc_logits_tensors",
           "predict_subject"]


@dataclass(frozen=True)
class ClassifierArch:
    channels: int
    window: int
    stacks: int
    embed_dim: int = 128
    f1: int = 8
    depth_mult: int = 2
    f2: int = 16
    kt: int = 15
    k2: int = 7
    pool1: int = 4
    pool2: int = 8

    @property
    def penultimate_dim(self) -> int:
        return self.f2 * (self.window // (self.pool1 * self.pool2))

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ClassifierArch":
        return ClassifierArch(**d)


@dataclass
class ClassifierParams:
    arch: ClassifierArch
    tensors: dict[str, np.ndarray]


def init_classifier(channels: int, window: int, stacks: int, embed_dim: int = 128,
                    f1: int = 8, depth_mult: int = 2, f2: int = 16,
                    kt: int = 15, k2: int = 7, pool1: int = 4, pool2: int = 8,
                    seed: int = 0) -> ClassifierParams:
    """Deterministic extractor init for the given window-stack geometry."""
    if min(channels, window, stacks, embed_dim) < 1:
        raise GeometryError("classifier geometry values must be ≥ 1")
    if window % (pool1 * pool2):
        raise GeometryError(f"window {window} must be divisible by pool1*pool2 = {pool1 * pool2}")
    if kt % 2 == 0 or k2 % 2 == 0:
        raise GeometryError("temporal kernel sizes must be odd")
    arch = ClassifierArch(channels=channels, window=window, stacks=stacks,
                          embed_dim=embed_dim, f1=f1, depth_mult=depth_mult, f2=f2,
                          kt=kt, k2=k2, pool1=pool1, pool2=pool2)
    rng = np.random.default_rng(seed)
    fd = f1 * depth_mult
    t: dict[str, np.ndarray] = {}
    t["conv_t.w"] = nn.he_normal(rng, (f1, stacks, 1, kt), stacks * kt)
    t["norm1.g"] = np.ones(f1, dtype=np.float32)
    t["norm1.b"] = np.zeros(f1, dtype=np.float32)
    t["conv_d.w"] = nn.he_normal(rng, (fd, 1, channels, 1), channels)
    t["norm2.g"] = np.ones(fd, dtype=np.float32)
    t["norm2.b"] = np.zeros(fd, dtype=np.float32)
    t["conv_s.w"] = nn.he_normal(rng, (fd, 1, 1, k2), k2)
    t["conv_p.w"] = nn.he_normal(rng, (f2, fd, 1, 1), fd)
    t["norm3.g"] = np.ones(f2, dtype=np.float32)
    t["norm3.b"] = np.zeros(f2, dtype=np.float32)
    t["proj.w"] = nn.he_normal(rng, (arch.penultimate_dim, embed_dim), arch.penultimate_dim)
    t["proj.b"] = np.zeros(embed_dim, dtype=np.float32)
    return ClassifierParams(arch=arch, tensors=t)


def _pool_time(h: Tensor, p: int) -> Tensor:
    B, C, H, W = h.shape
    return h.reshape(B, C, H, W // p, p).mean(axis=4)


def _backbone(p: dict[str, Tensor], arch: ClassifierArch, x: Tensor) -> Tensor:
    """Shared trunk up to the flattened penultimate features."""
    B = x.shape[0]
    h = x.transpose(0, 3, 1, 2)                                   # (B, S, C, W)
    h = conv2d(h, p["conv_t.w"], padding=(0, arch.kt // 2))       # (B, f1, C, W)
    h = nn.group_norm(h, p["norm1.g"], p["norm1.b"], nn.norm_groups(arch.f1))
    h = conv2d(h, p["conv_d.w"], groups=arch.f1)                  # (B, f1*D, 1, W)
    fd = arch.f1 * arch.depth_mult
    h = nn.group_norm(h, p["norm2.g"], p["norm2.b"], nn.norm_groups(fd))
    h = (_pool_time(h * h, arch.pool1) + 1e-5).log()              # log band power
    h = conv2d(h, p["conv_s.w"], padding=(0, arch.k2 // 2), groups=fd)
    h = conv2d(h, p["conv_p.w"])                                  # (B, f2, 1, W/p1)
    h = nn.group_norm(h, p["norm3.g"], p["norm3.b"], nn.norm_groups(arch.f2))
    h = _pool_time(h.elu(), arch.pool2)
    return h.reshape(B, arch.penultimate_dim)


def extract_features_tensors(params: ClassifierParams, x: Tensor,
                             trainable: bool = False) -> tuple[Tensor, dict[str, Tensor]]:
    p = nn.leaves(params.tensors, trainable=trainable)
    flat = _backbone(p, params.arch, x)
    return nn.linear(flat, p["proj.w"], p["proj.b"]), p


def _check_input(params: ClassifierParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    a = params.arch
    if x.ndim != 4 or x.shape[1:] != (a.channels, a.window, a.stacks):
        raise GeometryError(
            f"input shape {x.shape} incompatible with classifier geometry "
            f"{a.channels}×{a.window}×{a.stacks}")
    if not np.isfinite(x).all():
        raise NonFiniteError("classifier input contains non-finite values")
    return x, single


def extract_features(params: ClassifierParams, x) -> np.ndarray:
    """Embed a batch of channels×window×stacks fields as d-vectors (unnormalized)."""
    x, single = _check_input(params, x)
    out, _ = extract_features_tensors(params, Tensor(x))
    return out.data[0] if single else out.data


def extract_intermediate(params: ClassifierParams, x) -> np.ndarray:
    """Flattened penultimate feature map (before the embedding projection)."""
    x, single = _check_input(params, x)
    p = nn.leaves(params.tensors, trainable=False)
    out = _backbone(p, params.arch, Tensor(x))
    return out.data[0] if single else out.data


# -- angular-margin head -------------------------------------------------------

COS_CLAMP = 1e-7


@dataclass
class ArcMarginHead:
    """Per-subject weight rows with hypersphere radius r and angular margin m."""

    W: np.ndarray
    r: float
    m: float

    @property
    def n_subjects(self) -> int:
        return self.W.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.W.shape[1]


def init_arc_head(n_subjects: int, embed_dim: int, r: float = 30.0, m: float = 0.5,
                  seed: int = 0) -> ArcMarginHead:
    if n_subjects < 1 or embed_dim < 1:
        raise GeometryError("head needs n_subjects ≥ 1 and embed_dim ≥ 1")
    if not (r > 0):
        raise ValueError(f"radius must be positive, got {r}")
    if not (0.0 <= m < math.pi / 2):
        raise ValueError(f"margin must lie in [0, π/2), got {m}")
    rng = np.random.default_rng(seed)
    W = (rng.standard_normal((n_subjects, embed_dim)) / math.sqrt(embed_dim)).astype(np.float32)
    return ArcMarginHead(W=W, r=float(r), m=float(m))


def arc_logits_tensors(W: Tensor, e: Tensor, r: float, m: float,
                       target: np.ndarray | None) -> Tensor:
    """Differentiable logits; rows of W and embeddings are L2-normalized."""
    wn = W * ((W * W).sum(axis=1, keepdims=True) + 1e-24) ** -0.5
    en = e * ((e * e).sum(axis=1, keepdims=True) + 1e-24) ** -0.5
    cos = (en @ wn.transpose(1, 0)).clip(-1.0 + COS_CLAMP, 1.0 - COS_CLAMP)
    if target is None or m == 0.0:
        return cos * r
    theta = cos.arccos()
    cos_m = (theta + m).clip(0.0, math.pi).cos()
    onehot = np.zeros(cos.shape)
    onehot[np.arange(cos.shape[0]), np.asarray(target)] = 1.0
    onehot = Tensor(onehot)
    return (cos * (1.0 - onehot) + cos_m * onehot) * r


def _check_embedding(e) -> tuple[np.ndarray, bool]:
    e = np.asarray(e, dtype=np.float64)
    single = e.ndim == 1
    if single:
        e = e[None]
    if not np.isfinite(e).all():
        raise NonFiniteError("embedding contains non-finite values")
    norms = np.linalg.norm(e, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding cannot be placed on the hypersphere")
    return e, single


def arc_logits(head: ArcMarginHead, e, target=None) -> np.ndarray:
    """Per-subject logits for one embedding or a batch.

    With ``target`` given, the margin is added to the target angle (training
    mode); with ``target=None`` no margin is applied anywhere (inference).
    """
    e, single = _check_embedding(e)
    if target is not None:
        target = np.atleast_1d(np.asarray(target))
        if np.any(target < 0) or np.any(target >= head.n_subjects):
            raise ValueError(f"target ids {target} out of range")
    out = arc_logits_tensors(Tensor(head.W.astype(np.float64)), Tensor(e),
                             head.r, head.m, target).data
    return out[0] if single else out


def predict_subject(head: ArcMarginHead, e) -> int | np.ndarray:
    """Argmax subject under inference-mode logits; ties resolve to lowest id."""
    e, single = _check_embedding(e)
    logits = arc_logits(head, e, target=None)
    pred = np.argmax(logits, axis=1)
    return int(pred[0]) if single else pred
