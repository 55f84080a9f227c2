"""The four training objectives and their weighted combination.

All losses reduce by mean over elements, records, and batch so the weight
defaults do not depend on geometry or batch size; the one exception is the
cross-Gram penalty, which sums squared off-diagonal entries within an example
(the Gram matrix is small and its size is part of the quantity) and averages
over the batch only.

Weights are applied exactly once: the standalone loss functions return
λ-scaled values, while :func:`total_loss` consumes raw (unweighted) values
and applies the weights itself. The training engine uses the raw+total path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, gather_positions, log_softmax, select_index
from .windows import OverlapMap

__all__ = ["LossWeights", "LossReport", "RawLosses", "reverse_loss", "orthogonal_loss",
           "arc_margin_loss", "temporal_difference_loss", "total_loss",
           "reverse_raw", "orthogonal_raw", "arc_margin_raw", "temporal_difference_raw"]


@dataclass(frozen=True)
class LossWeights:
    lambda_r: float = 1.0
    lambda_o: float = 0.1
    lambda_arc: float = 0.1
    lambda_td: float = 0.5

    def __post_init__(self):
        vals = (self.lambda_r, self.lambda_o, self.lambda_arc, self.lambda_td)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"loss weights must be finite and nonnegative, got {vals}")
        if self.lambda_r <= 0:
            raise ValueError("lambda_r must be positive")


@dataclass(frozen=True)
class RawLosses:
    """Unweighted per-term values, as produced inside a training step."""

    r: float
    o: float
    arc: float
    td: float


@dataclass(frozen=True)
class LossReport:
    """Weighted terms l_* = λ_*·raw_*, their raw values, and the total."""

    raw_r: float
    raw_o: float
    raw_arc: float
    raw_td: float
    l_r: float
    l_o: float
    l_arc: float
    l_td: float
    total: float


# -- differentiable cores (raw, unweighted) ------------------------------------


def reverse_raw(eps: Tensor, eps_theta: Tensor, eps_phi: Tensor) -> Tensor:
    """mean((ε − ε_θ − ε_φ)²) over every element."""
    d = eps - eps_theta - eps_phi
    return (d * d).mean()


def _stack_matrix(t: Tensor) -> Tensor:
    """Matricize (…, C, W, S) to (…, S, C·W)."""
    if t.ndim == 3:
        C, W, S = t.shape
        return t.transpose(2, 0, 1).reshape(1, S, C * W)
    B, C, W, S = t.shape
    return t.transpose(0, 3, 1, 2).reshape(B, S, C * W)


def orthogonal_raw(eps_theta: Tensor, eps_phi: Tensor) -> Tensor:
    """Batch mean of Σ_{i≠j} G[i,j]² with G the stacks×stacks cross-Gram."""
    a = _stack_matrix(eps_theta)
    b = _stack_matrix(eps_phi)
    gram = a @ b.transpose(0, 2, 1)
    S = gram.shape[-1]
    mask = Tensor(1.0 - np.eye(S))
    off = gram * mask
    return (off * off).sum(axis=(1, 2)).mean()


def arc_margin_raw(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the target logit (max-subtraction stabilized)."""
    logp = log_softmax(logits, axis=1)
    return -select_index(logp, np.asarray(targets)).mean()


def temporal_difference_raw(y: Tensor, omap: OverlapMap) -> Tensor:
    """Mean squared disagreement over all overlap records and channels."""
    if len(omap) == 0:
        return Tensor(0.0)
    W, S = y.shape[-2], y.shape[-1]
    if omap.col_a.max() >= W or omap.stack_b.max() >= S:
        raise ValueError(
            f"overlap map (window {omap.window}, stacks {omap.stacks}) "
            f"out of range for tensor with window {W}, stacks {S}")
    a = gather_positions(y, omap.col_a, omap.stack_a)
    b = gather_positions(y, omap.col_b, omap.stack_b)
    d = a - b
    return (d * d).mean()


# -- public λ-scaled wrappers ----------------------------------------------------


def _as_finite_array(name: str, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def reverse_loss(eps, eps_theta, eps_phi, w: LossWeights) -> float:
    eps = _as_finite_array("eps", eps)
    eps_theta = _as_finite_array("eps_theta", eps_theta)
    eps_phi = _as_finite_array("eps_phi", eps_phi)
    if not (eps.shape == eps_theta.shape == eps_phi.shape):
        raise ValueError(
            f"shape mismatch: {eps.shape}, {eps_theta.shape}, {eps_phi.shape}")
    return w.lambda_r * reverse_raw(Tensor(eps), Tensor(eps_theta), Tensor(eps_phi)).item()


def orthogonal_loss(eps_theta, eps_phi, w: LossWeights) -> float:
    eps_theta = _as_finite_array("eps_theta", eps_theta)
    eps_phi = _as_finite_array("eps_phi", eps_phi)
    if eps_theta.shape != eps_phi.shape:
        raise ValueError(f"shape mismatch: {eps_theta.shape} vs {eps_phi.shape}")
    return w.lambda_o * orthogonal_raw(Tensor(eps_theta), Tensor(eps_phi)).item()


def arc_margin_loss(logits, targets, w: LossWeights) -> float:
    logits = _as_finite_array("logits", logits)
    targets = np.atleast_1d(np.asarray(targets))
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError(f"logits must be a nonempty batch of vectors, got {logits.shape}")
    if targets.shape[0] != logits.shape[0]:
        raise ValueError("one target per logits row required")
    return w.lambda_arc * arc_margin_raw(Tensor(logits), targets).item()


def temporal_difference_loss(y, omap: OverlapMap, w: LossWeights) -> float:
    y = _as_finite_array("y", y)
    return w.lambda_td * temporal_difference_raw(Tensor(y), omap).item()


def total_loss(parts: RawLosses, w: LossWeights) -> LossReport:
    """Combine raw per-term values into a weighted report."""
    for name in ("r", "o", "arc", "td"):
        if not np.isfinite(getattr(parts, name)):
            raise ValueError(f"loss term {name!r} is non-finite: {getattr(parts, name)}")
    l_r = w.lambda_r * parts.r
    l_o = w.lambda_o * parts.o
    l_arc = w.lambda_arc * parts.arc
    l_td = w.lambda_td * parts.td
    return LossReport(
        raw_r=parts.r, raw_o=parts.o, raw_arc=parts.arc, raw_td=parts.td,
        l_r=l_r, l_o=l_o, l_arc=l_arc, l_td=l_td,
        total=l_r + l_o + l_arc + l_td,
    )
