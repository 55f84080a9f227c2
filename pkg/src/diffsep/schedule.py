"""Fixed-variance diffusion schedule and the closed-form chain updates.

The forward (noising) chain over steps t = 1..T is governed by per-step
variances β_t with

    α_t = 1 − β_t,   ᾱ_t = ∏_{i≤t} α_i,   σ_t = √β_t,

giving the closed-form marginal

    x_t = √ᾱ_t · x_0 + √(1 − ᾱ_t) · ε,        ε ~ N(0, I)

and the ancestral (denoising) update

    x_{t−1} = (1/√α_t) (x_t − (1−α_t)/√(1−ᾱ_t) · ε̂) + σ_t · z.

Steps are 1-indexed: t ∈ {1..T}, index 0 is the data. Array fields of
:class:`NoiseSchedule` store step t at position t−1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseSchedule", "make_linear_schedule", "q_sample", "ancestral_step"]


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable per-step variance coefficients of a diffusion chain."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def describe(self) -> dict:
        """Serializable descriptor; schedules are rebuilt from it on load."""
        return {
            "kind": "linear",
            "T": int(self.T),
            "beta_start": float(self.beta[0]),
            "beta_end": float(self.beta[-1]),
        }

    def _check_t(self, t) -> np.ndarray:
        t = np.asarray(t)
        if not np.issubdtype(t.dtype, np.integer):
            raise ValueError(f"step index must be integer, got dtype {t.dtype}")
        if np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"step index {t} out of range 1..{self.T}")
        return t


def make_linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Build a schedule with β interpolated linearly from β_1 to β_T.

    Parameters
    ----------
    T : number of diffusion steps, ≥ 1.
    beta_start, beta_end : endpoint variances, 0 < beta_start ≤ beta_end < 1.
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not (np.isfinite(beta_start) and np.isfinite(beta_end)):
        raise ValueError("schedule bounds must be finite")
    if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
        raise ValueError(f"schedule bounds must lie in (0, 1), got ({beta_start}, {beta_end})")
    if beta_start > beta_end:
        raise ValueError(f"beta_start {beta_start} exceeds beta_end {beta_end}")

    if T == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    sched = NoiseSchedule(T=int(T), beta=beta, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma)
    for arr in (beta, alpha, alpha_bar, sigma):
        arr.setflags(write=False)
    return sched


def _coef(values: np.ndarray, t: np.ndarray, ndim: int) -> np.ndarray:
    """Pick per-step coefficients and shape them to broadcast over a batch.

    Scalar t broadcasts over everything; a vector t of length B is aligned
    with the leading (batch) axis of an ndim-dimensional tensor.
    """
    c = values[t - 1]
    if c.ndim == 0:
        return c
    return c.reshape(c.shape + (1,) * (ndim - 1))


def q_sample(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Draw x_t from the closed-form marginal q(x_t | x_0).

    Returns √ᾱ_t · x0 + √(1 − ᾱ_t) · eps elementwise. ``t`` may be a scalar
    step or a length-B integer vector paired with a batch-leading x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"eps shape {eps.shape} must match x0 shape {x0.shape}")
    if not np.isfinite(x0).all() or not np.isfinite(eps).all():
        raise ValueError("q_sample inputs must be finite")
    t = sched._check_t(t)
    if t.ndim == 1 and (x0.ndim == 0 or x0.shape[0] != t.shape[0]):
        raise ValueError(f"vector t of length {t.shape[0]} needs a matching batch axis")
    ab = _coef(sched.alpha_bar, t, x0.ndim)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ancestral_step(x_t: np.ndarray, t, eps_pred: np.ndarray, z, sched: NoiseSchedule) -> np.ndarray:
    """One reverse-chain update from x_t to x_{t−1}.

    Computes (1/√α_t)(x_t − (1−α_t)/√(1−ᾱ_t) · eps_pred) + σ_t · z. At the
    terminal step t = 1 no fresh noise may be injected, so z must be zero
    (pass 0 or an all-zero array).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if x_t.shape != eps_pred.shape:
        raise ValueError(f"eps_pred shape {eps_pred.shape} must match x_t shape {x_t.shape}")
    t = sched._check_t(t)
    z = np.asarray(z, dtype=np.float64)
    if z.ndim and z.shape != x_t.shape:
        raise ValueError(f"z shape {z.shape} must match x_t shape {x_t.shape}")
    if np.any(t == 1) and np.any(z != 0.0):
        raise ValueError("z must be all-zeros at t = 1")

    alpha = _coef(sched.alpha, t, x_t.ndim)
    ab = _coef(sched.alpha_bar, t, x_t.ndim)
    sigma = _coef(sched.sigma, t, x_t.ndim)
    mean = (x_t - (1.0 - alpha) / np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(alpha)
    return mean + sigma * z
