"""Two-stream noise predictor over stacked windows.

Input tensors are channels×window×stacks fields; channels act as feature
planes over the 2-D (window, stacks) grid. The content stream predicts the
subject-independent part of the noise through a three-level UNet (three
temporal down-samplings, bottleneck, three up-samplings with skip fusion).
The subject stream is a slim one-level UNet whose bottleneck is fused with a
per-subject token through multi-head cross-attention (token queries, feature
positions as keys/values). Both streams receive a sinusoidal step embedding
projected into every block; the content stream never reads the subject token,
so its output is bit-identical for any subject id.

Down/up-sampling acts on the window axis only, by a factor of 2 per level,
so the window size must be divisible by 2^levels. The stacks axis is handled
convolutionally and may vary at inference time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .autodiff import Tensor, concat, conv2d, repeat_axis, softmax, take_rows
from .errors import GeometryError, InvalidSubjectError, NonFiniteError

__all__ = ["DenoiserArch", "DenoiserParams", "init_params", "forward", "forward_tensors"]


@dataclass(frozen=True)
class DenoiserArch:
    """Geometry and width hyperparameters fixed at initialization."""

    n_subjects: int
    channels: int
    window: int
    stacks: int
    widths: tuple = (32, 64, 128)
    subject_width: int = 32
    token_dim: int = 128
    n_heads: int = 4
    time_dim: int = 64

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @staticmethod
    def from_dict(d: dict) -> "DenoiserArch":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return DenoiserArch(**d)


@dataclass
class DenoiserParams:
    """Named float32 tensors split into ``phi.*`` (content) and ``theta.*`` (subject)."""

    arch: DenoiserArch
    tensors: dict[str, np.ndarray]

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.startswith(prefix)}


def _res_block(tensors, rng, prefix, c_in, c_out, time_dim):
    g1 = nn.norm_groups(c_in)
    tensors[f"{prefix}.norm1.g"] = np.ones(c_in, dtype=np.float32)
    tensors[f"{prefix}.norm1.b"] = np.zeros(c_in, dtype=np.float32)
    tensors[f"{prefix}.conv1.w"] = nn.he_normal(rng, (c_out, c_in, 3, 3), c_in * 9)
    tensors[f"{prefix}.conv1.b"] = np.zeros(c_out, dtype=np.float32)
    tensors[f"{prefix}.temb.w"] = nn.he_normal(rng, (time_dim, c_out), time_dim)
    tensors[f"{prefix}.temb.b"] = np.zeros(c_out, dtype=np.float32)
    tensors[f"{prefix}.norm2.g"] = np.ones(c_out, dtype=np.float32)
    tensors[f"{prefix}.norm2.b"] = np.zeros(c_out, dtype=np.float32)
    tensors[f"{prefix}.conv2.w"] = nn.he_normal(rng, (c_out, c_out, 3, 3), c_out * 9)
    tensors[f"{prefix}.conv2.b"] = np.zeros(c_out, dtype=np.float32)
    if c_in != c_out:
        tensors[f"{prefix}.skip.w"] = nn.he_normal(rng, (c_out, c_in, 1, 1), c_in)
    del g1


def init_params(n_subjects: int, channels: int, window: int, stacks: int,
                width_config: tuple = (32, 64, 128), subject_width: int = 32,
                token_dim: int = 128, n_heads: int = 4, time_dim: int = 64,
                seed: int = 0) -> DenoiserParams:
    """Build a deterministic parameter collection for the given geometry.

    The output convolution of each stream is zero-initialized so a fresh
    model predicts exactly zero noise.
    """
    if n_subjects < 1:
        raise GeometryError(f"n_subjects must be ≥ 1, got {n_subjects}")
    if min(channels, window, stacks) < 1:
        raise GeometryError("channels, window, and stacks must be ≥ 1")
    widths = tuple(int(w) for w in width_config)
    factor = 2 ** len(widths)
    if window % factor:
        raise GeometryError(
            f"window {window} must be divisible by {factor} "
            f"for {len(widths)} down-sampling levels")
    if subject_width % n_heads:
        raise GeometryError(f"subject_width {subject_width} not divisible by {n_heads} heads")

    arch = DenoiserArch(n_subjects=n_subjects, channels=channels, window=window,
                        stacks=stacks, widths=widths, subject_width=subject_width,
                        token_dim=token_dim, n_heads=n_heads, time_dim=time_dim)
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}

    # content stream
    tensors["phi.temb.w"] = nn.he_normal(rng, (time_dim, time_dim), time_dim)
    tensors["phi.temb.b"] = np.zeros(time_dim, dtype=np.float32)
    tensors["phi.stem.w"] = nn.he_normal(rng, (widths[0], channels, 3, 3), channels * 9)
    tensors["phi.stem.b"] = np.zeros(widths[0], dtype=np.float32)
    cur = widths[0]
    for i, w in enumerate(widths):
        _res_block(tensors, rng, f"phi.down{i}", cur, w, time_dim)
        tensors[f"phi.down{i}.ds.w"] = nn.he_normal(rng, (w, w, 3, 3), w * 9)
        tensors[f"phi.down{i}.ds.b"] = np.zeros(w, dtype=np.float32)
        cur = w
    _res_block(tensors, rng, "phi.mid", cur, cur, time_dim)
    for i in reversed(range(len(widths))):
        tensors[f"phi.up{i}.us.w"] = nn.he_normal(rng, (cur, cur, 3, 3), cur * 9)
        tensors[f"phi.up{i}.us.b"] = np.zeros(cur, dtype=np.float32)
        out_w = widths[i - 1] if i > 0 else widths[0]
        _res_block(tensors, rng, f"phi.up{i}", cur + widths[i], out_w, time_dim)
        cur = out_w
    tensors["phi.head.norm.g"] = np.ones(cur, dtype=np.float32)
    tensors["phi.head.norm.b"] = np.zeros(cur, dtype=np.float32)
    tensors["phi.head.w"] = np.zeros((channels, cur, 3, 3), dtype=np.float32)
    tensors["phi.head.b"] = np.zeros(channels, dtype=np.float32)

    # subject stream
    u = subject_width
    tensors["theta.token"] = (rng.standard_normal((n_subjects, token_dim))
                              / math.sqrt(token_dim)).astype(np.float32)
    tensors["theta.temb.w"] = nn.he_normal(rng, (time_dim, time_dim), time_dim)
    tensors["theta.temb.b"] = np.zeros(time_dim, dtype=np.float32)
    tensors["theta.stem.w"] = nn.he_normal(rng, (u, channels, 3, 3), channels * 9)
    tensors["theta.stem.b"] = np.zeros(u, dtype=np.float32)
    _res_block(tensors, rng, "theta.down0", u, u, time_dim)
    tensors["theta.down0.ds.w"] = nn.he_normal(rng, (u, u, 3, 3), u * 9)
    tensors["theta.down0.ds.b"] = np.zeros(u, dtype=np.float32)
    _res_block(tensors, rng, "theta.mid", u, u, time_dim)
    tensors["theta.attn.wq"] = nn.he_normal(rng, (token_dim, u), token_dim)
    tensors["theta.attn.wk"] = nn.he_normal(rng, (u, u), u)
    tensors["theta.attn.wv"] = nn.he_normal(rng, (u, u), u)
    tensors["theta.attn.wo"] = nn.he_normal(rng, (u, u), u)
    _res_block(tensors, rng, "theta.mid2", u, u, time_dim)
    tensors["theta.up0.us.w"] = nn.he_normal(rng, (u, u, 3, 3), u * 9)
    tensors["theta.up0.us.b"] = np.zeros(u, dtype=np.float32)
    _res_block(tensors, rng, "theta.up0", u, u, time_dim)
    tensors["theta.head.norm.g"] = np.ones(u, dtype=np.float32)
    tensors["theta.head.norm.b"] = np.zeros(u, dtype=np.float32)
    tensors["theta.head.w"] = np.zeros((channels, u, 3, 3), dtype=np.float32)
    tensors["theta.head.b"] = np.zeros(channels, dtype=np.float32)

    return DenoiserParams(arch=arch, tensors=tensors)


def _apply_res_block(p, prefix, h, temb, c_in, c_out):
    y = nn.group_norm(h, p[f"{prefix}.norm1.g"], p[f"{prefix}.norm1.b"], nn.norm_groups(c_in))
    y = conv2d(y.silu(), p[f"{prefix}.conv1.w"], p[f"{prefix}.conv1.b"], padding=(1, 1))
    shift = nn.linear(temb, p[f"{prefix}.temb.w"], p[f"{prefix}.temb.b"])
    y = y + shift.reshape(shift.shape[0], c_out, 1, 1)
    y = nn.group_norm(y, p[f"{prefix}.norm2.g"], p[f"{prefix}.norm2.b"], nn.norm_groups(c_out))
    y = conv2d(y.silu(), p[f"{prefix}.conv2.w"], p[f"{prefix}.conv2.b"], padding=(1, 1))
    if c_in != c_out:
        h = conv2d(h, p[f"{prefix}.skip.w"])
    return y + h


def _position_codes(H, W, dim):
    """Fixed 2-D sinusoidal codes for the flattened (H, W) grid, (H·W, dim).

    Half the dimensions encode the window axis, half the stacks axis. The
    codes disambiguate positions for the attention fusion; without them a
    single token query collapses to a per-channel bias, which cannot carry
    temporally structured subject content into the stream.
    """
    def axis_codes(n, d):
        half = d // 2
        freqs = np.exp(-math.log(200.0) * np.arange(half) / max(half - 1, 1))
        args = np.arange(n)[:, None] * freqs[None, :]
        return np.concatenate([np.sin(args), np.cos(args)], axis=1)

    dh, dw = dim - dim // 2, dim // 2
    ch = axis_codes(H, dh)
    cw = axis_codes(W, dw)
    grid = np.concatenate(
        [np.repeat(ch, W, axis=0), np.tile(cw, (H, 1))], axis=1)
    return grid  # (H*W, dim)


def _cross_attention(p, h, token, n_heads, width):
    """Token-query attention over flattened feature positions, added residually.

    The subject token forms the query at every position (position codes added
    on queries, keys, and values), so the fused output is position-structured
    and can inject subject content even when the features are pure noise.
    """
    B, C, H, W = h.shape
    P = H * W
    dh = width // n_heads
    pos = Tensor(_position_codes(H, W, C))                        # (P, C)
    feats = h.reshape(B, C, P).transpose(0, 2, 1) + pos           # (B, P, C)
    q = nn.linear(token, p["theta.attn.wq"]).reshape(-1, 1, width) + pos  # (B, P, u)
    k = nn.linear(feats, p["theta.attn.wk"])
    v = nn.linear(feats, p["theta.attn.wv"])
    qh = q.reshape(B, P, n_heads, dh).transpose(0, 2, 1, 3)       # (B, h, P, dh)
    kh = k.reshape(B, P, n_heads, dh).transpose(0, 2, 1, 3)
    vh = v.reshape(B, P, n_heads, dh).transpose(0, 2, 1, 3)
    att = softmax((qh @ kh.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh)), axis=-1)
    out = (att @ vh).transpose(0, 2, 1, 3).reshape(B, P, width)
    fused = nn.linear(out, p["theta.attn.wo"])                    # (B, P, u)
    return h + fused.transpose(0, 2, 1).reshape(B, C, H, W)


def forward_tensors(params: DenoiserParams, x: Tensor, t: np.ndarray, s: np.ndarray,
                    trainable: bool = False) -> tuple[Tensor, Tensor, dict[str, Tensor]]:
    """Differentiable forward pass; returns (eps_theta, eps_phi, leaves)."""
    arch = params.arch
    p = nn.leaves(params.tensors, trainable=trainable)
    temb = nn.sinusoidal_embedding(t, arch.time_dim)
    if temb.shape[0] == 1 and x.shape[0] > 1:
        temb = np.broadcast_to(temb, (x.shape[0], arch.time_dim))
    temb = Tensor(temb)

    widths = arch.widths
    # content stream
    tc = nn.linear(temb, p["phi.temb.w"], p["phi.temb.b"]).silu()
    h = conv2d(x, p["phi.stem.w"], p["phi.stem.b"], padding=(1, 1))
    cur = widths[0]
    skips = []
    for i, w in enumerate(widths):
        h = _apply_res_block(p, f"phi.down{i}", h, tc, cur, w)
        skips.append(h)
        h = conv2d(h, p[f"phi.down{i}.ds.w"], p[f"phi.down{i}.ds.b"],
                   stride=(2, 1), padding=(1, 1))
        cur = w
    h = _apply_res_block(p, "phi.mid", h, tc, cur, cur)
    for i in reversed(range(len(widths))):
        h = repeat_axis(h, 2, 2)
        h = conv2d(h, p[f"phi.up{i}.us.w"], p[f"phi.up{i}.us.b"], padding=(1, 1))
        h = concat([h, skips[i]], axis=1)
        out_w = widths[i - 1] if i > 0 else widths[0]
        h = _apply_res_block(p, f"phi.up{i}", h, tc, cur + widths[i], out_w)
        cur = out_w
    h = nn.group_norm(h, p["phi.head.norm.g"], p["phi.head.norm.b"], nn.norm_groups(cur))
    eps_phi = conv2d(h.silu(), p["phi.head.w"], p["phi.head.b"], padding=(1, 1))

    # subject stream
    u = arch.subject_width
    ts = nn.linear(temb, p["theta.temb.w"], p["theta.temb.b"]).silu()
    token = take_rows(p["theta.token"], s)
    g = conv2d(x, p["theta.stem.w"], p["theta.stem.b"], padding=(1, 1))
    g = _apply_res_block(p, "theta.down0", g, ts, u, u)
    g = conv2d(g, p["theta.down0.ds.w"], p["theta.down0.ds.b"], stride=(2, 1), padding=(1, 1))
    g = _apply_res_block(p, "theta.mid", g, ts, u, u)
    g = _cross_attention(p, g, token, arch.n_heads, u)
    g = _apply_res_block(p, "theta.mid2", g, ts, u, u)
    g = repeat_axis(g, 2, 2)
    g = conv2d(g, p["theta.up0.us.w"], p["theta.up0.us.b"], padding=(1, 1))
    g = _apply_res_block(p, "theta.up0", g, ts, u, u)
    g = nn.group_norm(g, p["theta.head.norm.g"], p["theta.head.norm.b"], nn.norm_groups(u))
    eps_theta = conv2d(g.silu(), p["theta.head.w"], p["theta.head.b"], padding=(1, 1))

    return eps_theta, eps_phi, p


def _validate(params: DenoiserParams, x: np.ndarray, t, s):
    arch = params.arch
    if x.ndim != 4:
        raise GeometryError(f"expected (batch, channels, window, stacks), got shape {x.shape}")
    B, C, W, S = x.shape
    if C != arch.channels or W != arch.window:
        raise GeometryError(
            f"input {C}×{W}×{S} incompatible with model geometry "
            f"{arch.channels}×{arch.window}×{arch.stacks}")
    if not np.isfinite(x).all():
        raise NonFiniteError("denoiser input contains non-finite values")
    t = np.atleast_1d(np.asarray(t))
    if not np.issubdtype(t.dtype, np.integer) or np.any(t < 1):
        raise ValueError(f"step indices must be integers ≥ 1, got {t}")
    if t.shape[0] not in (1, B):
        raise ValueError(f"got {t.shape[0]} step indices for batch of {B}")
    s = np.atleast_1d(np.asarray(s))
    if np.any(s < 0) or np.any(s >= arch.n_subjects):
        raise InvalidSubjectError(
            f"subject ids {s} out of range for {arch.n_subjects} subjects")
    if s.shape[0] not in (1, B):
        raise ValueError(f"got {s.shape[0]} subject ids for batch of {B}")
    if s.shape[0] == 1:
        s = np.broadcast_to(s, (B,)).copy()
    return t, s


def forward(params: DenoiserParams, x_t: np.ndarray, t, s) -> tuple[np.ndarray, np.ndarray]:
    """Predict (eps_theta, eps_phi) for a batch of stacked windows.

    ``x_t`` is (batch, channels, window, stacks) or a single (channels,
    window, stacks) field; ``t`` and ``s`` are scalars or length-batch
    vectors. Output shapes equal the input shape.
    """
    x = np.asarray(x_t, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    t, s = _validate(params, x, t, s)
    eps_theta, eps_phi, _ = forward_tensors(params, Tensor(x), t, s, trainable=False)
    out_t, out_p = eps_theta.data, eps_phi.data
    if not (np.isfinite(out_t).all() and np.isfinite(out_p).all()):
        raise NonFiniteError("denoiser produced non-finite output")
    if single:
        return out_t[0], out_p[0]
    return out_t, out_p
