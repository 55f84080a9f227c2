"""Training, sampling, single-step denoising, and checkpoint persistence.

Training runs in two phases. First the subject classifier (extractor +
angular-margin head) is pretrained on real window stacks against subject
labels. Then, with the classifier frozen, the two denoiser streams are
optimized jointly: each step draws a uniform step index t and fresh Gaussian
noise, forms x_t in closed form, predicts (ε_θ, ε_φ), and descends the
weighted sum of the reconstruction, cross-Gram, angular-margin, and overlap
agreement losses.

Sampling runs one combined reverse chain driven by ε_θ + ε_φ (the two
streams share the schedule, and a single coherent chain state is the only
consistent reading of per-stream updates that each contain the full x_t);
the per-stream split is emitted at the terminal step only. Single-step
denoising treats a recorded signal as a late chain state and applies the
t = 1 update per stream with z = 0.

All state that training mutates is float32 and serialized exactly, so an
interrupted run restored from a checkpoint continues bit-identically.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import denoiser as dn
from .autodiff import Tensor
from .classifier import (ArcMarginHead, ClassifierArch, ClassifierParams,
                         arc_logits, arc_logits_tensors, extract_features_tensors,
                         init_arc_head, init_classifier, predict_subject)
from .errors import (CheckpointError, GeometryError, InvalidSubjectError,
                     MissingFileError, NonFiniteError, VersionError)
from .losses import (LossReport, LossWeights, RawLosses, arc_margin_raw,
                     orthogonal_raw, reverse_raw, temporal_difference_raw, total_loss)
from .metrics import MetricsWriter
from .nn import Adam
from .schedule import NoiseSchedule, ancestral_step, make_linear_schedule, q_sample
from .windows import EEGRecording, WindowStack, destack_average, overlap_pairs, stack_windows

__all__ = ["TrainConfig", "TrainState", "PretrainReport", "DenoiseResult",
           "pretrain_classifier", "train_step", "train", "ancestral_sample",
           "denoise_raw", "save_checkpoint", "load_checkpoint",
           "save_classifier", "load_classifier", "draw_timesteps",
           "prepare_training_arrays"]

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the dataset itself."""

    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    window: int = 224
    stride: int = 75
    weights: LossWeights = field(default_factory=LossWeights)
    r: float = 30.0
    m: float = 0.5
    learning_rate: float = 2e-4
    batch_size: int = 64
    total_steps: int = 5000
    pretrain_steps: int = 2000
    seed: int = 0
    width_config: tuple = (32, 64, 128)
    subject_width: int = 32
    token_dim: int = 128
    n_heads: int = 4
    time_dim: int = 64
    embed_dim: int = 128
    n_subjects: int = 0  # 0 = derive from the dataset
    n_classes: int = 0
    sample_rate: float = 250.0
    subject_lr_mult: float = 1.0  # lr multiplier for the (slim) subject stream
    pretrain_lr: float = 1e-3
    pretrain_noise: float = 0.0  # max additive-noise std during classifier pretraining
    pretrain_holdout_fraction: float = 0.25
    checkpoint_interval: int = 1000
    metrics_flush: int = 50

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = asdict(self.weights)
        d["width_config"] = list(self.width_config)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        d["weights"] = LossWeights(**d["weights"])
        d["width_config"] = tuple(d["width_config"])
        return TrainConfig(**d)


@dataclass
class TrainState:
    """Live training state; checkpoints snapshot exactly these fields."""

    cfg: TrainConfig
    sched: NoiseSchedule
    denoiser: dn.DenoiserParams
    classifier: ClassifierParams
    head: ArcMarginHead
    opt: Adam
    rng: np.random.Generator
    step: int = 0

    @property
    def omap(self):
        return overlap_pairs(self.cfg.window, self.cfg.stride, self.denoiser.arch.stacks)


@dataclass(frozen=True)
class PretrainReport:
    trace: list
    final_accuracy: float
    n_train: int
    n_holdout: int


@dataclass(frozen=True)
class DenoiseResult:
    """Outputs of single-step denoising of one recording."""

    x_s: np.ndarray
    x_c: np.ndarray
    cleaned: EEGRecording
    additive_residual: float


def draw_timesteps(rng: np.random.Generator, n: int, T: int) -> np.ndarray:
    """Uniform step indices on {1..T}, the distribution training uses."""
    return rng.integers(1, T + 1, size=n)


def prepare_training_arrays(data: list[EEGRecording], cfg: TrainConfig):
    """Stack every recording into one (N, C, window, stacks) float32 array."""
    if not data:
        raise ValueError("empty dataset")
    channels = data[0].channels
    length = data[0].length
    for i, rec in enumerate(data):
        if rec.channels != channels or rec.length != length:
            raise GeometryError(
                f"recording {i} is {rec.channels}×{rec.length}, expected {channels}×{length}")
    if cfg.window > length:
        raise GeometryError(f"window {cfg.window} exceeds recording length {length}")
    stacks = []
    for rec in data:
        stacks.append(stack_windows(rec, cfg.window, cfg.stride).data.astype(np.float32))
    x = np.stack(stacks)
    subjects = np.array([rec.subject_id for rec in data], dtype=np.int64)
    labels = np.array([rec.class_label for rec in data], dtype=np.int64)
    return x, subjects, labels


def _resolve_counts(data: list[EEGRecording], cfg: TrainConfig) -> TrainConfig:
    n_subj = max(rec.subject_id for rec in data) + 1
    n_cls = max(rec.class_label for rec in data) + 1
    if cfg.n_subjects and cfg.n_subjects != n_subj:
        raise GeometryError(f"config says {cfg.n_subjects} subjects, dataset has {n_subj}")
    if cfg.n_classes and cfg.n_classes != n_cls:
        raise GeometryError(f"config says {cfg.n_classes} classes, dataset has {n_cls}")
    return replace(cfg, n_subjects=n_subj, n_classes=n_cls,
                   sample_rate=float(data[0].sample_rate))


# -- classifier pretraining ------------------------------------------------------


def pretrain_classifier(data: list[EEGRecording], cfg: TrainConfig,
                        eval_interval: int = 100):
    """Train the subject classifier on real window stacks (Adam, margin loss).

    Returns (ClassifierParams, ArcMarginHead, PretrainReport). The report's
    trace holds (step, holdout_accuracy) pairs.
    """
    cfg = _resolve_counts(data, cfg)
    if cfg.n_subjects < 2:
        raise ValueError("subject pretraining needs at least 2 subjects; margin loss "
                         "over a single class is degenerate")
    x, subjects, _ = prepare_training_arrays(data, cfg)
    stacks = x.shape[3]

    split_rng = np.random.default_rng([cfg.seed, 11])
    holdout_mask = np.zeros(len(x), dtype=bool)
    for s in np.unique(subjects):
        idx = np.flatnonzero(subjects == s)
        idx = split_rng.permutation(idx)
        k = max(1, int(round(cfg.pretrain_holdout_fraction * len(idx)))) if len(idx) > 1 else 0
        holdout_mask[idx[:k]] = True
    tr_x, tr_s = x[~holdout_mask], subjects[~holdout_mask]
    ho_x, ho_s = x[holdout_mask], subjects[holdout_mask]

    clf = init_classifier(channels=x.shape[1], window=cfg.window, stacks=stacks,
                          embed_dim=cfg.embed_dim, seed=cfg.seed)
    head = init_arc_head(cfg.n_subjects, cfg.embed_dim, r=cfg.r, m=cfg.m, seed=cfg.seed + 1)
    opt = Adam(lr=cfg.pretrain_lr)
    rng = np.random.default_rng([cfg.seed, 12])

    def holdout_accuracy() -> float:
        if len(ho_x) == 0:
            return float("nan")
        feats = _features_batched(clf, ho_x)
        pred = predict_subject(head, feats)
        return float(np.mean(pred == ho_s))

    trace = []
    tensors = clf.tensors
    for step in range(1, cfg.pretrain_steps + 1):
        idx = rng.integers(0, len(tr_x), size=min(cfg.batch_size, len(tr_x)))
        xb64 = tr_x[idx].astype(np.float64)
        if cfg.pretrain_noise > 0:
            # additive-noise augmentation: the classifier must read subject
            # identity at the noise levels generated samples carry
            sigma = rng.uniform(0.0, cfg.pretrain_noise, size=(len(idx), 1, 1, 1))
            xb64 = xb64 + sigma * rng.standard_normal(xb64.shape)
        xb = Tensor(xb64)
        yb = tr_s[idx]
        feats, leaves_map = extract_features_tensors(clf, xb, trainable=True)
        w_leaf = Tensor(head.W.astype(np.float64), requires_grad=True)
        logits = arc_logits_tensors(w_leaf, feats, head.r, head.m, yb)
        loss = arc_margin_raw(logits, yb)
        loss.backward()
        grads = {k: v.grad for k, v in leaves_map.items() if v.grad is not None}
        grads["arc.W"] = w_leaf.grad
        combined = dict(tensors)
        combined["arc.W"] = head.W
        opt.step(combined, grads)
        combined_w = combined.pop("arc.W")
        tensors.update(combined)
        head.W = combined_w
        if step % eval_interval == 0 or step == cfg.pretrain_steps:
            trace.append((step, holdout_accuracy()))

    report = PretrainReport(trace=trace, final_accuracy=trace[-1][1],
                            n_train=int(len(tr_x)), n_holdout=int(len(ho_x)))
    return clf, head, report


def _features_batched(clf: ClassifierParams, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    from .classifier import extract_features

    outs = [extract_features(clf, x[i:i + chunk]) for i in range(0, len(x), chunk)]
    return np.concatenate(outs, axis=0)


# -- joint training ---------------------------------------------------------------


def train_step(state: TrainState, batch) -> LossReport:
    """One optimizer update of the denoiser streams; the classifier stays frozen."""
    if state.classifier is None or state.head is None:
        raise ValueError("train_step requires a pretrained classifier")
    x0, subjects = batch
    x0 = np.asarray(x0)
    subjects = np.asarray(subjects, dtype=np.int64)
    cfg = state.cfg
    B = x0.shape[0]

    t = draw_timesteps(state.rng, B, cfg.T)
    eps = state.rng.standard_normal(x0.shape)
    x_t = q_sample(x0, t, eps, state.sched)

    eps_th, eps_ph, leaves_map = dn.forward_tensors(
        state.denoiser, Tensor(x_t), t, subjects, trainable=True)
    feats, _ = extract_features_tensors(state.classifier, eps_th, trainable=False)
    logits = arc_logits_tensors(Tensor(state.head.W.astype(np.float64)), feats,
                                state.head.r, state.head.m, subjects)

    raw_r = reverse_raw(Tensor(eps), eps_th, eps_ph)
    raw_o = orthogonal_raw(eps_th, eps_ph)
    raw_arc = arc_margin_raw(logits, subjects)
    raw_td = temporal_difference_raw(eps_th + eps_ph, state.omap)

    parts = RawLosses(r=raw_r.item(), o=raw_o.item(), arc=raw_arc.item(), td=raw_td.item())
    for name in ("r", "o", "arc", "td"):
        if not np.isfinite(getattr(parts, name)):
            raise NonFiniteError(
                f"loss term {name!r} became non-finite at step {state.step + 1}")

    w = cfg.weights
    total = raw_r * w.lambda_r
    for weight, term in ((w.lambda_o, raw_o), (w.lambda_arc, raw_arc), (w.lambda_td, raw_td)):
        if weight > 0:
            total = total + term * weight
    total.backward()

    grads = {k: v.grad for k, v in leaves_map.items() if v.grad is not None}
    state.opt.step(state.denoiser.tensors, grads)
    state.step += 1
    return total_loss(parts, w)


def train(data: list[EEGRecording], cfg: TrainConfig | None, out_dir: str,
          classifier: ClassifierParams | None = None, head: ArcMarginHead | None = None,
          resume: str | None = None, pretrain_report_sink=None) -> TrainState:
    """Run Algorithm-style joint training for a fixed step budget.

    Writes ``metrics.csv`` (one row per step), periodic ``ckpt-NNNNNN``
    directories, and ``ckpt-final``. With ``resume`` given, continues from
    that checkpoint (its config wins) and reproduces exactly the metrics an
    uninterrupted run would have written for the same steps.
    """
    os.makedirs(out_dir, exist_ok=True)
    if resume is not None:
        state = load_checkpoint(resume)
        cfg = state.cfg
    else:
        if cfg is None:
            raise ValueError("cfg is required when not resuming")
        cfg = _resolve_counts(data, cfg)
        sched = make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
        if classifier is None or head is None:
            classifier, head, report = pretrain_classifier(data, cfg)
            if pretrain_report_sink is not None:
                pretrain_report_sink(report)
        x_probe, _, _ = prepare_training_arrays(data[:1], cfg)
        den = dn.init_params(
            n_subjects=cfg.n_subjects, channels=x_probe.shape[1], window=cfg.window,
            stacks=x_probe.shape[3], width_config=cfg.width_config,
            subject_width=cfg.subject_width, token_dim=cfg.token_dim,
            n_heads=cfg.n_heads, time_dim=cfg.time_dim, seed=cfg.seed)
        state = TrainState(cfg=cfg, sched=sched, denoiser=den, classifier=classifier,
                           head=head,
                           opt=Adam(lr=cfg.learning_rate,
                                    lr_scales={"theta.": cfg.subject_lr_mult}),
                           rng=np.random.default_rng([cfg.seed, 13]), step=0)

    x_all, s_all, _ = prepare_training_arrays(data, cfg)
    if x_all.shape[1] != state.denoiser.arch.channels or x_all.shape[3] != state.denoiser.arch.stacks:
        raise GeometryError("dataset geometry disagrees with the checkpointed model")

    writer = MetricsWriter(os.path.join(out_dir, "metrics.csv"), cfg.metrics_flush)
    try:
        while state.step < cfg.total_steps:
            idx = state.rng.integers(0, len(x_all), size=min(cfg.batch_size, len(x_all)))
            report = train_step(state, (x_all[idx], s_all[idx]))
            writer.append(state.step, report)
            if cfg.checkpoint_interval and state.step % cfg.checkpoint_interval == 0 \
                    and state.step < cfg.total_steps:
                save_checkpoint(state, os.path.join(out_dir, f"ckpt-{state.step:06d}"))
    finally:
        writer.close()
    save_checkpoint(state, os.path.join(out_dir, "ckpt-final"))
    return state


# -- sampling and denoising ---------------------------------------------------------


def ancestral_sample(state: TrainState, subject: int, n: int, seed: int):
    """Generate n per-stream terminal samples conditioned on a subject.

    One combined chain x_T → x_1 advances with ε_θ + ε_φ and shared noise;
    the (x^s_0, x^c_0) split is computed from x_1 with z = 0.
    """
    arch = state.denoiser.arch
    if not (0 <= subject < arch.n_subjects):
        raise InvalidSubjectError(f"subject {subject} out of range for {arch.n_subjects}")
    if n < 1:
        raise ValueError("n must be ≥ 1")
    rng = np.random.default_rng(seed)
    shape = (n, arch.channels, arch.window, arch.stacks)
    x = rng.standard_normal(shape)
    svec = np.full(n, subject, dtype=np.int64)
    for t in range(state.cfg.T, 0, -1):
        tvec = np.full(n, t, dtype=np.int64)
        eps_th, eps_ph = dn.forward(state.denoiser, x, tvec, svec)
        if t == 1:
            x_s0 = ancestral_step(x, 1, eps_th, 0.0, state.sched)
            x_c0 = ancestral_step(x, 1, eps_ph, 0.0, state.sched)
            break
        z = rng.standard_normal(shape)
        x = ancestral_step(x, t, eps_th + eps_ph, z, state.sched)
        if not np.isfinite(x).all():
            raise NonFiniteError(f"sampling chain became non-finite at step {t}")
    return x_s0, x_c0


def denoise_raw(state: TrainState, rec: EEGRecording, subject: int) -> DenoiseResult:
    """Split one recording into subject variance and content in a single step.

    The recording is stacked, treated as a late chain state, and both
    streams apply the t = 1 update deterministically (z = 0). ``cleaned``
    is the overlap-averaged content stream wrapped with source metadata.
    """
    arch = state.denoiser.arch
    if not (0 <= subject < arch.n_subjects):
        raise InvalidSubjectError(f"subject {subject} out of range for {arch.n_subjects}")
    if rec.channels != arch.channels:
        raise GeometryError(f"recording has {rec.channels} channels, model expects {arch.channels}")
    cfg = state.cfg
    if rec.length < cfg.window:
        raise GeometryError(f"recording length {rec.length} shorter than window {cfg.window}")
    ws = stack_windows(rec, cfg.window, cfg.stride)
    x = ws.data.astype(np.float64)
    eps_th, eps_ph = dn.forward(state.denoiser, x[None], np.array([1]), np.array([subject]))
    x_s = ancestral_step(x, 1, eps_th[0], 0.0, state.sched)
    x_c = ancestral_step(x, 1, eps_ph[0], 0.0, state.sched)
    covered = (ws.stacks - 1) * cfg.stride + cfg.window
    cleaned_mat = destack_average(
        WindowStack(data=x_c, window=cfg.window, stride=cfg.stride, source_length=covered))
    cleaned = EEGRecording(subject_id=rec.subject_id, class_label=rec.class_label,
                           data=cleaned_mat.astype(np.float32), sample_rate=rec.sample_rate)
    denom = float(np.linalg.norm(x))
    residual = float(np.linalg.norm(x_s + x_c - x) / denom) if denom > 0 else 0.0
    return DenoiseResult(x_s=x_s, x_c=x_c, cleaned=cleaned, additive_residual=residual)


# -- checkpoint persistence -----------------------------------------------------------


def _write_tensors(dir_path: str, tensors: dict[str, np.ndarray]) -> None:
    index_lines = []
    offset = 0
    with open(os.path.join(dir_path, "tensors.bin"), "wb") as f:
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            payload = arr.tobytes()
            shape = "x".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
            index_lines.append(f"{name}\t{shape}\t{offset}")
            f.write(payload)
            offset += len(payload)
    with open(os.path.join(dir_path, "tensors.index"), "w") as f:
        f.write("\n".join(index_lines) + "\n")


def _read_tensors(dir_path: str) -> dict[str, np.ndarray]:
    bin_path = os.path.join(dir_path, "tensors.bin")
    idx_path = os.path.join(dir_path, "tensors.index")
    for p in (bin_path, idx_path):
        if not os.path.exists(p):
            raise CheckpointError(f"checkpoint payload missing: {p}")
    with open(bin_path, "rb") as f:
        blob = f.read()
    tensors = {}
    with open(idx_path) as f:
        for line in f.read().splitlines():
            if not line:
                continue
            try:
                name, shape_s, offset_s = line.split("\t")
                shape = () if shape_s == "scalar" else tuple(int(d) for d in shape_s.split("x"))
                offset = int(offset_s)
            except ValueError:
                raise CheckpointError(f"corrupt index line in {idx_path}: {line!r}")
            count = int(np.prod(shape)) if shape else 1
            end = offset + 4 * count
            if end > len(blob):
                raise CheckpointError(f"{idx_path}: tensor {name} overruns payload")
            tensors[name] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).copy()
    return tensors


def save_checkpoint(state: TrainState, dir_path: str) -> str:
    """Write the full training state; reload resumes bit-identically."""
    os.makedirs(dir_path, exist_ok=True)
    tensors: dict[str, np.ndarray] = {}
    for k, v in state.denoiser.tensors.items():
        tensors[f"denoiser.{k}"] = v
    for k, v in state.classifier.tensors.items():
        tensors[f"classifier.{k}"] = v
    tensors["head.W"] = state.head.W
    for k, v in state.opt.state_tensors().items():
        tensors[f"adam.{k}"] = v
    _write_tensors(dir_path, tensors)
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": "train_state",
        "step": int(state.step),
        "adam_t": int(state.opt.t),
        "config": state.cfg.to_dict(),
        "schedule": state.sched.describe(),
        "denoiser_arch": state.denoiser.arch.to_dict(),
        "classifier_arch": state.classifier.arch.to_dict(),
        "head": {"r": state.head.r, "m": state.head.m},
        "rng_state": state.rng.bit_generator.state,
    }
    with open(os.path.join(dir_path, "meta.json"), "w") as f:
        json.dump(meta, f, indent=1)
    return dir_path


def _load_meta(dir_path: str, kind: str) -> dict:
    meta_path = os.path.join(dir_path, "meta.json")
    if not os.path.isdir(dir_path) or not os.path.exists(meta_path):
        raise MissingFileError(f"no checkpoint at {dir_path}")
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint metadata {meta_path}: {e}")
    version = meta.get("version")
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"{meta_path}: version {version!r}, expected {CHECKPOINT_VERSION}")
    if meta.get("kind") != kind:
        raise CheckpointError(f"{meta_path}: kind {meta.get('kind')!r}, expected {kind!r}")
    return meta


def load_checkpoint(dir_path: str) -> TrainState:
    """Restore a training state saved by :func:`save_checkpoint`."""
    meta = _load_meta(dir_path, "train_state")
    cfg = TrainConfig.from_dict(meta["config"])
    arch = dn.DenoiserArch.from_dict(meta["denoiser_arch"])
    if (arch.window != cfg.window or arch.n_subjects != cfg.n_subjects
            or arch.widths != cfg.width_config):
        raise GeometryError(
            f"{dir_path}: config geometry (window {cfg.window}, subjects {cfg.n_subjects}, "
            f"widths {cfg.width_config}) disagrees with model geometry "
            f"(window {arch.window}, subjects {arch.n_subjects}, widths {arch.widths})")
    sd = meta["schedule"]
    sched = make_linear_schedule(sd["T"], sd["beta_start"], sd["beta_end"])
    if sched.T != cfg.T:
        raise GeometryError(f"{dir_path}: schedule T {sched.T} disagrees with config T {cfg.T}")

    tensors = _read_tensors(dir_path)
    den_t = {k[len("denoiser."):]: v for k, v in tensors.items() if k.startswith("denoiser.")}
    clf_t = {k[len("classifier."):]: v for k, v in tensors.items() if k.startswith("classifier.")}
    adam_t = {k[len("adam."):]: v for k, v in tensors.items() if k.startswith("adam.")}
    if not den_t or "head.W" not in tensors:
        raise CheckpointError(f"{dir_path}: missing parameter groups")
    for name, arr in tensors.items():
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"{dir_path}: tensor {name} contains non-finite values")
    if den_t["theta.token"].shape[0] != arch.n_subjects:
        raise GeometryError(f"{dir_path}: token table rows disagree with n_subjects")

    den = dn.DenoiserParams(arch=arch, tensors=den_t)
    clf = ClassifierParams(arch=ClassifierArch.from_dict(meta["classifier_arch"]), tensors=clf_t)
    head = ArcMarginHead(W=tensors["head.W"], r=meta["head"]["r"], m=meta["head"]["m"])
    opt = Adam(lr=cfg.learning_rate, lr_scales={"theta.": cfg.subject_lr_mult})
    opt.load_state_tensors(adam_t, t=int(meta["adam_t"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(cfg=cfg, sched=sched, denoiser=den, classifier=clf, head=head,
                      opt=opt, rng=rng, step=int(meta["step"]))


def save_classifier(dir_path: str, clf: ClassifierParams, head: ArcMarginHead) -> str:
    """Classifier-only checkpoint (used between the two training phases)."""
    os.makedirs(dir_path, exist_ok=True)
    tensors = {f"classifier.{k}": v for k, v in clf.tensors.items()}
    tensors["head.W"] = head.W
    _write_tensors(dir_path, tensors)
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": "classifier",
        "classifier_arch": clf.arch.to_dict(),
        "head": {"r": head.r, "m": head.m},
    }
    with open(os.path.join(dir_path, "meta.json"), "w") as f:
        json.dump(meta, f, indent=1)
    return dir_path


def load_classifier(dir_path: str) -> tuple[ClassifierParams, ArcMarginHead]:
    meta = _load_meta(dir_path, "classifier")
    tensors = _read_tensors(dir_path)
    clf_t = {k[len("classifier."):]: v for k, v in tensors.items() if k.startswith("classifier.")}
    if not clf_t or "head.W" not in tensors:
        raise CheckpointError(f"{dir_path}: missing parameter groups")
    clf = ClassifierParams(arch=ClassifierArch.from_dict(meta["classifier_arch"]), tensors=clf_t)
    head = ArcMarginHead(W=tensors["head.W"], r=meta["head"]["r"], m=meta["head"]["m"])
    return clf, head
