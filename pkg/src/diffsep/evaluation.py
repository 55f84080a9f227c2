"""Cross-subject analysis harnesses: correlation, classification, embeddings.

The correlation matrix averages pairwise Pearson coefficients between
flattened trials of two recording sets, cell (i, j) covering every cross
pair of subject i's trials from the first set with subject j's from the
second; within one set the diagonal uses distinct trial pairs only. The
classification table trains a fresh task classifier per training subject
(optionally on single-step-denoised signals) and scores it on every
subject's held-out split, with identical splits across conditions so raw
and denoised runs are paired.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .classifier import (ClassifierParams, extract_features_tensors,
                         extract_intermediate, init_classifier)
from .engine import TrainState, denoise_raw
from .losses import arc_margin_raw
from .nn import Adam, he_normal, linear
from .windows import EEGRecording, stack_windows

__all__ = ["CorrMatrix", "ClsTable", "EvalConfig", "subject_corr_matrix",
           "cross_subject_eval", "export_embeddings", "pca_project", "PCAResult",
           "TaskClassifier", "train_task_classifier"]


@dataclass(frozen=True)
class CorrMatrix:
    """Mean pairwise Pearson correlation per subject pair, plus pair counts."""

    subject_ids: list
    values: np.ndarray
    pair_counts: np.ndarray

    def to_csv(self, path: str, condition: str) -> None:
        with open(path, "w", newline="") as f:
            f.write(f"# condition: {condition}\n")
            w = csv.writer(f)
            w.writerow([""] + [f"s{i}" for i in self.subject_ids])
            for i, sid in enumerate(self.subject_ids):
                w.writerow([f"s{sid}"] + [repr(v) for v in self.values[i]])


@dataclass(frozen=True)
class ClsTable:
    """Per-(train-subject, test-subject) accuracies with a column-mean row."""

    subject_ids: list
    accuracy: np.ndarray
    mean_row: np.ndarray
    condition: str
    lineage: dict = field(default_factory=dict)

    def off_diagonal_mean(self) -> float:
        n = len(self.subject_ids)
        mask = ~np.eye(n, dtype=bool)
        return float(self.accuracy[mask].mean())

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            f.write(f"# condition: {self.condition}\n")
            w = csv.writer(f)
            w.writerow([""] + [f"s{i}" for i in self.subject_ids])
            for i, sid in enumerate(self.subject_ids):
                w.writerow([f"s{sid}"] + [repr(v) for v in self.accuracy[i]])
            w.writerow(["M"] + [repr(v) for v in self.mean_row])


@dataclass(frozen=True)
class EvalConfig:
    """Knobs of the cross-subject harness; identical across paired conditions."""

    train_fraction: float = 0.75
    steps: int = 400
    batch_size: int = 16
    learning_rate: float = 1e-3
    embed_dim: int = 32
    seed: int = 0


def _group_by_subject(recs: list[EEGRecording]) -> dict[int, list[EEGRecording]]:
    groups: dict[int, list[EEGRecording]] = {}
    for rec in recs:
        groups.setdefault(rec.subject_id, []).append(rec)
    return groups


def _standardized_trials(recs: list[EEGRecording], subject: int) -> np.ndarray:
    """Flatten trials and normalize to zero mean, unit norm (Pearson-ready)."""
    rows = []
    for k, rec in enumerate(recs):
        v = rec.data.astype(np.float64).ravel()
        v = v - v.mean()
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError(f"trial {k} of subject {subject} is constant; "
                             "Pearson correlation is undefined")
        rows.append(v / norm)
    return np.stack(rows)


def subject_corr_matrix(set_a: list[EEGRecording], set_b: list[EEGRecording]) -> CorrMatrix:
    """Subject-by-subject mean Pearson correlation between two recording sets."""
    ga, gb = _group_by_subject(set_a), _group_by_subject(set_b)
    ids = sorted(ga)
    if sorted(gb) != ids:
        raise ValueError(f"subject sets differ: {ids} vs {sorted(gb)}")
    same_set = len(set_a) == len(set_b) and all(x is y for x, y in zip(set_a, set_b))
    za = {s: _standardized_trials(ga[s], s) for s in ids}
    zb = za if same_set else {s: _standardized_trials(gb[s], s) for s in ids}

    n = len(ids)
    values = np.zeros((n, n))
    counts = np.zeros((n, n), dtype=np.int64)
    for i, si in enumerate(ids):
        for j, sj in enumerate(ids):
            corr = za[si] @ zb[sj].T
            if same_set and i == j:
                mask = ~np.eye(corr.shape[0], dtype=bool)
                if not mask.any():
                    raise ValueError(f"subject {si} needs ≥ 2 trials for a within-subject cell")
                values[i, j] = corr[mask].mean()
                counts[i, j] = int(mask.sum())
            else:
                values[i, j] = corr.mean()
                counts[i, j] = corr.size
    return CorrMatrix(subject_ids=ids, values=values, pair_counts=counts)


# -- task classifier (backbone + plain softmax head) ----------------------------------


@dataclass
class TaskClassifier:
    backbone: ClassifierParams
    head_w: np.ndarray
    head_b: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        feats, _ = extract_features_tensors(self.backbone, Tensor(np.asarray(x, dtype=np.float64)))
        logits = feats.data @ self.head_w.astype(np.float64) + self.head_b.astype(np.float64)
        return np.argmax(logits, axis=1)


def train_task_classifier(x: np.ndarray, labels: np.ndarray, n_classes: int,
                          cfg: EvalConfig, seed, stacks: int) -> TaskClassifier:
    """Fit the compact extractor plus a linear softmax head with plain CE."""
    rng = np.random.default_rng(seed)
    channels, window = x.shape[1], x.shape[2]
    backbone = init_classifier(channels=channels, window=window, stacks=stacks,
                               embed_dim=cfg.embed_dim, seed=int(rng.integers(2**31)))
    head_w = he_normal(rng, (cfg.embed_dim, n_classes), cfg.embed_dim)
    head_b = np.zeros(n_classes, dtype=np.float32)
    opt = Adam(lr=cfg.learning_rate)
    tensors = backbone.tensors
    for _ in range(cfg.steps):
        idx = rng.integers(0, len(x), size=min(cfg.batch_size, len(x)))
        xb = Tensor(x[idx].astype(np.float64))
        yb = labels[idx]
        feats, leaves_map = extract_features_tensors(backbone, xb, trainable=True)
        hw = Tensor(head_w.astype(np.float64), requires_grad=True)
        hb = Tensor(head_b.astype(np.float64), requires_grad=True)
        logits = linear(feats, hw, hb)
        loss = arc_margin_raw(logits, yb)  # plain CE: mean −log softmax[target]
        loss.backward()
        grads = {k: v.grad for k, v in leaves_map.items() if v.grad is not None}
        grads["task.w"] = hw.grad
        grads["task.b"] = hb.grad
        combined = dict(tensors)
        combined["task.w"] = head_w
        combined["task.b"] = head_b
        opt.step(combined, grads)
        head_w = combined.pop("task.w")
        head_b = combined.pop("task.b")
        tensors.update(combined)
    return TaskClassifier(backbone=backbone, head_w=head_w, head_b=head_b)


def cross_subject_eval(data: list[EEGRecording], state: TrainState | None,
                       cfg: EvalConfig, window: int | None = None,
                       stride: int | None = None) -> ClsTable:
    """Train one task classifier per subject; score on every subject's test split.

    With a denoiser state given, every recording is first replaced by its
    single-step-denoised content (condition "denoised"); otherwise signals
    pass through untouched (condition "raw"). Splits depend only on
    (cfg.seed, subject), so the two conditions are paired.
    """
    groups = _group_by_subject(data)
    ids = sorted(groups)
    if len(ids) < 2:
        raise ValueError("cross-subject evaluation needs ≥ 2 subjects")
    n_classes = max(r.class_label for r in data) + 1
    if n_classes < 2:
        raise ValueError("cross-subject evaluation needs ≥ 2 classes")
    condition = "raw" if state is None else "denoised"
    if state is not None:
        window, stride = state.cfg.window, state.cfg.stride
    if window is None or stride is None:
        raise ValueError("window and stride are required when no denoiser is given")

    # split first (condition-independent), then optionally denoise
    splits: dict[int, tuple[list[int], list[int]]] = {}
    for s in ids:
        k = len(groups[s])
        order = np.random.default_rng([cfg.seed, 23, s]).permutation(k)
        n_train = max(1, min(k - 1, int(round(cfg.train_fraction * k))))
        splits[s] = (list(order[:n_train]), list(order[n_train:]))
        if not splits[s][1]:
            raise ValueError(f"subject {s} has no test trials under fraction {cfg.train_fraction}")

    def signal(rec: EEGRecording) -> np.ndarray:
        if state is None:
            return stack_windows(rec, window, stride).data.astype(np.float32)
        res = denoise_raw(state, rec, rec.subject_id)
        return stack_windows(res.cleaned, window, stride).data.astype(np.float32)

    stacked: dict[int, np.ndarray] = {}
    labels: dict[int, np.ndarray] = {}
    for s in ids:
        stacked[s] = np.stack([signal(r) for r in groups[s]])
        labels[s] = np.array([r.class_label for r in groups[s]], dtype=np.int64)

    n = len(ids)
    acc = np.zeros((n, n))
    lineage: dict[int, list] = {}
    stacks = stacked[ids[0]].shape[3]
    for i, si in enumerate(ids):
        tr_idx, _ = splits[si]
        lineage[si] = [(si, int(k)) for k in tr_idx]
        model = train_task_classifier(stacked[si][tr_idx], labels[si][tr_idx],
                                      n_classes, cfg, seed=[cfg.seed, 29, si], stacks=stacks)
        for j, sj in enumerate(ids):
            _, te_idx = splits[sj]
            pred = model.predict(stacked[sj][te_idx])
            acc[i, j] = float(np.mean(pred == labels[sj][te_idx]))
    return ClsTable(subject_ids=ids, accuracy=acc, mean_row=acc.mean(axis=0),
                    condition=condition, lineage=lineage)


# -- embedding export and projection ---------------------------------------------------


def export_embeddings(classifier: ClassifierParams, data: list[EEGRecording], out: str,
                      conditions: tuple = ("x_0",), state: TrainState | None = None,
                      window: int | None = None, stride: int | None = None) -> int:
    """Write one CSV row per (trial, condition) of penultimate classifier features.

    Conditions: ``x_0`` (the recording as-is), ``x_s_0`` and ``x_c_0`` (the
    subject-variance and content streams of single-step denoising; these
    need a denoiser state). Returns the number of rows written.
    """
    valid = {"x_0", "x_s_0", "x_c_0"}
    for c in conditions:
        if c not in valid:
            raise ValueError(f"unknown condition {c!r}; choose from {sorted(valid)}")
    if any(c != "x_0" for c in conditions) and state is None:
        raise ValueError("stream conditions x_s_0/x_c_0 require a denoiser checkpoint")
    if state is not None:
        window, stride = state.cfg.window, state.cfg.stride
    if window is None or stride is None:
        raise ValueError("window and stride are required when no denoiser is given")
    a = classifier.arch

    rows = 0
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject", "label", "condition"] + [f"f{i}" for i in range(a.penultimate_dim)])
        for rec in data:
            per_cond: dict[str, np.ndarray] = {}
            if "x_0" in conditions:
                per_cond["x_0"] = stack_windows(rec, window, stride).data
            if "x_s_0" in conditions or "x_c_0" in conditions:
                res = denoise_raw(state, rec, rec.subject_id)
                per_cond["x_s_0"] = res.x_s
                per_cond["x_c_0"] = res.x_c
            for cond in conditions:
                feats = extract_intermediate(classifier, per_cond[cond].astype(np.float64))
                w.writerow([rec.subject_id, rec.class_label, cond] + [repr(v) for v in feats])
                rows += 1
    return rows


@dataclass(frozen=True)
class PCAResult:
    coords: np.ndarray
    components: np.ndarray
    mean: np.ndarray
    explained_variance_ratio: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.coords @ self.components + self.mean


def pca_project(features: np.ndarray, k: int) -> PCAResult:
    """Project rows onto the top-k principal axes of the centered covariance.

    Components are ordered by descending eigenvalue and signed so that each
    component's largest-magnitude coordinate is positive.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if k < 1 or k > d:
        raise ValueError(f"k must lie in 1..{d}, got {k}")
    if n < k + 1:
        raise ValueError(f"need at least k+1 = {k + 1} rows, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    if evals[k - 1] <= 1e-12 * max(evals[0], 1e-300):
        raise ValueError(f"feature matrix is rank-deficient below k={k}")
    comps = evecs[:, :k].T
    for i in range(k):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    coords = Xc @ comps.T
    total = evals.sum()
    ratio = evals[:k] / total if total > 0 else np.zeros(k)
    return PCAResult(coords=coords, components=comps, mean=mean,
                     explained_variance_ratio=ratio)
