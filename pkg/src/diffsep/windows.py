"""Recordings, overlapping window stacks, and the on-disk dataset format.

A recording is a channels×length matrix. Training operates on overlapping
fixed-size windows sliced along time with a given stride and stacked into a
channels×window×stacks tensor; stack k covers source indices
[k·stride, k·stride + window). Consecutive stacks overlap in window − stride
samples, and those coincidences are enumerated explicitly so losses can
penalize disagreement between stacks at the same source time index.

The dataset directory format is a ``manifest.json`` plus one raw binary file
per trial: little-endian IEEE-754 32-bit floats in channel-major order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingFileError, NonFiniteError, ShapeMismatchError

__all__ = [
    "EEGRecording",
    "WindowStack",
    "OverlapMap",
    "stack_windows",
    "overlap_pairs",
    "destack_average",
    "generate_synthetic_dataset",
    "save_manifest",
    "load_manifest",
]

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class EEGRecording:
    """One trial: a channels×length signal with subject and class labels."""

    subject_id: int
    class_label: int
    data: np.ndarray
    sample_rate: float

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"recording data must be channels×length, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise NonFiniteError("recording data contains non-finite values")
        if self.subject_id < 0 or self.class_label < 0:
            raise ValueError("subject_id and class_label must be nonnegative")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class WindowStack:
    """channels×window×stacks tensor of overlapping segments of one source."""

    data: np.ndarray
    window: int
    stride: int
    source_length: int

    @property
    def stacks(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class OverlapMap:
    """All (stack, column) position pairs that alias the same source index.

    Records are restricted to consecutive stacks (stack_b = stack_a + 1);
    by transitivity they chain every aliased position together. Arrays are
    parallel: record i is (stack_a[i], col_a[i], stack_b[i], col_b[i]).
    """

    window: int
    stride: int
    stacks: int
    stack_a: np.ndarray = field(repr=False)
    col_a: np.ndarray = field(repr=False)
    stack_b: np.ndarray = field(repr=False)
    col_b: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.stack_a)

    def records(self) -> list[tuple[int, int, int, int]]:
        """Records as plain tuples, mainly for inspection and tests."""
        return list(
            zip(
                self.stack_a.tolist(),
                self.col_a.tolist(),
                self.stack_b.tolist(),
                self.col_b.tolist(),
            )
        )


def stack_windows(rec: EEGRecording, window: int, stride: int) -> WindowStack:
    """Slice a recording into overlapping windows along time.

    Trailing samples that do not fill a complete window are dropped. The
    result owns its memory (safe to mutate independently of the source).
    """
    if stride < 1:
        raise ValueError(f"stride must be ≥ 1, got {stride}")
    if window < 1:
        raise ValueError(f"window must be ≥ 1, got {window}")
    length = rec.length
    if window > length:
        raise ValueError(f"window {window} exceeds recording length {length}")
    stacks = (length - window) // stride + 1
    starts = np.arange(stacks) * stride
    # data[c, i, k] = source[c, k*stride + i]
    idx = starts[None, :] + np.arange(window)[:, None]  # (window, stacks)
    data = rec.data[:, idx]
    return WindowStack(data=np.ascontiguousarray(data), window=window, stride=stride, source_length=length)


def overlap_pairs(window: int, stride: int, stacks: int) -> OverlapMap:
    """Enumerate coincidences between consecutive stacks.

    Stacks k and k+1 agree on source indices covered by both, i.e. columns
    col_a ∈ [stride, window) of stack k and col_b = col_a − stride of stack
    k+1. Empty when stride ≥ window.
    """
    if stride < 1:
        raise ValueError(f"stride must be ≥ 1, got {stride}")
    if stacks < 1:
        raise ValueError(f"stacks must be ≥ 1, got {stacks}")
    n_overlap = max(window - stride, 0)
    n_pairs = max(stacks - 1, 0)
    cols = np.arange(stride, window, dtype=np.int64)
    ka = np.repeat(np.arange(n_pairs, dtype=np.int64), n_overlap)
    ca = np.tile(cols, n_pairs)
    return OverlapMap(
        window=window,
        stride=stride,
        stacks=stacks,
        stack_a=ka,
        col_a=ca,
        stack_b=ka + 1,
        col_b=ca - stride,
    )


def destack_average(ws: WindowStack) -> np.ndarray:
    """Merge a window stack back into one channels×length matrix.

    Every covered source index receives the arithmetic mean of all stack
    values that map to it. Output length is (stacks−1)·stride + window;
    trailing source samples never covered by a window are absent, and gap
    positions (possible only when stride > window) are zero.
    """
    C, W, S = ws.data.shape
    out_len = (S - 1) * ws.stride + W
    acc = np.zeros((C, out_len), dtype=np.float64)
    counts = np.zeros(out_len, dtype=np.float64)
    for k in range(S):
        lo = k * ws.stride
        acc[:, lo : lo + W] += ws.data[:, :, k]
        counts[lo : lo + W] += 1.0
    return acc / np.maximum(counts, 1.0)


def generate_synthetic_dataset(
    n_subjects: int,
    n_classes: int,
    trials_per_cell: int,
    channels: int,
    length: int,
    sample_rate: float,
    snr: float,
    seed: int,
) -> list[EEGRecording]:
    """Deterministic multi-subject dataset for desk-scale experiments.

    Each class contributes a fixed sinusoidal motif (one base frequency per
    class, with a fixed per-channel amplitude/phase pattern shared by all
    subjects). Each subject adds structured noise: an AR(1) process with a
    subject-specific coefficient plus a sinusoidal spectral peak at a
    subject-specific frequency with random phase per trial. Noise power is
    scaled so that signal power / noise power = snr.
    """
    if min(n_subjects, n_classes, trials_per_cell, channels, length) < 1:
        raise ValueError("all dataset counts must be ≥ 1")
    if not (snr > 0):
        raise ValueError(f"snr must be positive, got {snr}")

    rng = np.random.default_rng(seed)
    t = np.arange(length) / sample_rate

    # Class motifs: fixed across subjects and trials so that trial averages
    # remain phase-locked and class content is subject-invariant.
    motif_rng = np.random.default_rng(seed + 1)
    motifs = np.empty((n_classes, channels, length))
    for c in range(n_classes):
        f_c = 4.0 + 3.0 * c
        amp = 0.5 + motif_rng.random(channels)
        phase = motif_rng.uniform(0, 2 * np.pi, channels)
        motifs[c] = amp[:, None] * np.sin(2 * np.pi * f_c * t[None, :] + phase[:, None])
        # second harmonic helps band-power features separate classes
        motifs[c] += 0.4 * amp[:, None] * np.sin(2 * np.pi * 2 * f_c * t[None, :] + 2 * phase[:, None])

    # Subject noise shapes: an AR(1) coefficient and a spectral peak. The
    # peak is phase-locked per (subject, channel) with a subject-specific
    # spatial amplitude pattern, like a line-noise artifact: a deterministic
    # subject waveform riding on the stochastic AR component.
    if n_subjects > 1:
        ar_coef = 0.3 + 0.62 * np.arange(n_subjects) / (n_subjects - 1)
    else:
        ar_coef = np.array([0.6])
    peak_freq = 1.0 + 1.5 * np.arange(n_subjects)
    peak_gain = np.linspace(2.2, 3.2, n_subjects)
    peak_phase = motif_rng.uniform(0, 2 * np.pi, (n_subjects, channels))
    peak_weight = 0.5 + motif_rng.random((n_subjects, channels))

    recordings = []
    for s in range(n_subjects):
        for c in range(n_classes):
            for _ in range(trials_per_cell):
                signal = motifs[c] * (1.0 + 0.05 * rng.standard_normal())
                # AR(1) innovation chain per channel
                innov = rng.standard_normal((channels, length))
                ar = np.empty_like(innov)
                ar[:, 0] = innov[:, 0]
                a = ar_coef[s]
                for i in range(1, length):
                    ar[:, i] = a * ar[:, i - 1] + innov[:, i]
                ar /= np.sqrt(1.0 / (1.0 - a * a))  # unit stationary variance
                peak = peak_weight[s][:, None] * np.sin(
                    2 * np.pi * peak_freq[s] * t[None, :] + peak_phase[s][:, None])
                noise = ar + peak_gain[s] * peak
                p_sig = float(np.mean(signal**2))
                p_noise = float(np.mean(noise**2))
                noise *= np.sqrt(p_sig / (snr * p_noise))
                data = (signal + noise).astype(np.float32)
                recordings.append(
                    EEGRecording(subject_id=s, class_label=c, data=data, sample_rate=sample_rate)
                )
    return recordings


def save_manifest(recs: list[EEGRecording], path: str) -> str:
    """Write recordings as a dataset directory; returns the manifest path.

    ``path`` may be the directory or the manifest.json path inside it.
    """
    if path.endswith("manifest.json"):
        root = os.path.dirname(path) or "."
    else:
        root = path
    os.makedirs(root, exist_ok=True)
    if not recs:
        raise ValueError("cannot save an empty dataset")
    rates = {float(r.sample_rate) for r in recs}
    chans = {r.channels for r in recs}
    if len(rates) != 1 or len(chans) != 1:
        raise ValueError("all recordings must share sample_rate and channel count")

    subjects: dict[int, list[dict]] = {}
    counters: dict[int, int] = {}
    for rec in recs:
        k = counters.get(rec.subject_id, 0)
        counters[rec.subject_id] = k + 1
        fname = f"s{rec.subject_id:03d}_t{k:04d}.bin"
        payload = np.ascontiguousarray(rec.data, dtype="<f4")
        with open(os.path.join(root, fname), "wb") as f:
            f.write(payload.tobytes())
        subjects.setdefault(rec.subject_id, []).append(
            {
                "file": fname,
                "shape": [int(rec.channels), int(rec.length)],
                "class_label": int(rec.class_label),
            }
        )

    manifest = {
        "version": MANIFEST_VERSION,
        "sample_rate": rates.pop(),
        "channels": chans.pop(),
        "subjects": [{"id": sid, "trials": trials} for sid, trials in sorted(subjects.items())],
    }
    mpath = os.path.join(root, "manifest.json")
    with open(mpath, "w") as f:
        json.dump(manifest, f, indent=1)
    return mpath


def load_manifest(path: str) -> list[EEGRecording]:
    """Load a dataset directory written by :func:`save_manifest`."""
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    if not os.path.exists(path):
        raise MissingFileError(f"manifest not found: {path}")
    with open(path) as f:
        manifest = json.load(f)
    version = manifest.get("version")
    if version != MANIFEST_VERSION:
        raise ShapeMismatchError(f"unsupported manifest version {version!r} in {path}")
    root = os.path.dirname(path) or "."
    sample_rate = manifest["sample_rate"]
    channels = manifest["channels"]

    recordings = []
    for subj in manifest["subjects"]:
        sid = subj["id"]
        for trial in subj["trials"]:
            fpath = os.path.join(root, trial["file"])
            shape = tuple(trial["shape"])
            if len(shape) != 2 or shape[0] != channels:
                raise ShapeMismatchError(
                    f"{fpath}: trial shape {list(shape)} disagrees with manifest channels={channels}"
                )
            if not os.path.exists(fpath):
                raise MissingFileError(f"{fpath}: trial payload referenced by {path} is missing")
            raw = np.fromfile(fpath, dtype="<f4")
            if raw.size != shape[0] * shape[1]:
                raise ShapeMismatchError(
                    f"{fpath}: payload holds {raw.size} values, manifest shape {list(shape)} "
                    f"needs {shape[0] * shape[1]}"
                )
            data = raw.reshape(shape)
            if not np.isfinite(data).all():
                raise NonFiniteError(f"{fpath}: payload field 'data' contains non-finite values")
            recordings.append(
                EEGRecording(
                    subject_id=sid,
                    class_label=trial["class_label"],
                    data=data,
                    sample_rate=sample_rate,
                )
            )
    return recordings
