"""Command-line front end tying the library into runnable workflows.

Commands::

    gen-synth             write a synthetic multi-subject dataset
    pretrain-classifier   train the subject classifier on a dataset
    train                 joint two-stream training (pretrains if needed)
    sample                subject-conditioned ancestral sampling
    denoise               single-step denoising of one raw trial payload
    eval-corr             subject correlation matrices (real, generated)
    eval-cls              cross-subject classification table
    export-embeddings     penultimate-feature CSV for external embedding tools

Configuration resolves in three layers: built-in defaults, then a JSON
config file (``--config``), then ``--key value`` flags. The fully resolved
config and the source of every value are echoed to ``resolved_config.json``
in the output directory. ``--seed`` is honored globally; the environment
variable ``DSDDPM_SEED`` is the fallback when no seed is given anywhere.
Failures print one machine-parsable ``error.<category>: message`` line.
"""

from __future__ import annotations

import difflib
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import engine, evaluation
from .errors import ConfigError, DiffsepError, MissingFileError
from .losses import LossWeights
from .windows import EEGRecording, generate_synthetic_dataset, load_manifest, save_manifest

__all__ = ["RunConfig", "parse_config", "run_command", "main"]

COMMANDS = ("gen-synth", "pretrain-classifier", "train", "sample", "denoise",
            "eval-corr", "eval-cls", "export-embeddings")

USAGE = """usage: diffsep <command> [--config file.json] [--key value ...]
commands: """ + " | ".join(COMMANDS)


@dataclass(frozen=True)
class RunConfig:
    """Superset of the training config plus paths and command options.

    Every field has a default except the paths a command requires.
    """

    # diffusion / model / training (see engine.TrainConfig)
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    window: int = 224
    stride: int = 75
    lambda_r: float = 1.0
    lambda_o: float = 0.1
    lambda_arc: float = 0.1
    lambda_td: float = 0.5
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
    n_subjects: int = 0
    n_classes: int = 0
    sample_rate: float = 250.0
    subject_lr_mult: float = 1.0
    pretrain_lr: float = 1e-3
    pretrain_noise: float = 0.0
    pretrain_holdout_fraction: float = 0.25
    checkpoint_interval: int = 1000
    metrics_flush: int = 50
    # synthetic dataset
    subjects: int = 3
    classes: int = 4
    trials: int = 20
    channels: int = 22
    length: int = 750
    snr: float = 1.0
    # evaluation harness
    eval_train_fraction: float = 0.75
    eval_steps: int = 400
    eval_batch_size: int = 16
    eval_lr: float = 1e-3
    eval_embed_dim: int = 32
    corr_samples: int = 8
    conditions: str = "x_0"
    # sampling / denoising
    subject: int = 0
    n_samples: int = 16
    # paths (no defaults)
    data: str | None = None
    out: str | None = None
    ckpt: str | None = None
    classifier: str | None = None
    resume: str | None = None
    input: str | None = None

    def train_config(self) -> engine.TrainConfig:
        return engine.TrainConfig(
            T=self.T, beta_start=self.beta_start, beta_end=self.beta_end,
            window=self.window, stride=self.stride,
            weights=LossWeights(self.lambda_r, self.lambda_o, self.lambda_arc, self.lambda_td),
            r=self.r, m=self.m, learning_rate=self.learning_rate,
            batch_size=self.batch_size, total_steps=self.total_steps,
            pretrain_steps=self.pretrain_steps, seed=self.seed,
            width_config=self.width_config, subject_width=self.subject_width,
            token_dim=self.token_dim, n_heads=self.n_heads, time_dim=self.time_dim,
            embed_dim=self.embed_dim, n_subjects=self.n_subjects, n_classes=self.n_classes,
            sample_rate=self.sample_rate, subject_lr_mult=self.subject_lr_mult,
            pretrain_lr=self.pretrain_lr, pretrain_noise=self.pretrain_noise,
            pretrain_holdout_fraction=self.pretrain_holdout_fraction,
            checkpoint_interval=self.checkpoint_interval, metrics_flush=self.metrics_flush)

    def eval_config(self) -> evaluation.EvalConfig:
        return evaluation.EvalConfig(
            train_fraction=self.eval_train_fraction, steps=self.eval_steps,
            batch_size=self.eval_batch_size, learning_rate=self.eval_lr,
            embed_dim=self.eval_embed_dim, seed=self.seed)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value, from_flag: bool):
    """Coerce a raw file/flag value to the field's declared type."""
    ftype = _FIELD_TYPES[key]
    if value is None:
        if "None" in ftype:
            return None
        raise ConfigError(f"field {key!r} cannot be null")
    try:
        if ftype == "int":
            return int(value)
        if ftype == "float":
            return float(value)
        if ftype == "tuple":
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return tuple(int(v) for v in value)
        if ftype.startswith("str"):
            return str(value)
        raise ConfigError(f"field {key!r} has unsupported type {ftype}")
    except (TypeError, ValueError):
        raise ConfigError(
            f"bad value for {key!r}: {value!r} (expected {ftype})"
            + (" from flag" if from_flag else " from config file"))


def _reject_unknown(key: str):
    near = difflib.get_close_matches(key, _FIELD_TYPES.keys(), n=1)
    hint = f"; nearest valid key: {near[0]!r}" if near else ""
    raise ConfigError(f"unknown config key {key!r}{hint}")


def parse_config(path: str | None, overrides: dict[str, str]):
    """Defaults < file < flags; returns (RunConfig, sources dict)."""
    resolved = {f.name: f.default for f in fields(RunConfig)}
    resolved["width_config"] = (32, 64, 128)
    sources = {k: "default" for k in resolved}

    if path is not None:
        if not os.path.exists(path):
            raise MissingFileError(f"config file not found: {path}")
        with open(path) as f:
            text = f.read().strip()
        file_cfg = json.loads(text) if text else {}
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        for key, value in file_cfg.items():
            if key not in _FIELD_TYPES:
                _reject_unknown(key)
            resolved[key] = _coerce(key, value, from_flag=False)
            sources[key] = "file"

    for key, value in overrides.items():
        if key not in _FIELD_TYPES:
            _reject_unknown(key)
        resolved[key] = _coerce(key, value, from_flag=True)
        sources[key] = "flag"

    if "seed" not in {k for k, v in sources.items() if v != "default"} \
            and os.environ.get("DSDDPM_SEED"):
        resolved["seed"] = _coerce("seed", os.environ["DSDDPM_SEED"], from_flag=True)
        sources["seed"] = "env"
    return RunConfig(**resolved), sources


def _echo_config(cfg: RunConfig, sources: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    payload = {"config": asdict(cfg), "sources": sources}
    payload["config"]["width_config"] = list(cfg.width_config)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as f:
        json.dump(payload, f, indent=1)


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise ConfigError(f"missing required path --{name}")


def _write_payload(path: str, arr: np.ndarray) -> None:
    np.ascontiguousarray(arr, dtype="<f4").tofile(path)


# -- command implementations ----------------------------------------------------------


def _cmd_gen_synth(cfg: RunConfig, sources) -> int:
    _require(cfg, "out")
    recs = generate_synthetic_dataset(
        n_subjects=cfg.subjects, n_classes=cfg.classes, trials_per_cell=cfg.trials,
        channels=cfg.channels, length=cfg.length, sample_rate=cfg.sample_rate,
        snr=cfg.snr, seed=cfg.seed)
    manifest = save_manifest(recs, cfg.out)
    _echo_config(cfg, sources, cfg.out)
    print(f"wrote {len(recs)} trials ({cfg.subjects} subjects × {cfg.classes} classes) "
          f"to {manifest}")
    return 0


def _cmd_pretrain(cfg: RunConfig, sources) -> int:
    _require(cfg, "data", "out")
    data = load_manifest(cfg.data)
    clf, head, report = engine.pretrain_classifier(data, cfg.train_config())
    path = engine.save_classifier(os.path.join(cfg.out, "classifier"), clf, head)
    _echo_config(cfg, sources, cfg.out)
    print(f"pretrained classifier: holdout accuracy {report.final_accuracy:.4f} "
          f"({report.n_train} train / {report.n_holdout} holdout trials) -> {path}")
    return 0


def _cmd_train(cfg: RunConfig, sources) -> int:
    _require(cfg, "out")
    if cfg.resume is None:
        _require(cfg, "data")
    data = load_manifest(cfg.data) if cfg.data else []
    clf = head = None
    if cfg.classifier:
        clf, head = engine.load_classifier(cfg.classifier)
    state = engine.train(data, cfg.train_config() if cfg.resume is None else None,
                         cfg.out, classifier=clf, head=head, resume=cfg.resume)
    _echo_config(cfg, sources, cfg.out)
    print(f"trained to step {state.step}; checkpoints and metrics.csv under {cfg.out}")
    return 0


def _cmd_sample(cfg: RunConfig, sources) -> int:
    _require(cfg, "ckpt", "out")
    state = engine.load_checkpoint(cfg.ckpt)
    x_s, x_c = engine.ancestral_sample(state, cfg.subject, cfg.n_samples, cfg.seed)
    os.makedirs(cfg.out, exist_ok=True)
    _write_payload(os.path.join(cfg.out, "x_s.bin"), x_s)
    _write_payload(os.path.join(cfg.out, "x_c.bin"), x_c)
    sidecar = {"subject": cfg.subject, "seed": cfg.seed,
               "shape": list(x_s.shape), "files": ["x_s.bin", "x_c.bin"]}
    with open(os.path.join(cfg.out, "samples.json"), "w") as f:
        json.dump(sidecar, f, indent=1)
    _echo_config(cfg, sources, cfg.out)
    print(f"sampled {cfg.n_samples} stacks for subject {cfg.subject} -> {cfg.out}")
    return 0


def _cmd_denoise(cfg: RunConfig, sources) -> int:
    _require(cfg, "ckpt", "input", "out")
    state = engine.load_checkpoint(cfg.ckpt)
    channels = state.denoiser.arch.channels
    if not os.path.exists(cfg.input):
        raise MissingFileError(f"input payload not found: {cfg.input}")
    raw = np.fromfile(cfg.input, dtype="<f4")
    if raw.size % channels:
        raise ConfigError(
            f"{cfg.input}: {raw.size} values do not divide into {channels} channels")
    rec = EEGRecording(subject_id=cfg.subject, class_label=0,
                       data=raw.reshape(channels, -1), sample_rate=state.cfg.sample_rate)
    res = engine.denoise_raw(state, rec, cfg.subject)
    os.makedirs(cfg.out, exist_ok=True)
    _write_payload(os.path.join(cfg.out, "x_s.bin"), res.x_s)
    _write_payload(os.path.join(cfg.out, "x_c.bin"), res.x_c)
    _write_payload(os.path.join(cfg.out, "cleaned.bin"), res.cleaned.data)
    sidecar = {
        "subject": cfg.subject,
        "x_s_shape": list(res.x_s.shape),
        "x_c_shape": list(res.x_c.shape),
        "cleaned_shape": list(res.cleaned.data.shape),
        "additive_residual": res.additive_residual,
    }
    with open(os.path.join(cfg.out, "denoise.json"), "w") as f:
        json.dump(sidecar, f, indent=1)
    _echo_config(cfg, sources, cfg.out)
    print(f"denoised {cfg.input} for subject {cfg.subject} -> {cfg.out} "
          f"(additive residual {res.additive_residual:.4f})")
    return 0


def _cmd_eval_corr(cfg: RunConfig, sources) -> int:
    _require(cfg, "data", "out")
    data = load_manifest(cfg.data)
    os.makedirs(cfg.out, exist_ok=True)
    corr = evaluation.subject_corr_matrix(data, data)
    corr.to_csv(os.path.join(cfg.out, "corr_real.csv"), condition="real-vs-real")
    written = ["corr_real.csv"]
    if cfg.ckpt:
        state = engine.load_checkpoint(cfg.ckpt)
        from .windows import WindowStack, destack_average

        generated = []
        for s in range(state.denoiser.arch.n_subjects):
            x_s, _ = engine.ancestral_sample(state, s, cfg.corr_samples, cfg.seed + s)
            for k in range(cfg.corr_samples):
                ws = WindowStack(data=x_s[k], window=state.cfg.window, stride=state.cfg.stride,
                                 source_length=(x_s.shape[3] - 1) * state.cfg.stride + state.cfg.window)
                generated.append(EEGRecording(
                    subject_id=s, class_label=0,
                    data=destack_average(ws).astype(np.float32),
                    sample_rate=state.cfg.sample_rate))
        corr_gen = evaluation.subject_corr_matrix(data, generated)
        corr_gen.to_csv(os.path.join(cfg.out, "corr_generated.csv"),
                        condition="real-vs-generated")
        written.append("corr_generated.csv")
    _echo_config(cfg, sources, cfg.out)
    print(f"wrote {', '.join(written)} under {cfg.out}")
    return 0


def _cmd_eval_cls(cfg: RunConfig, sources) -> int:
    _require(cfg, "data", "out")
    data = load_manifest(cfg.data)
    state = engine.load_checkpoint(cfg.ckpt) if cfg.ckpt else None
    table = evaluation.cross_subject_eval(data, state, cfg.eval_config(),
                                          window=cfg.window, stride=cfg.stride)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"cls_{table.condition}.csv")
    table.to_csv(path)
    _echo_config(cfg, sources, cfg.out)
    print(f"cross-subject table ({table.condition}): mean accuracy "
          f"{table.accuracy.mean():.4f} -> {path}")
    return 0


def _cmd_export_embeddings(cfg: RunConfig, sources) -> int:
    _require(cfg, "classifier", "data", "out")
    data = load_manifest(cfg.data)
    clf, _ = engine.load_classifier(cfg.classifier)
    state = engine.load_checkpoint(cfg.ckpt) if cfg.ckpt else None
    conditions = tuple(c for c in cfg.conditions.replace(",", " ").split() if c)
    os.makedirs(cfg.out, exist_ok=True)
    out_path = os.path.join(cfg.out, "embeddings.csv")
    rows = evaluation.export_embeddings(clf, data, out_path, conditions=conditions,
                                        state=state, window=cfg.window, stride=cfg.stride)
    _echo_config(cfg, sources, cfg.out)
    print(f"wrote {rows} embedding rows -> {out_path}")
    return 0


_DISPATCH = {
    "gen-synth": _cmd_gen_synth,
    "pretrain-classifier": _cmd_pretrain,
    "train": _cmd_train,
    "sample": _cmd_sample,
    "denoise": _cmd_denoise,
    "eval-corr": _cmd_eval_corr,
    "eval-cls": _cmd_eval_cls,
    "export-embeddings": _cmd_export_embeddings,
}


def _parse_flags(argv: list[str]):
    config_path = None
    overrides: dict[str, str] = {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        if not tok.startswith("--"):
            raise ConfigError(f"expected --key value pairs, got {tok!r}")
        key = tok[2:].replace("-", "_")
        if i + 1 >= len(argv):
            raise ConfigError(f"flag {tok} is missing a value")
        value = argv[i + 1]
        if key == "config":
            config_path = value
        else:
            overrides[key] = value
        i += 2
    return config_path, overrides


def run_command(argv: list[str]) -> int:
    """Dispatch one command; returns the process exit status."""
    if not argv or argv[0] in ("-h", "--help", "help"):
        print(USAGE)
        return 0 if argv and argv[0] in ("-h", "--help", "help") else 2
    command = argv[0]
    if command not in _DISPATCH:
        print(USAGE, file=sys.stderr)
        print(f"error.usage: unknown command {command!r}", file=sys.stderr)
        return 2
    try:
        config_path, overrides = _parse_flags(argv[1:])
        cfg, sources = parse_config(config_path, overrides)
        return _DISPATCH[command](cfg, sources)
    except DiffsepError as e:
        print(f"error.{e.category}: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error.invalid-argument: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
