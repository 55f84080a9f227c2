import json
import os

import numpy as np
import pytest

from diffsep import cli
from diffsep.errors import ConfigError
from diffsep.losses import LossReport
from diffsep.metrics import METRICS_COLUMNS, MetricsWriter, load_metrics


def test_parse_defaults_match_documented_values(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    cfg, sources = cli.parse_config(str(empty), {"data": "d/manifest.json", "out": "o"})
    assert cfg.T == 1000
    assert cfg.beta_start == 1e-4 and cfg.beta_end == 0.02
    assert cfg.window == 224 and cfg.stride == 75
    assert cfg.batch_size == 64
    assert cfg.r == 30.0 and cfg.m == 0.5
    assert sources["T"] == "default"
    assert sources["data"] == "flag"


def test_parse_layering_file_then_flags(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"T": 77, "batch_size": 8}))
    cfg, sources = cli.parse_config(str(f), {"T": "50"})
    assert cfg.T == 50 and sources["T"] == "flag"
    assert cfg.batch_size == 8 and sources["batch_size"] == "file"


def test_parse_rejects_unknown_key_with_hint(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"battch_size": 8}))
    with pytest.raises(ConfigError) as err:
        cli.parse_config(str(f), {})
    assert "batch_size" in str(err.value)


def test_parse_rejects_type_mismatch():
    with pytest.raises(ConfigError):
        cli.parse_config(None, {"T": "many"})


def test_width_config_parses_from_flag():
    cfg, _ = cli.parse_config(None, {"width_config": "8,16,24"})
    assert cfg.width_config == (8, 16, 24)


def test_env_seed_fallback(monkeypatch):
    monkeypatch.setenv("DSDDPM_SEED", "1234")
    cfg, sources = cli.parse_config(None, {})
    assert cfg.seed == 1234 and sources["seed"] == "env"
    cfg, sources = cli.parse_config(None, {"seed": "7"})
    assert cfg.seed == 7 and sources["seed"] == "flag"


def test_unknown_command_exits_2(capsys):
    assert cli.run_command(["frobnicate"]) == 2
    assert "error.usage" in capsys.readouterr().err


def test_missing_path_is_config_error(capsys):
    assert cli.run_command(["gen-synth"]) == 1
    assert "error.config" in capsys.readouterr().err


def test_echoed_config_reparses_identically(tmp_path, capsys):
    out = tmp_path / "d"
    rc = cli.run_command(["gen-synth", "--subjects", "2", "--classes", "2",
                          "--trials", "2", "--channels", "2", "--length", "64",
                          "--out", str(out), "--seed", "5"])
    assert rc == 0
    echo = json.loads((out / "resolved_config.json").read_text())
    assert echo["sources"]["subjects"] == "flag"
    assert echo["config"]["subjects"] == 2
    # feeding the echoed config back resolves to the same values
    cfgfile = tmp_path / "echo.json"
    cfgfile.write_text(json.dumps(echo["config"]))
    cfg2, _ = cli.parse_config(str(cfgfile), {})
    assert cfg2 == cli.RunConfig(**{**echo["config"],
                                    "width_config": tuple(echo["config"]["width_config"])})


# -- metrics stream -------------------------------------------------------------------


def _report(i):
    return LossReport(raw_r=1.0 * i, raw_o=0.1, raw_arc=0.2, raw_td=0.3,
                      l_r=1.0 * i, l_o=0.01, l_arc=0.02, l_td=0.15, total=1.0 * i + 0.18)


def test_metrics_rows_and_header(tmp_path):
    path = str(tmp_path / "m.csv")
    with MetricsWriter(path, flush_interval=3) as w:
        for i in range(1, 11):
            w.append(i, _report(i))
    lines = open(path).read().splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert len(lines) == 11
    m = load_metrics(path)
    assert list(m["step"]) == list(map(float, range(1, 11)))
    assert m["td_mse"][0] == 0.3


def test_metrics_column_order_bit_exact(tmp_path):
    path = str(tmp_path / "m.csv")
    with MetricsWriter(path) as w:
        w.append(1, _report(1))
    first = open(path).read().splitlines()[0]
    assert first == "step,l_r,l_o,l_arc,l_td,td_mse,total"


def test_metrics_tolerates_truncated_last_line(tmp_path):
    path = str(tmp_path / "m.csv")
    with MetricsWriter(path) as w:
        for i in range(1, 4):
            w.append(i, _report(i))
    with open(path, "a") as f:
        f.write("4,0.5,0.1")  # torn write, no newline, wrong arity
    m = load_metrics(path)
    assert len(m["step"]) == 3


def test_metrics_corrupt_interior_row_rejected(tmp_path):
    path = str(tmp_path / "m.csv")
    with MetricsWriter(path) as w:
        w.append(1, _report(1))
        w.append(2, _report(2))
    lines = open(path).read().splitlines()
    lines[1] = "garbage"
    open(path, "w").write("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        load_metrics(path)


# -- end-to-end command flows ----------------------------------------------------------


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    rc = cli.run_command([
        "gen-synth", "--subjects", "3", "--classes", "2", "--trials", "4",
        "--channels", "3", "--length", "96", "--sample_rate", "128",
        "--snr", "1.0", "--seed", "11", "--out", str(d)])
    assert rc == 0
    return d


SMOKE_FLAGS = ["--T", "8", "--window", "32", "--stride", "16",
               "--width_config", "4,6,8", "--subject_width", "4",
               "--token_dim", "8", "--n_heads", "2", "--time_dim", "8",
               "--embed_dim", "12", "--batch_size", "8",
               "--pretrain_steps", "30", "--total_steps", "6",
               "--checkpoint_interval", "0", "--seed", "3"]


@pytest.fixture(scope="module")
def trained_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    rc = cli.run_command(["train", "--data", str(synth_dir / "manifest.json"),
                          "--out", str(out)] + SMOKE_FLAGS)
    assert rc == 0
    return out


def test_train_outputs(trained_dir):
    assert (trained_dir / "metrics.csv").exists()
    assert (trained_dir / "ckpt-final" / "meta.json").exists()
    assert (trained_dir / "resolved_config.json").exists()


def test_pretrain_command(synth_dir, tmp_path):
    out = tmp_path / "clf"
    rc = cli.run_command(["pretrain-classifier", "--data", str(synth_dir / "manifest.json"),
                          "--out", str(out)] + SMOKE_FLAGS)
    assert rc == 0
    assert (out / "classifier" / "meta.json").exists()


def test_sample_command_and_invalid_subject(trained_dir, tmp_path, capsys):
    out = tmp_path / "samples"
    rc = cli.run_command(["sample", "--ckpt", str(trained_dir / "ckpt-final"),
                          "--subject", "1", "--n_samples", "2", "--seed", "4",
                          "--out", str(out)])
    assert rc == 0
    sidecar = json.loads((out / "samples.json").read_text())
    assert sidecar["shape"] == [2, 3, 32, 5]
    assert (out / "x_s.bin").stat().st_size == 4 * 2 * 3 * 32 * 5
    capsys.readouterr()
    rc = cli.run_command(["sample", "--ckpt", str(trained_dir / "ckpt-final"),
                          "--subject", "99", "--out", str(tmp_path / "bad")])
    assert rc == 1
    assert "error.invalid-subject" in capsys.readouterr().err


def test_denoise_command(synth_dir, trained_dir, tmp_path):
    trial = next(p for p in sorted(os.listdir(synth_dir)) if p.endswith(".bin"))
    out = tmp_path / "den"
    rc = cli.run_command(["denoise", "--ckpt", str(trained_dir / "ckpt-final"),
                          "--input", str(synth_dir / trial), "--subject", "1",
                          "--out", str(out)])
    assert rc == 0
    sidecar = json.loads((out / "denoise.json").read_text())
    assert sidecar["x_s_shape"] == [3, 32, 5]
    assert sidecar["cleaned_shape"] == [3, 96]
    for name in ("x_s.bin", "x_c.bin", "cleaned.bin"):
        assert (out / name).exists()
    cleaned = np.fromfile(out / "cleaned.bin", dtype="<f4")
    assert cleaned.size == 3 * 96 and np.isfinite(cleaned).all()


def test_eval_corr_command(synth_dir, trained_dir, tmp_path):
    out = tmp_path / "corr"
    rc = cli.run_command(["eval-corr", "--data", str(synth_dir / "manifest.json"),
                          "--ckpt", str(trained_dir / "ckpt-final"),
                          "--corr_samples", "2", "--seed", "0", "--out", str(out)])
    assert rc == 0
    assert (out / "corr_real.csv").exists()
    assert (out / "corr_generated.csv").exists()


def test_eval_cls_command(synth_dir, tmp_path):
    out = tmp_path / "cls"
    rc = cli.run_command(["eval-cls", "--data", str(synth_dir / "manifest.json"),
                          "--window", "32", "--stride", "16",
                          "--eval_steps", "10", "--eval_batch_size", "8",
                          "--eval_embed_dim", "12", "--seed", "0", "--out", str(out)])
    assert rc == 0
    lines = (out / "cls_raw.csv").read_text().splitlines()
    assert lines[0] == "# condition: raw"
    assert lines[-1].startswith("M,")


def test_export_embeddings_command(synth_dir, trained_dir, tmp_path):
    clf_out = tmp_path / "clf"
    rc = cli.run_command(["pretrain-classifier", "--data", str(synth_dir / "manifest.json"),
                          "--out", str(clf_out)] + SMOKE_FLAGS)
    assert rc == 0
    out = tmp_path / "emb"
    rc = cli.run_command(["export-embeddings", "--data", str(synth_dir / "manifest.json"),
                          "--classifier", str(clf_out / "classifier"),
                          "--ckpt", str(trained_dir / "ckpt-final"),
                          "--conditions", "x_0,x_s_0,x_c_0", "--out", str(out)])
    assert rc == 0
    lines = (out / "embeddings.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * 24  # 3 conditions x 24 trials
