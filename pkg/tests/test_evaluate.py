import numpy as np
import pytest

from diffsep import evaluation as ev
from diffsep.windows import EEGRecording, generate_synthetic_dataset

from conftest import SMALL


def _rec(data, subject, label=0):
    return EEGRecording(subject_id=subject, class_label=label,
                        data=np.asarray(data, dtype=np.float32), sample_rate=100.0)


# -- correlation matrix -------------------------------------------------------------


def test_corr_symmetric_and_bounded_on_same_set():
    rng = np.random.default_rng(0)
    recs = []
    for s in range(3):
        for _ in range(4):
            recs.append(_rec(rng.standard_normal((2, 30)), s))
    cm = ev.subject_corr_matrix(recs, recs)
    assert cm.subject_ids == [0, 1, 2]
    np.testing.assert_allclose(cm.values, cm.values.T, atol=1e-12)
    assert np.all(cm.values >= -1 - 1e-12) and np.all(cm.values <= 1 + 1e-12)
    assert cm.pair_counts[0, 0] == 4 * 4 - 4
    assert cm.pair_counts[0, 1] == 16


def test_corr_duplicated_trials_dominate_diagonal():
    rng = np.random.default_rng(1)
    recs = []
    for s in range(3):
        base = rng.standard_normal((2, 40))
        for _ in range(3):
            recs.append(_rec(base + 0.1 * rng.standard_normal((2, 40)), s))
    cm = ev.subject_corr_matrix(recs, recs)
    diag = np.diag(cm.values)
    off = cm.values[~np.eye(3, dtype=bool)]
    assert diag.min() > off.max()


def test_corr_identical_copies_give_unit_diagonal():
    rng = np.random.default_rng(2)
    recs = [_rec(rng.standard_normal((1, 20)), s) for s in range(2)]
    copies = [_rec(r.data.copy(), r.subject_id) for r in recs]
    cm = ev.subject_corr_matrix(recs, copies)
    np.testing.assert_allclose(np.diag(cm.values), 1.0, atol=1e-12)


def test_corr_two_subject_scalar_oracle():
    a0 = _rec([[1.0, 2.0, 3.0, 4.0]], 0)
    a1 = _rec([[2.0, 1.0, 4.0, 3.0]], 0)
    b0 = _rec([[4.0, 3.0, 2.0, 1.0]], 1)
    b1 = _rec([[1.0, 3.0, 2.0, 4.0]], 1)
    cm = ev.subject_corr_matrix([a0, a1, b0, b1], [a0, a1, b0, b1])

    def pearson(x, y):
        x, y = np.asarray(x, float).ravel(), np.asarray(y, float).ravel()
        xc, yc = x - x.mean(), y - y.mean()
        return float((xc @ yc) / np.sqrt((xc @ xc) * (yc @ yc)))

    want_00 = (pearson(a0.data, a1.data) + pearson(a1.data, a0.data)) / 2
    want_01 = np.mean([pearson(x.data, y.data) for x in (a0, a1) for y in (b0, b1)])
    assert abs(cm.values[0, 0] - want_00) <= 1e-10
    assert abs(cm.values[0, 1] - want_01) <= 1e-10


def test_corr_rejects_constant_trial():
    recs = [_rec(np.ones((1, 10)), 0), _rec(np.random.default_rng(0).standard_normal((1, 10)), 0),
            _rec(np.random.default_rng(1).standard_normal((1, 10)), 1),
            _rec(np.random.default_rng(2).standard_normal((1, 10)), 1)]
    with pytest.raises(ValueError) as err:
        ev.subject_corr_matrix(recs, recs)
    assert "trial 0 of subject 0" in str(err.value)


def test_corr_csv_emission(tmp_path):
    rng = np.random.default_rng(3)
    recs = [_rec(rng.standard_normal((1, 12)), s) for s in (0, 0, 1, 1)]
    cm = ev.subject_corr_matrix(recs, recs)
    path = tmp_path / "corr_real.csv"
    cm.to_csv(str(path), condition="real-vs-real")
    lines = path.read_text().splitlines()
    assert lines[0] == "# condition: real-vs-real"
    assert lines[1] == ",s0,s1"
    assert lines[2].startswith("s0,")
    assert len(lines) == 4


# -- cross-subject classification -----------------------------------------------------


@pytest.fixture(scope="module")
def eval_dataset():
    return generate_synthetic_dataset(3, 2, 8, channels=SMALL["channels"],
                                      length=SMALL["length"], sample_rate=SMALL["sample_rate"],
                                      snr=1.0, seed=21)


def test_cross_subject_table_structure(eval_dataset):
    cfg = ev.EvalConfig(train_fraction=0.75, steps=30, batch_size=8,
                        learning_rate=2e-3, embed_dim=16, seed=0)
    table = ev.cross_subject_eval(eval_dataset, None, cfg,
                                  window=SMALL["window"], stride=SMALL["stride"])
    assert table.condition == "raw"
    assert table.accuracy.shape == (3, 3)
    np.testing.assert_allclose(table.mean_row, table.accuracy.mean(axis=0))
    assert np.all(table.accuracy >= 0) and np.all(table.accuracy <= 1)
    # lineage isolation: each row trains only on its own subject's trials
    for sid, items in table.lineage.items():
        assert all(subject == sid for subject, _ in items)
        assert len(items) == 12  # 0.75 of 16 trials


def test_cross_subject_deterministic(eval_dataset):
    cfg = ev.EvalConfig(steps=15, batch_size=8, embed_dim=16, seed=3)
    t1 = ev.cross_subject_eval(eval_dataset, None, cfg, window=SMALL["window"],
                               stride=SMALL["stride"])
    t2 = ev.cross_subject_eval(eval_dataset, None, cfg, window=SMALL["window"],
                               stride=SMALL["stride"])
    np.testing.assert_array_equal(t1.accuracy, t2.accuracy)


def test_cross_subject_rejects_degenerate(eval_dataset):
    single = [r for r in eval_dataset if r.subject_id == 0]
    cfg = ev.EvalConfig(steps=5)
    with pytest.raises(ValueError):
        ev.cross_subject_eval(single, None, cfg, window=SMALL["window"], stride=SMALL["stride"])
    one_class = [r for r in eval_dataset if r.class_label == 0]
    with pytest.raises(ValueError):
        ev.cross_subject_eval(one_class, None, cfg, window=SMALL["window"], stride=SMALL["stride"])


def test_cls_csv_has_mean_row(eval_dataset, tmp_path):
    cfg = ev.EvalConfig(steps=10, batch_size=8, embed_dim=16, seed=0)
    table = ev.cross_subject_eval(eval_dataset, None, cfg, window=SMALL["window"],
                                  stride=SMALL["stride"])
    path = tmp_path / "cls_raw.csv"
    table.to_csv(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "# condition: raw"
    assert lines[-1].startswith("M,")
    assert len(lines) == 2 + 3 + 1


# -- embeddings and PCA ---------------------------------------------------------------


def test_export_embeddings_rows_and_determinism(eval_dataset, tmp_path):
    from diffsep.classifier import init_classifier

    clf = init_classifier(SMALL["channels"], SMALL["window"], SMALL["stacks"],
                          embed_dim=16, seed=0)
    subset = eval_dataset[:6]
    out1 = tmp_path / "emb1.csv"
    out2 = tmp_path / "emb2.csv"
    n1 = ev.export_embeddings(clf, subset, str(out1), conditions=("x_0",),
                              window=SMALL["window"], stride=SMALL["stride"])
    ev.export_embeddings(clf, subset, str(out2), conditions=("x_0",),
                         window=SMALL["window"], stride=SMALL["stride"])
    assert n1 == 6
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()[0].split(",")
    assert header[:3] == ["subject", "label", "condition"]
    assert len(header) == 3 + clf.arch.penultimate_dim


def test_export_embeddings_stream_conditions_need_state(eval_dataset, tmp_path):
    from diffsep.classifier import init_classifier

    clf = init_classifier(SMALL["channels"], SMALL["window"], SMALL["stacks"],
                          embed_dim=16, seed=0)
    with pytest.raises(ValueError):
        ev.export_embeddings(clf, eval_dataset[:2], str(tmp_path / "e.csv"),
                             conditions=("x_s_0",), window=SMALL["window"],
                             stride=SMALL["stride"])
    with pytest.raises(ValueError):
        ev.export_embeddings(clf, eval_dataset[:2], str(tmp_path / "e.csv"),
                             conditions=("bogus",), window=SMALL["window"],
                             stride=SMALL["stride"])


def test_pca_exact_reconstruction_when_full_rank():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 3))
    X -= X.mean(axis=0)
    res = ev.pca_project(X, 3)
    np.testing.assert_allclose(res.reconstruct(), X, atol=1e-10)
    assert res.coords.shape == (40, 3)


def test_pca_isotropic_ratios_near_uniform():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((4000, 4))
    res = ev.pca_project(X, 4)
    np.testing.assert_allclose(res.explained_variance_ratio, 0.25, atol=0.03)


def test_pca_two_points_component_along_difference():
    X = np.array([[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]])
    res = ev.pca_project(X, 1)
    np.testing.assert_allclose(np.abs(res.components[0]), 1 / np.sqrt(3), atol=1e-12)
    assert res.components[0][np.argmax(np.abs(res.components[0]))] > 0


def test_pca_rank_deficiency_reported():
    X = np.zeros((10, 3))
    X[:, 0] = np.arange(10)
    with pytest.raises(ValueError):
        ev.pca_project(X, 2)


def test_pca_sign_convention_positive_peak():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((50, 5))
    res = ev.pca_project(X, 3)
    for comp in res.components:
        assert comp[np.argmax(np.abs(comp))] > 0
