import numpy as np
import pytest

from diffsep import classifier as cl
from diffsep.autodiff import Tensor
from diffsep.losses import (LossWeights, RawLosses, arc_margin_loss, arc_margin_raw,
                            orthogonal_loss, orthogonal_raw, reverse_loss,
                            temporal_difference_loss, temporal_difference_raw,
                            total_loss)
from diffsep.windows import WindowStack, destack_average, overlap_pairs, stack_windows
from diffsep.windows import EEGRecording

W1 = LossWeights(1.0, 1.0, 1.0, 1.0)
RNG = np.random.default_rng(0)


# -- reverse loss -------------------------------------------------------------------


def test_reverse_perfect_prediction_is_zero():
    eps = RNG.standard_normal((2, 3, 4, 2))
    half = 0.3 * eps
    assert reverse_loss(eps, half, eps - half, W1) == 0.0


def test_reverse_unit_case():
    eps = np.zeros((5, 4))
    ones = np.ones((5, 4))
    assert reverse_loss(eps, ones, np.zeros_like(eps), W1) == pytest.approx(1.0, abs=1e-15)


def test_reverse_scalar_loop_oracle():
    for _ in range(10):
        shape = (2, 3, 4)
        e, a, b = (RNG.standard_normal(shape) for _ in range(3))
        got = reverse_loss(e, a, b, LossWeights(0.7, 0, 0, 0))
        acc = 0.0
        for idx in np.ndindex(*shape):
            acc += (e[idx] - a[idx] - b[idx]) ** 2
        assert abs(got - 0.7 * acc / e.size) <= 1e-10


def test_reverse_shape_mismatch():
    with pytest.raises(ValueError):
        reverse_loss(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)), W1)


# -- orthogonal loss ----------------------------------------------------------------


def _from_rows(rows):
    """Build a (1, CW, S) tensor whose stack s flattens to rows[s]."""
    rows = np.asarray(rows, dtype=np.float64)
    S, CW = rows.shape
    return rows.T.reshape(1, CW, S)


def test_orthogonal_diagonal_gram_is_zero():
    a = _from_rows(np.eye(3))
    b = _from_rows(2.0 * np.eye(3))  # G = 2I: only the diagonal is nonzero
    assert orthogonal_loss(a, b, W1) == 0.0


def test_orthogonal_two_stack_case():
    a = _from_rows([[1.0, 0.0], [0.0, 1.0]])
    b = _from_rows([[1.0, 0.5], [0.5, 1.0]])
    # G = A B^T = [[1, .5], [.5, 1]] -> off-diagonal squares sum to 0.5
    assert orthogonal_loss(a, b, W1) == pytest.approx(0.5, abs=1e-12)
    assert orthogonal_loss(a, b, LossWeights(1, 0.2, 0, 0)) == pytest.approx(0.1, abs=1e-12)


def test_orthogonal_double_loop_oracle():
    for _ in range(10):
        a = RNG.standard_normal((2, 2, 3, 4))  # batch of 2
        b = RNG.standard_normal((2, 2, 3, 4))
        got = orthogonal_loss(a, b, W1)
        total = 0.0
        for bi in range(2):
            A = a[bi].reshape(6, 4).T  # (stacks, C*W)
            B = b[bi].reshape(6, 4).T
            for i in range(4):
                for j in range(4):
                    if i != j:
                        total += float(A[i] @ B[j]) ** 2
        assert abs(got - total / 2) <= 1e-8


# -- arc-margin loss ---------------------------------------------------------------


def test_arc_single_class_is_zero():
    logits = np.array([[3.7]])
    assert arc_margin_loss(logits, np.array([0]), W1) == 0.0


def test_arc_aligned_example_near_zero():
    head = cl.ArcMarginHead(W=np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32),
                            r=30.0, m=0.5)
    logits = cl.arc_logits(head, np.array([[1.0, 0.0]]), target=np.array([0]))
    assert arc_margin_loss(logits, np.array([0]), W1) < 1e-9


def test_arc_margin_free_equals_softmax_ce_oracle():
    head = cl.init_arc_head(4, 6, r=30.0, m=0.0, seed=1)
    e = RNG.standard_normal((8, 6))
    y = np.array([0, 1, 2, 3, 0, 1, 2, 3])
    got = arc_margin_loss(cl.arc_logits(head, e, target=y), y, W1)
    # independent cross-entropy on r-scaled clamped cosines
    en = e / np.linalg.norm(e, axis=1, keepdims=True)
    w64 = head.W.astype(np.float64)
    wn = w64 / np.linalg.norm(w64, axis=1, keepdims=True)
    z = 30.0 * np.clip(en @ wn.T, -1 + 1e-7, 1 - 1e-7)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    want = -logp[np.arange(8), y].mean()
    assert abs(got - want) <= 1e-8


def test_arc_rejects_empty_batch():
    with pytest.raises(ValueError):
        arc_margin_loss(np.zeros((0, 3)), np.zeros(0, dtype=int), W1)


# -- temporal difference loss --------------------------------------------------------


def test_td_constant_tensor_zero():
    om = overlap_pairs(4, 2, 3)
    y = np.full((2, 4, 3), 3.3)
    assert temporal_difference_loss(y, om, W1) == 0.0


def test_td_constant_offset():
    om = overlap_pairs(4, 2, 2)
    y = np.zeros((1, 4, 2))
    y[0, :, 1] = 1.5  # overlap disagrees by exactly c everywhere
    assert temporal_difference_loss(y, om, W1) == pytest.approx(1.5**2, abs=1e-12)


def test_td_empty_map_zero():
    om = overlap_pairs(4, 4, 3)
    assert temporal_difference_loss(RNG.standard_normal((2, 4, 3)), om, W1) == 0.0


def test_td_record_loop_oracle():
    om = overlap_pairs(6, 2, 4)
    for _ in range(10):
        y = RNG.standard_normal((2, 3, 6, 4))  # batched
        got = temporal_difference_loss(y, om, LossWeights(1, 0, 0, 2.0))
        acc, cnt = 0.0, 0
        for (ka, ca, kb, cb) in om.records():
            for bi in range(2):
                for c in range(3):
                    acc += (y[bi, c, ca, ka] - y[bi, c, cb, kb]) ** 2
                    cnt += 1
        assert abs(got - 2.0 * acc / cnt) <= 1e-10


def test_td_out_of_range_map():
    om = overlap_pairs(8, 4, 5)
    with pytest.raises(ValueError):
        temporal_difference_loss(np.zeros((1, 8, 3)), om, W1)


def test_td_zero_on_overlap_consistent_tensor():
    # restacking a destacked tensor gives perfectly consistent overlaps
    rng = np.random.default_rng(3)
    raw = rng.standard_normal((2, 20))
    rec = EEGRecording(subject_id=0, class_label=0, data=raw.astype(np.float32),
                       sample_rate=100.0)
    ws = stack_windows(rec, 6, 2)
    flat = destack_average(ws)
    rec2 = EEGRecording(subject_id=0, class_label=0, data=flat.astype(np.float32),
                        sample_rate=100.0)
    ws2 = stack_windows(rec2, 6, 2)
    om = overlap_pairs(6, 2, ws2.stacks)
    assert temporal_difference_loss(ws2.data, om, W1) == 0.0


# -- total loss --------------------------------------------------------------------


def test_total_zero_case():
    rep = total_loss(RawLosses(0.0, 0.0, 0.0, 0.0), W1)
    assert rep.total == 0.0


def test_total_arithmetic():
    rep = total_loss(RawLosses(1.0, 2.0, 3.0, 4.0), LossWeights(1.0, 0.1, 0.1, 0.5))
    assert rep.total == pytest.approx(3.5, abs=1e-12)
    assert rep.l_r == 1.0 and rep.l_o == pytest.approx(0.2)
    assert rep.l_arc == pytest.approx(0.3) and rep.l_td == pytest.approx(2.0)


def test_total_dot_product_oracle():
    for _ in range(10):
        raw = RNG.random(4)
        w = LossWeights(*(0.1 + RNG.random(4)))
        rep = total_loss(RawLosses(*raw), w)
        lam = np.array([w.lambda_r, w.lambda_o, w.lambda_arc, w.lambda_td])
        assert abs(rep.total - float(lam @ raw)) <= 1e-9


def test_total_rejects_non_finite():
    with pytest.raises(ValueError):
        total_loss(RawLosses(1.0, float("nan"), 0.0, 0.0), W1)


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(0.0, 0.1, 0.1, 0.1)
    with pytest.raises(ValueError):
        LossWeights(1.0, -0.1, 0.1, 0.1)


# -- cross-cutting properties -----------------------------------------------------


def test_losses_nonnegative_random():
    om = overlap_pairs(4, 2, 2)
    for _ in range(20):
        e, a, b = (RNG.standard_normal((2, 1, 4, 2)) for _ in range(3))
        assert reverse_loss(e, a, b, W1) >= 0
        assert orthogonal_loss(a, b, W1) >= 0
        assert temporal_difference_loss(a, om, W1) >= 0


def test_batch_permutation_invariance():
    om = overlap_pairs(4, 2, 2)
    e, a, b = (RNG.standard_normal((6, 2, 4, 2)) for _ in range(3))
    logits = RNG.standard_normal((6, 3))
    y = np.array([0, 1, 2, 0, 1, 2])
    perm = np.array([3, 1, 5, 0, 4, 2])
    assert abs(reverse_loss(e, a, b, W1) - reverse_loss(e[perm], a[perm], b[perm], W1)) <= 1e-12
    assert abs(orthogonal_loss(a, b, W1) - orthogonal_loss(a[perm], b[perm], W1)) <= 1e-12
    assert abs(arc_margin_loss(logits, y, W1)
               - arc_margin_loss(logits[perm], y[perm], W1)) <= 1e-12
    assert abs(temporal_difference_loss(a, om, W1)
               - temporal_difference_loss(a[perm], om, W1)) <= 1e-12


def test_loss_gradients_match_finite_differences():
    om = overlap_pairs(4, 2, 2)
    e = RNG.standard_normal((2, 1, 4, 2))
    y = np.array([1, 0])

    cases = {
        "reverse": lambda p: (lambda d: (d * d).mean())(Tensor(e) - p["a"] - p["b"]),
        "orthogonal": lambda p: orthogonal_raw(p["a"], p["b"]),
        "td": lambda p: temporal_difference_raw(p["a"] + p["b"], om),
        "arc": lambda p: arc_margin_raw(p["logits"], y),
    }
    arrays = {"a": RNG.standard_normal((2, 1, 4, 2)),
              "b": RNG.standard_normal((2, 1, 4, 2)),
              "logits": RNG.standard_normal((2, 3))}
    for name, build in cases.items():
        leaves = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        out = build(leaves)
        out.backward()
        for key, leaf in leaves.items():
            if leaf.grad is None:
                continue
            for idx in range(0, arrays[key].size, 5):
                h = 1e-6
                up = {k: v.copy() for k, v in arrays.items()}
                up[key].flat[idx] += h
                dn_ = {k: v.copy() for k, v in arrays.items()}
                dn_[key].flat[idx] -= h
                fd = (build({k: Tensor(v) for k, v in up.items()}).item()
                      - build({k: Tensor(v) for k, v in dn_.items()}).item()) / (2 * h)
                an = leaf.grad.flat[idx]
                assert abs(an - fd) <= 1e-7 + 1e-4 * max(abs(an), abs(fd)), (
                    f"{name}:{key}[{idx}] analytic {an} fd {fd}")
