import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_confusion, naive_miou, naive_vc, naive_wiou
from stsc.errors import DataError
from stsc.metrics import confusion, evaluate, miou, per_class_iou, video_consistency, wiou
from stsc.video import IGNORE

CM = np.array([[1, 1], [0, 2]])


def test_confusion_examples():
    gt = np.array([0, 0, 1, 1])
    np.testing.assert_array_equal(confusion(gt, gt, 2), np.diag([2, 2]))
    np.testing.assert_array_equal(confusion(gt, np.full(4, IGNORE), 2), np.zeros((2, 2)))
    np.testing.assert_array_equal(confusion(np.array([0, 1, 1, 1]), gt, 2), CM)


def test_confusion_rejects_out_of_range():
    with pytest.raises(DataError):
        confusion(np.array([0, 5]), np.array([0, 1]), 2)
    with pytest.raises(DataError):
        confusion(np.array([0, 1]), np.array([0, 7]), 2)


def test_miou_examples():
    assert miou(np.diag([3, 4, 0])) == 1.0
    assert miou(np.array([[0, 2], [3, 0]])) == 0.0
    assert miou(CM) == pytest.approx((1 / 2 + 2 / 3) / 2, abs=1e-15)
    assert round(miou(CM), 6) == 0.583333
    with pytest.raises(DataError):
        miou(np.zeros((3, 3)))


def test_wiou_examples():
    assert wiou(np.diag([1, 5])) == 1.0
    assert wiou(CM) == pytest.approx(0.5 * 0.5 + 0.5 * 2 / 3, abs=1e-15)
    single = np.array([[3, 1], [0, 0]])
    assert wiou(single) == pytest.approx(per_class_iou(single)[0])
    with pytest.raises(DataError):
        wiou(np.zeros((2, 2)))


def test_vc_examples():
    gts = np.zeros((8, 2, 2), dtype=int)
    assert video_consistency(gts, gts, 8) == 1.0
    alt = np.array([np.full((2, 2), t % 2) for t in range(8)])
    assert video_consistency(alt, gts, 4) == 0.0
    gt = np.array([[0, 1], [0, 1]])
    pred = np.array([[0, 1], [0, 0]])
    assert video_consistency(pred, gt, 2) == 0.5
    with pytest.raises(DataError):
        video_consistency(gt, gt, 3)


def test_vc_requires_correct_prediction():
    gts = np.zeros((4, 3, 3), dtype=int)
    assert video_consistency(np.ones_like(gts), gts, 4) == 0.0


def test_vc_skips_windows_without_static_pixels():
    gts = np.array([[[t % 2]] for t in range(4)])
    assert video_consistency(gts, gts, 2) is None


def random_pair(rng, k=3, t=4, h=8, w=8):
    gt = rng.integers(0, k, (t, h, w))
    # temporally sticky ground truth so VC windows are non-trivial
    for i in range(1, t):
        keep = rng.random((h, w)) < 0.8
        gt[i][keep] = gt[i - 1][keep]
    gt[rng.random(gt.shape) < 0.05] = IGNORE
    pred = np.where(rng.random(gt.shape) < 0.7, np.where(gt == IGNORE, 0, gt), rng.integers(0, k, gt.shape))
    return pred, gt


@pytest.mark.parametrize("seed", range(10))
def test_matches_naive_oracles(seed):
    rng = np.random.default_rng(seed)
    pred, gt = random_pair(rng)
    cm = confusion(pred, gt, 3)
    assert cm.tolist() == naive_confusion(pred, gt, 3)
    assert abs(miou(cm) - naive_miou(cm.tolist())) <= 1e-12
    assert abs(wiou(cm) - naive_wiou(cm.tolist())) <= 1e-12
    for n in (2, 3, 4):
        a, b = video_consistency(pred, gt, n), naive_vc(pred, gt, n)
        assert (a is None and b is None) or abs(a - b) <= 1e-12


def test_evaluate_perfect_and_duplicated():
    rng = np.random.default_rng(20)
    pred, gt = random_pair(rng, t=10)
    perfect = evaluate([(gt, gt, "a")], 3, vc_lengths=(8,))
    assert perfect.miou == perfect.wiou == perfect.vc[8] == 1.0
    once = evaluate([(pred, gt)], 3, vc_lengths=(8,))
    twice = evaluate([(pred, gt), (pred, gt)], 3, vc_lengths=(8,))
    assert once.miou == twice.miou and once.wiou == twice.wiou
    assert twice.pixel_counts == [2 * c for c in once.pixel_counts]


def test_evaluate_composes_per_op_oracles():
    rng = np.random.default_rng(21)
    pairs = [random_pair(rng, t=9) for _ in range(3)]
    rep = evaluate(pairs, 3, vc_lengths=(8, 16))
    total = np.sum([naive_confusion(p, g, 3) for p, g in pairs], axis=0).tolist()
    assert rep.miou == pytest.approx(naive_miou(total), abs=1e-12)
    assert rep.wiou == pytest.approx(naive_wiou(total), abs=1e-12)
    vcs = [naive_vc(p, g, 8) for p, g in pairs]
    assert rep.vc[8] == pytest.approx(np.mean([v for v in vcs if v is not None]), abs=1e-12)
    assert rep.vc[16] is None
    js = rep.to_json()
    assert js["vc16"] is None and set(js) >= {"miou", "wiou", "vc8", "vc16", "per_class", "pixels"}


def test_evaluate_error_names_clip():
    gt = np.zeros((2, 2, 2), dtype=int)
    with pytest.raises(DataError, match="clip bad"):
        evaluate([(gt + 5, gt, "bad")], 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.permutations([0, 1, 2]))
def test_permutation_invariance(seed, perm):
    rng = np.random.default_rng(seed)
    pred, gt = random_pair(rng)
    perm = np.array(perm)
    lut = np.concatenate([perm, np.arange(3, 256)])
    cm = confusion(pred, gt, 3)
    cm_p = confusion(lut[pred], lut[gt], 3)
    assert abs(miou(cm) - miou(cm_p)) <= 1e-12
    assert abs(wiou(cm) - wiou(cm_p)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bounds_and_perfect_iff_diagonal(seed):
    rng = np.random.default_rng(seed)
    pred, gt = random_pair(rng)
    cm = confusion(pred, gt, 3)
    for v in (miou(cm), wiou(cm)):
        assert 0.0 <= v <= 1.0
    offdiag = cm - np.diag(np.diag(cm))
    assert (miou(cm) == 1.0) == (not offdiag.any())
    for n in (2, 4):
        v = video_consistency(pred, gt, n)
        assert v is None or 0.0 <= v <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_vc_non_increasing_in_window_on_static_gt(seed):
    rng = np.random.default_rng(seed)
    gt = np.repeat(rng.integers(0, 3, (1, 5, 5)), 8, axis=0)
    pred = np.where(rng.random(gt.shape) < 0.9, gt, rng.integers(0, 3, gt.shape))
    vals = [video_consistency(pred, gt, n) for n in range(1, 9)]
    assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
