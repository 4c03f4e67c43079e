import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from objperm.geometry import DetectionBatch
from objperm.metrics import (
    MetricInputError,
    UndefinedMetricError,
    average_precision,
    clear_mot,
    clear_mot_matches,
    det_a,
    idf1,
    voc_map,
)
from fixtures import SWAP_EXPECTED, SWAP_RATES, swap_sequence
from oracles import ap_by_threshold_enumeration, idf1_brute

BOX = [0.0, 0.0, 10.0, 10.0]
FAR = [500.0, 500.0, 10.0, 10.0]


def _batch(boxes, conf=None, ids=None):
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    conf = np.ones(len(boxes)) if conf is None else conf
    return DetectionBatch(boxes, conf, track_id=ids)


def _single_track(frames, present=None, tid=1, box=BOX):
    present = range(frames) if present is None else present
    return {f: _batch([box] if f in present else [], ids=[tid] if f in present else []) for f in range(frames)}


# --- VOC AP ------------------------------------------------------------------


def test_ap_toy_example():
    gt = {f: _batch([BOX]) for f in range(3)}
    pred = {0: _batch([BOX], [0.9]), 1: _batch([BOX], [0.8]), 2: _batch([FAR], [0.7])}
    res = voc_map(pred, gt)
    assert res.precision_recall_curve[1] == pytest.approx([(1 / 3, 1.0), (2 / 3, 1.0), (2 / 3, 2 / 3)])
    assert res.map == pytest.approx(2 / 3)
    oracle = ap_by_threshold_enumeration(
        [(0, tuple(BOX), 0.9), (1, tuple(BOX), 0.8), (2, tuple(FAR), 0.7)], {f: [tuple(BOX)] for f in range(3)}
    )
    assert res.map == pytest.approx(oracle)


def test_ap_perfect_and_disjoint():
    gt = {f: _batch([BOX, [40, 0, 10, 10]]) for f in range(4)}
    assert voc_map(gt, gt).map == 1.0
    wrong = {f: _batch([FAR]) for f in range(4)}
    assert voc_map(wrong, gt).map == 0.0
    assert voc_map({}, gt).map == 0.0


def test_ap_needs_ground_truth():
    with pytest.raises(UndefinedMetricError):
        voc_map({0: _batch([BOX])}, {0: _batch([])})


def test_eleven_point_interpolation():
    recall = np.array([0.5, 1.0])
    precision = np.array([1.0, 0.5])
    # Recall levels 0..0.5 see precision 1, 0.6..1.0 see 0.5.
    assert average_precision(recall, precision, eleven_point=True) == pytest.approx((6 * 1.0 + 5 * 0.5) / 11)
    assert average_precision(recall, precision) == pytest.approx(0.75)


@given(st.integers(0, 2**31 - 1))
def test_ap_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    gt, pred, squashed = {}, {}, {}
    for f in range(4):
        g = np.c_[rng.integers(0, 60, (3, 2)), rng.integers(5, 20, (3, 2))].astype(float)
        p = np.r_[g + rng.integers(-3, 4, (3, 4)) * [1, 1, 0, 0], rng.uniform(0, 60, (2, 4))]
        conf = rng.permutation(5) / 5.0 + 0.1
        gt[f] = _batch(g)
        pred[f] = _batch(p, conf)
        squashed[f] = _batch(p, np.exp(3 * conf) / 100)
    assert voc_map(pred, gt).map == voc_map(squashed, gt).map


# --- CLEAR-MOT ---------------------------------------------------------------


def test_identity_tracking_is_perfect():
    gt = {f: _batch([BOX, [50, 0, 10, 10]], ids=[1, 2]) for f in range(5)}
    rep = clear_mot(gt, gt)
    assert (rep.mota, rep.motp, rep.fp, rep.fn, rep.ids, rep.idf1, rep.deta) == (1.0, 1.0, 0, 0, 0, 1.0, 1.0)
    assert rep.mt == 2 and rep.ml == 0


def test_two_misses_give_mota_point_eight():
    gt = _single_track(10)
    rep = clear_mot(_single_track(10, present=set(range(10)) - {3, 7}), gt)
    assert rep.fn == 2 and rep.fp == 0 and rep.mota == pytest.approx(0.8)


def test_empty_output():
    gt = _single_track(6)
    rep = clear_mot({}, gt)
    assert rep.fp == 0 and rep.ids == 0 and rep.mota == 0.0
    assert rep.ml == 1 and rep.mt == 0


def test_swap_fixture_counters_and_rates():
    tracked, gt = swap_sequence()
    rep = clear_mot(tracked, gt)
    for key, value in SWAP_EXPECTED.items():
        assert getattr(rep, key) == value, key
    for key, value in SWAP_RATES.items():
        assert getattr(rep, key) == pytest.approx(value), key


def test_carry_over_beats_better_newcomer():
    # The old correspondence still clears the gate, so a better-overlapping
    # newcomer does not steal the object: no switch, one FP.
    gt = {0: _batch([BOX], ids=[1]), 1: _batch([BOX], ids=[1])}
    tracked = {0: _batch([BOX], ids=[7]), 1: _batch([[3, 0, 10, 10], BOX], ids=[7, 8])}
    rep = clear_mot(tracked, gt)
    assert rep.ids == 0 and rep.fp == 1 and rep.tp == 2


def test_tp_plus_fn_is_gt_per_frame():
    tracked, gt = swap_sequence()
    for f, matches, n_gt, _, _ in clear_mot_matches(tracked, gt):
        assert len(matches) + (n_gt - len(matches)) == len(gt[f])


def test_duplicate_ids_rejected():
    gt = {0: _batch([BOX, FAR], ids=[1, 1])}
    with pytest.raises(MetricInputError):
        clear_mot(gt, _single_track(1))
    with pytest.raises(MetricInputError):
        idf1(_single_track(1), gt)


def test_mota_needs_ground_truth():
    with pytest.raises(UndefinedMetricError):
        clear_mot({0: _batch([BOX], ids=[1])}, {})


# --- identity and detection accuracy -----------------------------------------


def test_idf1_split_at_half():
    gt = _single_track(10)
    split = {f: _batch([BOX], ids=[1 if f < 5 else 2]) for f in range(10)}
    assert idf1(split, gt) == pytest.approx(0.5)
    assert idf1(gt, gt) == 1.0


def test_idf1_matches_brute_force_on_fixture():
    tracked, gt = swap_sequence()
    assert idf1(tracked, gt) == pytest.approx(idf1_brute(tracked, gt))


def test_det_a_examples():
    gt = {f: _batch([BOX, [50, 0, 10, 10]], ids=[1, 2]) for f in range(4)}
    assert det_a(gt, gt) == 1.0
    half = {f: _batch([BOX], ids=[1]) for f in range(4)}
    assert det_a(half, gt) == pytest.approx(0.5)
    assert 0.0 < det_a(half, gt, multi_threshold=True) <= 0.5


@given(st.integers(0, 2**31 - 1))
def test_det_a_consistent_with_clear_mot(seed):
    rng = np.random.default_rng(seed)
    gt, hyp = {}, {}
    for f in range(5):
        n = int(rng.integers(0, 4))
        g = np.c_[60.0 * np.arange(n), np.zeros(n), np.full((n, 2), 30.0)]
        keep = rng.random(n) < 0.7
        h = np.r_[g[keep] + np.c_[rng.integers(-10, 11, keep.sum()), np.zeros((keep.sum(), 3))], rng.uniform(0, 200, (1, 4))]
        gt[f] = _batch(g, ids=np.arange(n))
        hyp[f] = _batch(h, ids=np.arange(len(h)))
    rep = clear_mot(hyp, gt)
    denom = rep.tp + rep.fn + rep.fp
    # Both match one-to-one at IoU >= 0.5 with maximum cardinality per frame.
    assert det_a(hyp, gt) == pytest.approx(rep.tp / denom if denom else 1.0)


def test_motp_distance_flag():
    gt = _single_track(4)
    shifted = _single_track(4, box=[0.0, 0.0, 10.0, 8.0])
    assert clear_mot(shifted, gt).motp == pytest.approx(0.8)
    assert clear_mot(shifted, gt, motp_distance=True).motp == pytest.approx(0.2)
