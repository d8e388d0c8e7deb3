import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbc.metrics import GroundTruth, evaluate

DATA = Path(__file__).parent / "data"


def _gt(rows, T):
    return GroundTruth.from_rows(rows, T)


def test_perfect_tracks():
    gt = GroundTruth.from_mot_csv(DATA / "perfect_gt.csv")
    hyp = GroundTruth.from_mot_csv(DATA / "perfect_tracks.csv", gt.T)
    r = evaluate(hyp, gt, 1.0)
    assert (r.MOTA, r.IDF1, r.MOTP, r.FP, r.FN, r.IDS, r.FM, r.MT) == (1.0, 1.0, 0.0, 0, 0, 0, 0, 2)


def test_swap_fixture_hand_values():
    gt = GroundTruth.from_mot_csv(DATA / "swap_gt.csv")
    hyp = GroundTruth.from_mot_csv(DATA / "swap_tracks.csv", gt.T)
    r = evaluate(hyp, gt, 1.0)
    assert (r.FP, r.FN, r.IDS, r.FM, r.MT, r.PT, r.ML) == (0, 1, 1, 1, 2, 0, 0)
    assert r.MOTA == pytest.approx(0.8, abs=1e-12)
    assert r.IDF1 == pytest.approx(14 / 19, abs=1e-12)
    assert r.RCLL == pytest.approx(0.9) and r.PRCN == 1.0


def test_false_positive_and_threshold():
    gt = _gt([(0, 1, 0.0, 0.0), (1, 1, 1.0, 0.0)], 2)
    hyp = _gt([(0, 5, 0.5, 0.0), (1, 5, 1.0, 3.0)], 2)
    r = evaluate(hyp, gt, 1.0)
    assert (r.FP, r.FN, r.IDS) == (1, 1, 0)
    assert r.MOTP == pytest.approx(0.5)
    r2 = evaluate(hyp, gt, 5.0)
    assert (r2.FP, r2.FN) == (0, 0)


def test_swap_between_two_tracks_counts_two_switches():
    gt = _gt([(t, 1, float(t), 0.0) for t in range(4)] + [(t, 2, float(t), 10.0) for t in range(4)], 4)
    hyp = _gt([(t, 7 if t < 2 else 8, float(t), 0.0) for t in range(4)]
              + [(t, 8 if t < 2 else 7, float(t), 10.0) for t in range(4)], 4)
    r = evaluate(hyp, gt, 1.0)
    assert r.IDS == 2 and r.FP == 0 and r.FN == 0
    assert r.MOTA == pytest.approx(1 - 2 / 8)
    assert r.IDF1 == pytest.approx(0.5)


def test_iou_mode():
    gt = _gt([(0, 1, 5.0, 5.0, (4.0, 4.0, 2.0, 2.0))], 1)
    hyp = _gt([(0, 3, 5.5, 5.0, (4.5, 4.0, 2.0, 2.0))], 1)
    r = evaluate(hyp, gt, mode="iou")
    assert r.FP == 0 and r.MOTP == pytest.approx(3 / 5)
    assert evaluate(hyp, gt, 0.7, mode="iou").FP == 1


def test_point_mode_needs_threshold():
    gt = _gt([(0, 1, 0.0, 0.0)], 1)
    with pytest.raises(ValueError):
        evaluate(gt, gt)
    with pytest.raises(ValueError):
        GroundTruth.from_rows([(0, 1, 0, 0), (0, 1, 1, 1)])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.tuples(st.integers(1, 5), st.integers(0, 30), st.integers(0, 30)),
                         max_size=4, unique_by=lambda r: r[0]), min_size=1, max_size=6))
def test_self_evaluation_is_perfect(frames):
    rows = [(t, i, float(x), float(y)) for t, objs in enumerate(frames) for i, x, y in objs]
    gt = _gt(rows, len(frames))
    r = evaluate(gt, gt, 0.5)
    if gt.n_objects():
        assert r.MOTA == 1.0 and r.IDF1 == 1.0 and r.FP == r.FN == r.IDS == 0
    else:
        assert math.isnan(r.MOTA)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.tuples(st.integers(1, 3), st.integers(0, 8), st.integers(0, 8)),
                         max_size=3, unique_by=lambda r: r[0]), min_size=1, max_size=5),
       st.lists(st.lists(st.tuples(st.integers(1, 3), st.integers(0, 8), st.integers(0, 8)),
                         max_size=3, unique_by=lambda r: r[0]), min_size=1, max_size=5))
def test_count_identities(gframes, hframes):
    T = max(len(gframes), len(hframes))
    gt = _gt([(t, i, float(x), float(y)) for t, o in enumerate(gframes) for i, x, y in o], T)
    hyp = _gt([(t, i, float(x), float(y)) for t, o in enumerate(hframes) for i, x, y in o], T)
    r = evaluate(hyp, gt, 2.0)
    matches = round(r.RCLL * gt.n_objects()) if gt.n_objects() else 0
    assert matches + r.FN == gt.n_objects()
    assert matches + r.FP == hyp.n_objects()
    assert r.MT + r.PT + r.ML == r.GT
    assert 0.0 <= (r.IDF1 if not math.isnan(r.IDF1) else 0.0) <= 1.0
