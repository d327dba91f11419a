from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthdet.errors import ParseError, SynthDetError
from synthdet.evaluation import (Detection, average_precision, evaluate, evaluate_openset, iou,
                                 read_decisions, read_detections)
from synthdet.openset import UNKNOWN

from oracles import iou_exact, map_oracle


def test_iou_examples():
    assert iou((3, 4, 10, 7), (3, 4, 10, 7)) == 1.0
    assert iou((0, 0, 5, 5), (5, 0, 5, 5)) == 0.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3, rel=1e-15)


boxes = st.tuples(st.integers(0, 20), st.integers(0, 20), st.integers(1, 15), st.integers(1, 15))


@given(boxes, boxes)
def test_iou_matches_exact(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(float(iou_exact(a, b)), abs=1e-15)
    assert v == iou(b, a)


def dets_from_gt(gt, score=1.0):
    return [Detection(img, c, score, box) for img, items in gt.items() for c, box in items]


def test_perfect_detector():
    gt = {"a": [(0, (1, 1, 5, 5)), (1, (10, 10, 4, 8))], "b": [(1, (0, 0, 3, 3))]}
    res = evaluate(dets_from_gt(gt), gt)
    assert res.ap == {0: 1.0, 1: 1.0} and res.mAP == 1.0
    assert (res.tp, res.fp, res.fn) == (3, 0, 0)


def test_no_detections():
    res = evaluate([], {"a": [(0, (1, 1, 5, 5))]})
    assert res.mAP == 0.0 and res.fn == 1


def test_hand_tp_fp_case():
    gt = {"a": [(0, (0, 0, 10, 10)), (0, (50, 50, 10, 10))]}
    dets = [Detection("a", 0, 0.9, (0, 0, 10, 10)), Detection("a", 0, 0.8, (20, 20, 10, 10))]
    res = evaluate(dets, gt)
    assert res.ap[0] == 0.5 and res.mAP == 0.5
    assert average_precision([True, False], 2) == 0.5


def test_unknown_image():
    with pytest.raises(SynthDetError):
        evaluate([Detection("zz", 0, 0.5, (0, 0, 1, 1))], {"a": []})


def test_greedy_skips_matched_ground_truth():
    # second detection's best box is taken, it falls back to the other GT
    gt = {"a": [(0, (0, 0, 10, 10)), (0, (2, 0, 10, 10))]}
    dets = [Detection("a", 0, 0.9, (0, 0, 10, 10)), Detection("a", 0, 0.8, (1, 0, 10, 10))]
    res = evaluate(dets, gt)
    assert res.tp == 2 and res.ap[0] == 1.0


def random_instance(rng):
    n_cat = int(rng.integers(1, 3))
    images = ["i0", "i1"][: int(rng.integers(1, 3))]
    gt = {img: [] for img in images}
    for _ in range(int(rng.integers(1, 6))):
        img = images[int(rng.integers(len(images)))]
        gt[img].append((int(rng.integers(n_cat)), tuple(int(v) for v in rng.integers([0, 0, 2, 2], [8, 8, 8, 8]))))
    dets = []
    for _ in range(int(rng.integers(0, 6))):
        img = images[int(rng.integers(len(images)))]
        box = tuple(int(v) for v in rng.integers([0, 0, 2, 2], [8, 8, 8, 8]))
        dets.append(Detection(img, int(rng.integers(n_cat)), float(rng.choice([0.2, 0.5, 0.5, 0.9])), box))
    return dets, gt


def check_against_oracle(dets, gt):
    res = evaluate(dets, gt)
    aps, m, tp, fp, fn = map_oracle([(d.image_id, d.category_id, d.score, d.bbox) for d in dets], gt)
    assert set(res.ap) == set(aps)
    for c in aps:
        assert res.ap[c] == pytest.approx(float(aps[c]), abs=1e-12)
    assert res.mAP == pytest.approx(float(m), abs=1e-12)
    assert (res.tp, res.fp, res.fn) == (tp, fp, fn)


@pytest.mark.parametrize("seed", range(50))
def test_brute_force_agreement(seed):
    check_against_oracle(*random_instance(np.random.default_rng(seed)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ap_rank_only(seed):
    dets, gt = random_instance(np.random.default_rng(seed))
    base = evaluate(dets, gt)
    warped = [Detection(d.image_id, d.category_id, d.score ** 3 / 2, d.bbox) for d in dets]
    assert evaluate(warped, gt).ap == base.ap


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lowest_false_positive_never_helps(seed):
    dets, gt = random_instance(np.random.default_rng(seed))
    img = next(iter(gt))
    fp = Detection(img, 0, 0.0, (100, 100, 3, 3))  # overlaps nothing, lowest score
    before = evaluate(dets, gt)
    after = evaluate(dets + [fp], gt)
    for c in before.ap:
        assert after.ap[c] <= before.ap[c] + 1e-15


def test_openset_rates():
    assert evaluate_openset([(0, 0), (1, 1), (UNKNOWN, UNKNOWN)]) == (1.0, 1.0)
    assert evaluate_openset([(0, UNKNOWN), (1, UNKNOWN), (UNKNOWN, UNKNOWN)]) == (0.0, 1.0)
    kar, udr = evaluate_openset([(0, 0), (1, 1), (2, UNKNOWN), (UNKNOWN, UNKNOWN), (UNKNOWN, 1)])
    assert (kar, udr) == (2 / 3, 1 / 2)
    with pytest.raises(SynthDetError):
        evaluate_openset([])


def test_detection_validation():
    with pytest.raises(SynthDetError):
        Detection("a", 0, 1.5, (0, 0, 1, 1))
    with pytest.raises(SynthDetError):
        Detection("a", 0, 0.5, (0, 0, 0, 1))


def test_detection_and_decision_files(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("img1 0 0.9 1 2 3 4\n# c\nimg2 1 0.5 0 0 1.5 1.5\n")
    dets = read_detections(p)
    assert dets[1] == Detection("img2", 1, 0.5, (0.0, 0.0, 1.5, 1.5))
    p.write_text("img1 0 0.9 1 2 3\n")
    with pytest.raises(ParseError):
        read_detections(p)
    q = tmp_path / "q.txt"
    q.write_text("0 0\nunknown unknown\n2 unknown\n")
    assert read_decisions(q) == [(0, 0), (UNKNOWN, UNKNOWN), (2, UNKNOWN)]


def test_result_table_and_json():
    gt = {"a": [(0, (1, 1, 5, 5))]}
    res = evaluate(dets_from_gt(gt), gt)
    assert "mAP" in res.table(["mug"]) and "mug" in res.table(["mug"])
    assert res.to_json()["ap"] == {"0": 1.0}
