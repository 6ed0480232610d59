import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handforge.metrics import (
    EPS,
    IOU_THRESHOLDS,
    ApConfig,
    Detection,
    GroundTruth,
    adaptive_area_thresholds,
    area_category,
    average_precision,
    evaluate,
    iou_box,
    iou_mask,
    match_detections,
    pairwise_pdq,
    pdq_counts,
    pdq_score,
    sweep_thresholds,
    threshold_sweep,
)
from handforge.metrics.geometry import iou_matrix
from handforge.metrics.pdq import assign, pairwise_matrix

from helpers import random_rect, random_scene, rect
from oracles import brute_force_assignment, oracle_ap, oracle_match


# IoU

def test_iou_box_examples():
    assert iou_box([0, 0, 10, 10], [0, 0, 10, 10]) == 1.0
    assert iou_box([0, 0, 10, 10], [20, 20, 5, 5]) == 0.0
    assert iou_box([0, 0, 10, 10], [5, 0, 10, 10]) == pytest.approx(50 / 150, abs=1e-15)


def test_iou_mask_examples():
    sq = rect(4, 4, 0, 2, 0, 2)
    assert iou_mask(sq, sq) == 1.0
    assert iou_mask(sq, rect(4, 4, 2, 4, 2, 4)) == 0.0
    assert iou_mask(sq, rect(4, 4, 0, 2, 0, 1)) == 0.5
    with pytest.raises(ValueError):
        iou_mask(sq, np.ones((4, 5)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_iou_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = random_rect(rng, 8, 8), random_rect(rng, 8, 8)
    assert iou_mask(a, b) == iou_mask(b, a)
    assert 0.0 <= iou_mask(a, b) <= 1.0
    # box IoU on the tight boxes of rectangles equals mask IoU
    da, db = Detection(0, 1.0, mask=a), Detection(0, 1.0, mask=b)
    assert iou_box(da.box, db.box) == pytest.approx(iou_mask(a, b), abs=1e-12)


def test_detection_validation():
    with pytest.raises(ValueError):
        Detection(0, 1.5, box=[0, 0, 1, 1])
    with pytest.raises(ValueError):
        Detection(0, 0.5)
    with pytest.raises(ValueError):
        Detection(0, 0.5, mask=np.zeros((3, 3)))
    gt = GroundTruth(0, rect(10, 10, 2, 5, 3, 4))
    assert gt.box == (3.0, 2.0, 1.0, 3.0) and gt.area == 3


# matching

def test_match_examples():
    g = GroundTruth(0, rect(10, 10, 0, 4, 0, 4))
    one = match_detections([Detection(0, 0.9, mask=g.mask)], [g], 0.5)
    assert (one.tp, one.fp, one.fn) == (1, 0, 0)
    dup = match_detections([Detection(0, 0.9, mask=g.mask), Detection(0, 0.8, mask=g.mask)], [g], 0.5)
    assert (dup.tp, dup.fp, dup.fn) == (1, 1, 0) and dup.det_to_gt == [0, -1]
    # 9 pixels inside a 20-pixel GT: IoU 0.45
    g = GroundTruth(0, rect(10, 10, 0, 10, 0, 2))
    low = Detection(0, 0.9, mask=rect(10, 10, 0, 9, 0, 1))
    assert iou_mask(low.mask, g.mask) == 0.45
    res = match_detections([low], [g], 0.5)
    assert (res.tp, res.fp, res.fn) == (0, 1, 1)


def test_match_equal_scores_keep_insertion_order():
    g = GroundTruth(0, rect(10, 10, 0, 4, 0, 4))
    a = Detection(0, 0.5, mask=rect(10, 10, 0, 4, 0, 3))
    b = Detection(0, 0.5, mask=g.mask)
    assert match_detections([a, b], [g], 0.5).det_to_gt == [0, -1]
    assert match_detections([b, a], [g], 0.5).det_to_gt == [0, -1]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_match_order_invariant_with_distinct_scores(seed):
    rng = np.random.default_rng(seed)
    dets, gts = random_scene(rng)
    scores = rng.permutation(len(dets)) / 10 + 0.05
    dets = [Detection(0, float(s), mask=d.mask) for d, s in zip(dets, scores)]
    perm = rng.permutation(len(dets))
    a = match_detections(dets, gts, 0.5).det_to_gt
    b = match_detections([dets[k] for k in perm], gts, 0.5).det_to_gt
    assert [a[k] for k in perm] == b


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(IOU_THRESHOLDS))
def test_match_equals_exhaustive_oracle(seed, thr):
    rng = np.random.default_rng(seed)
    dets, gts = random_scene(rng)
    ious = iou_matrix(dets, gts)
    expect = oracle_match(ious, [d.score for d in dets], thr)
    assert match_detections(dets, gts, thr).det_to_gt == expect


def test_greedy_is_not_max_cardinality():
    # the top det overlaps both GTs (0.625, 0.556) and takes g1, the only GT the second det reaches
    g1 = GroundTruth(0, rect(10, 20, 0, 10, 0, 6))
    g2 = GroundTruth(0, rect(10, 20, 0, 10, 3, 10))
    a = Detection(0, 0.9, mask=rect(10, 20, 0, 10, 1, 8))
    b = Detection(0, 0.8, mask=rect(10, 20, 0, 10, 0, 5))
    res = match_detections([a, b], [g1, g2], 0.5)
    assert res.det_to_gt == [0, -1]
    ious = iou_matrix([a, b], [g1, g2])
    assert oracle_match(ious, [0.9, 0.8], 0.5, max_tp_first=True) == [1, 0]


# AP

def test_ap_perfect():
    gts = [GroundTruth(i, rect(20, 20, 0, i + 2, 2, 9)) for i in range(6)]
    rep = evaluate([Detection(g.image_id, 1.0, mask=g.mask) for g in gts], gts)
    for v in (rep.ap_5095, rep.ap_50, rep.ap_small, rep.ap_medium, rep.ap_large, rep.ar_5095):
        assert v == 1.0


def test_ap_iou_055_gives_02():
    g = GroundTruth(0, rect(20, 20, 0, 20, 0, 11))  # 220 px
    d = Detection(0, 0.9, mask=rect(20, 20, 0, 20, 0, 20))  # IoU 220/400 = 0.55
    assert iou_mask(d.mask, g.mask) == 0.55
    rep = evaluate([d], [g], with_areas=False)
    assert rep.ap_5095 == pytest.approx(0.2, abs=1e-15)
    assert rep.ap_50 == 1.0


def test_ap_duplicate_detection():
    g = GroundTruth(0, rect(20, 20, 0, 10, 0, 10))
    dup = rect(20, 20, 0, 9, 0, 10)  # IoU 0.9
    rep = evaluate([Detection(0, 0.9, mask=g.mask), Detection(0, 0.8, mask=dup)], [g], with_areas=False)
    assert rep.ap_50 == 1.0


def test_ap_no_gts_is_undefined():
    rep = evaluate([Detection(0, 0.5, box=[0, 0, 2, 2])], [], geometry="box")
    assert rep.ap_5095 is None and rep.ar_5095 is None and rep.area_thresholds is None


def test_ap_no_detections():
    rep = evaluate([], [GroundTruth(0, rect(5, 5, 0, 2, 0, 2))], with_areas=False)
    assert rep.ap_5095 == 0.0 and rep.ar_5095 == 0.0


def test_area_range_ignores_outside_gts():
    small = GroundTruth(0, rect(20, 20, 0, 2, 0, 2))
    large = GroundTruth(0, rect(20, 20, 5, 20, 5, 20))
    dets = [Detection(0, 0.9, mask=large.mask)]
    aps, _ = average_precision(dets, [small, large], ApConfig(area_range=(100, float("inf"))))
    assert aps == [1.0] * 10
    aps, _ = average_precision(dets, [small, large], ApConfig(area_range=(0, 100)))
    assert aps == [0.0] * 10


def test_score_min_filter():
    g = GroundTruth(0, rect(5, 5, 0, 2, 0, 2))
    assert evaluate([Detection(0, 0.05, mask=g.mask)], [g], score_min=0.1, with_areas=False).ap_5095 == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ap_matches_oracle_multi_image(seed):
    rng = np.random.default_rng(seed)
    dets, gts, images = [], [], []
    for i in range(rng.integers(1, 4)):
        d, g = random_scene(rng, image_id=i)
        dets += d
        gts += g
        images.append((iou_matrix(d, g), [x.score for x in d]))
    rep = evaluate(dets, gts, with_areas=False)
    ap, ar = oracle_ap(images, IOU_THRESHOLDS)
    assert rep.ap_5095 == pytest.approx(ap, abs=1e-9)
    assert rep.ar_5095 == pytest.approx(ar, abs=1e-9)


def _coco_pair(dets, gts, h, w):
    ids = sorted({g.image_id for g in gts} | {d.image_id for d in dets})
    gt = {"images": [{"id": i, "width": w, "height": h} for i in ids], "categories": [{"id": 1, "name": "hand"}],
          "annotations": [{"id": k + 1, "image_id": g.image_id, "category_id": 1, "bbox": list(g.box),
                           "area": float(g.box[2] * g.box[3]), "iscrowd": 0} for k, g in enumerate(gts)]}
    res = [{"image_id": d.image_id, "category_id": 1, "bbox": list(d.box), "score": d.score} for d in dets]
    return gt, res


@pytest.mark.parametrize("seed", range(10))
def test_ap_agrees_with_pycocotools(seed):
    pytest.importorskip("pycocotools")
    from pycocotools.coco import COCO
    from pycocotools.cocoeval import COCOeval

    rng = np.random.default_rng(seed)
    dets, gts = [], []
    for i in range(20):
        # continuous boxes and distinct scores keep IoU and score ties out of the picture
        for _ in range(rng.integers(1, 4)):
            x, y = rng.uniform(0, 60, 2)
            m = rect(100, 100, int(y), int(y) + int(rng.integers(5, 30)), int(x), int(x) + int(rng.integers(5, 30)))
            gts.append(GroundTruth(i, m))
        for g in [g for g in gts if g.image_id == i]:
            if rng.random() < 0.8:
                jitter = rng.normal(0, 2.0, 4)
                box = [g.box[0] + jitter[0], g.box[1] + jitter[1], g.box[2] + abs(jitter[2]), g.box[3] + abs(jitter[3])]
                dets.append(Detection(i, float(rng.uniform(0.01, 1.0)), box=box))
        dets.append(Detection(i, float(rng.uniform(0.01, 1.0)), box=list(rng.uniform(1, 60, 4))))
    ours = evaluate(dets, gts, geometry="box", with_areas=False)

    gt_json, res = _coco_pair(dets, gts, 100, 100)
    coco = COCO()
    coco.dataset = gt_json
    coco.createIndex()
    ev = COCOeval(coco, coco.loadRes(res), "bbox")
    ev.params.areaRng = [[0, 1e10]]
    ev.params.areaRngLbl = ["all"]
    ev.evaluate()
    ev.accumulate()
    prec = ev.eval["precision"][:, :, 0, 0, -1]
    rec = ev.eval["recall"][:, 0, 0, -1]
    assert ours.ap_5095 == pytest.approx(prec.mean(), abs=1e-9)
    assert ours.ap_50 == pytest.approx(prec[0].mean(), abs=1e-9)
    assert ours.ar_5095 == pytest.approx(rec.mean(), abs=1e-9)


# adaptive area categories

def test_area_thresholds_one_to_nine():
    t = adaptive_area_thresholds(range(1, 10))
    groups = {}
    for a in range(1, 10):
        groups.setdefault(area_category(a, t), []).append(a)
    assert groups == {"small": [1, 2, 3], "medium": [4, 5, 6], "large": [7, 8, 9]}


def test_area_thresholds_degenerate_warns(caplog):
    with caplog.at_level(logging.WARNING):
        t = adaptive_area_thresholds([50] * 7)
    assert "degenerate" in caplog.text
    assert {area_category(50, t)} == {"large"}


def test_area_thresholds_too_few():
    with pytest.raises(ValueError):
        adaptive_area_thresholds([1, 2])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 10**6), min_size=3, max_size=400, unique=True))
def test_area_categories_balanced(areas):
    t = adaptive_area_thresholds(areas)
    counts = [sum(area_category(a, t) == c for a in areas) for c in ("small", "medium", "large")]
    assert sum(counts) == len(areas)
    assert max(counts) - min(counts) <= 1


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=3, max_size=200))
def test_area_thresholds_match_linear_percentile(areas):
    t1, t2 = adaptive_area_thresholds(areas)
    assert t1 == pytest.approx(np.percentile(areas, 100 / 3), rel=1e-12, abs=1e-9)
    assert t2 == pytest.approx(np.percentile(areas, 200 / 3), rel=1e-12, abs=1e-9)


# PDQ

def test_pairwise_pdq_examples():
    g = GroundTruth(0, rect(20, 20, 5, 10, 5, 12))
    assert pairwise_pdq(Detection(0, 1.0, box=g.box), g) == pytest.approx(1.0, abs=1e-9)
    assert pairwise_pdq(Detection(0, 1.0, box=[15, 15, 3, 3]), g) == 0.0
    assert pairwise_pdq(Detection(0, 0.25, box=g.box), g) == pytest.approx(0.5, abs=1e-9)


def test_pairwise_pdq_penalises_spill():
    g = GroundTruth(0, rect(20, 20, 5, 10, 5, 10))
    loose = Detection(0, 1.0, box=[5, 5, 6, 5])  # one column outside the GT box
    q = pairwise_pdq(loose, g)
    # 25 GT pixels at -ln(1 - EPS) plus 5 spill pixels at -ln(1 - (1 - EPS)), over 25 GT pixels
    loss = (25 * -math.log(1 - EPS) + 5 * -math.log1p(-(1 - EPS))) / 25
    assert q == pytest.approx(math.sqrt(math.exp(-loss)), rel=1e-12)


def test_pdq_score_examples():
    g = GroundTruth(0, rect(20, 20, 0, 5, 0, 5))
    assert pdq_score([], [g]) == 0.0
    perfect = Detection(0, 1.0, box=g.box)
    fp = Detection(0, 1.0, box=[12, 12, 4, 4])
    assert pdq_score([perfect, fp], [g]) == pytest.approx(0.5, abs=1e-12)
    g2 = GroundTruth(0, rect(20, 20, 10, 15, 10, 15))
    assert pdq_score([perfect, Detection(0, 1.0, box=g2.box)], [g, g2]) == pytest.approx(1.0, abs=1e-9)


def test_zero_quality_pair_splits():
    c = assign(np.array([[0.0]]))
    assert (c.tp, c.fp, c.fn, c.total) == (0, 1, 1, 0.0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 4), st.integers(0, 4))
def test_assignment_matches_brute_force(seed, n_det, n_gt):
    rng = np.random.default_rng(seed)
    m = rng.random((n_det, n_gt)) * (rng.random((n_det, n_gt)) < 0.7)
    c = assign(m)
    assert c.total == pytest.approx(brute_force_assignment(m), abs=1e-9)
    assert c.tp + c.fn == n_gt and c.tp + c.fp == n_det


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pdq_bounded_and_thread_invariant(seed):
    rng = np.random.default_rng(seed)
    dets, gts = [], []
    for i in range(3):
        d, g = random_scene(rng, image_id=i, h=10, w=10, max_dets=4, max_gts=4)
        dets += d
        gts += g
    a = pdq_counts(dets, gts, "box")
    b = pdq_counts(dets, gts, "box", workers=3)
    assert 0.0 <= a.pdq <= 1.0
    assert a == b
    assert 0.0 <= pdq_score(dets, gts, "mask") <= 1.0


def test_pdq_mask_geometry():
    g = GroundTruth(0, rect(10, 10, 2, 6, 2, 6))
    assert pairwise_pdq(Detection(0, 1.0, mask=g.mask), g, geometry="mask") == pytest.approx(1.0, abs=1e-9)
    m = pairwise_matrix([Detection(0, 1.0, mask=g.mask)], [g], "mask")
    assert m.shape == (1, 1)


# sweep

def test_sweep_thresholds():
    ts = sweep_thresholds(0.025)
    assert len(ts) == 41 and ts[0] == 0.0 and ts[-1] == 1.0
    assert all(a < b for a, b in zip(ts, ts[1:]))
    with pytest.raises(ValueError):
        sweep_thresholds(0.3)


def test_sweep_tp_and_low_fp():
    g = GroundTruth(0, rect(20, 20, 0, 5, 0, 5))
    tp = Detection(0, 0.9, box=g.box)
    fp = Detection(0, 0.3, box=[12, 12, 4, 4])
    rep = threshold_sweep([tp, fp], [g])
    curve = {t: p for t, p, _ in rep.curve}
    q = math.sqrt(0.9)  # label quality is the score
    assert curve[0.0] == pytest.approx(q / 2, abs=1e-12)
    assert curve[0.5] == pytest.approx(q, abs=1e-12)
    assert curve[0.925] == 0.0
    # every threshold in (0.3, 0.9] ties at the max; the lowest wins
    assert rep.threshold_at_max == 0.325 and rep.pdq_max == pytest.approx(q, abs=1e-12)
    assert set(rep.table_row()) == {"PDQ_max", "threshold", "AP_at_PDQ_max", "AP_max"}


def test_sweep_empty_detections():
    g = GroundTruth(0, rect(20, 20, 0, 5, 0, 5))
    rep = threshold_sweep([], [g])
    assert len(rep.curve) == 41 and rep.pdq_max == 0.0 and rep.threshold_at_max == 0.0
    assert rep.ap_max == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sweep_properties(seed):
    rng = np.random.default_rng(seed)
    dets, gts = [], []
    for i in range(3):
        d, g = random_scene(rng, image_id=i, h=8, w=8)
        dets += d
        gts += g
    rep = threshold_sweep(dets, gts, step=0.1)
    aps = [a for _, _, a in rep.curve]
    assert all(x >= y - 1e-12 for x, y in zip(aps, aps[1:]))
    assert rep.curve[0][1] == pdq_score(dets, gts)
    assert rep.curve[0][2] == evaluate(dets, gts, geometry="box", with_areas=False).ap_5095
    assert all(0.0 <= p <= 1.0 for _, p, _ in rep.curve)
