"""COCO-protocol average precision and recall.

Matching, accumulation and 101-point interpolation follow the public COCO
evaluation procedure. Area categories come from the data (tercile
thresholds on ground-truth areas) rather than COCO's fixed 32**2 / 96**2.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Detection, GroundTruth, iou_matrix

log = logging.getLogger(__name__)

IOU_THRESHOLDS = tuple(float(np.round(0.5 + 0.05 * i, 2)) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
ALL_AREAS = (0.0, float("inf"))


@dataclass
class MatchResult:
    det_to_gt: List[int]  # -1 when unmatched, in input order
    det_ignored: List[bool]
    tp: int
    fp: int
    fn: int


@dataclass
class ApConfig:
    iou_set: Tuple[float, ...] = IOU_THRESHOLDS
    area_range: Tuple[float, float] = ALL_AREAS
    max_dets: int = 100
    score_min: float = 0.0
    geometry: str = "mask"


@dataclass
class ApReport:
    ap_5095: Optional[float]
    ap_50: Optional[float]
    ap_small: Optional[float]
    ap_medium: Optional[float]
    ap_large: Optional[float]
    ar_5095: Optional[float]
    area_thresholds: Optional[Tuple[float, float]]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["area_thresholds"] = None if self.area_thresholds is None else list(self.area_thresholds)
        return d


def score_order(scores: Sequence[float]) -> np.ndarray:
    """Descending score; equal scores keep insertion order."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def _greedy(ious: np.ndarray, order, gt_ignore: np.ndarray, threshold: float):
    n_det, n_gt = ious.shape
    gt_taken = np.zeros(n_gt, dtype=bool)
    det_to_gt = np.full(n_det, -1, dtype=np.int64)
    # a det prefers any eligible counted GT over an ignored one
    for d in order:
        best = -1
        for pool in (~gt_ignore, gt_ignore):
            cand = np.nonzero(pool & ~gt_taken & (ious[d] >= threshold))[0]
            if cand.size:
                best = int(cand[np.argmax(ious[d, cand])])  # argmax: first of ties
                break
        if best >= 0:
            gt_taken[best] = True
            det_to_gt[d] = best
    return det_to_gt


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_threshold: float,
                     geometry: str = "mask") -> MatchResult:
    """Greedy score-ordered matching on one image."""
    ious = iou_matrix(dets, gts, geometry)
    order = score_order([d.score for d in dets])
    m = _greedy(ious, order, np.zeros(len(gts), dtype=bool), iou_threshold)
    tp = int((m >= 0).sum())
    return MatchResult(m.tolist(), [False] * len(dets), tp, len(dets) - tp, len(gts) - tp)


def _group(items, key="image_id") -> Dict[int, list]:
    out: Dict[int, list] = OrderedDict()
    for it in items:
        out.setdefault(getattr(it, key), []).append(it)
    return out


@dataclass
class _ImageEval:
    scores: np.ndarray  # kept detections, score order
    matched: np.ndarray  # (T, D) bool
    ignored: np.ndarray  # (T, D) bool
    n_gt: int


def _evaluate_image(dets, gts, cfg: ApConfig, ious: Optional[np.ndarray] = None) -> _ImageEval:
    order = score_order([d.score for d in dets])[: cfg.max_dets]
    lo, hi = cfg.area_range
    gt_ignore = np.array([not (lo <= g.area < hi) for g in gts], dtype=bool)
    det_out = np.array([not (lo <= d.area(cfg.geometry) < hi) for d in dets], dtype=bool)
    if ious is None:
        ious = iou_matrix(dets, gts, cfg.geometry)
    T, D = len(cfg.iou_set), order.size
    matched = np.zeros((T, D), dtype=bool)
    ignored = np.zeros((T, D), dtype=bool)
    gi = np.append(gt_ignore, False)  # index -1 (unmatched) reads the pad
    for t, thr in enumerate(cfg.iou_set):
        # COCO's 1 - 1e-10 cap keeps threshold 1.0 attainable for float-identical overlaps
        m = _greedy(ious, order, gt_ignore, min(thr, 1 - 1e-10))[order]
        hit = m >= 0
        matched[t] = hit & ~gi[m]
        ignored[t] = (hit & gi[m]) | (~hit & det_out[order])
    scores = np.array([dets[i].score for i in order], dtype=float)
    return _ImageEval(scores, matched, ignored, int((~gt_ignore).sum()))


def _accumulate(evals: List[_ImageEval], n_thr: int):
    """Per-threshold (AP, max recall); None when there are no counted GTs."""
    n_gt = sum(e.n_gt for e in evals)
    if n_gt == 0:
        return [None] * n_thr, [None] * n_thr
    if evals:
        scores = np.concatenate([e.scores for e in evals])
        matched = np.concatenate([e.matched for e in evals], axis=1)
        ignored = np.concatenate([e.ignored for e in evals], axis=1)
    else:
        scores, matched, ignored = np.zeros(0), np.zeros((n_thr, 0), bool), np.zeros((n_thr, 0), bool)
    order = score_order(scores)
    aps, ars = [], []
    for t in range(n_thr):
        keep = ~ignored[t, order]
        tp = np.cumsum(matched[t, order][keep]).astype(float)
        fp = np.cumsum(~matched[t, order][keep]).astype(float)
        if tp.size == 0:
            aps.append(0.0)
            ars.append(0.0)
            continue
        rc = tp / n_gt
        pr = tp / (tp + fp)
        pr = np.maximum.accumulate(pr[::-1])[::-1]
        idx = np.searchsorted(rc, RECALL_POINTS, side="left")
        q = np.where(idx < pr.size, pr[np.minimum(idx, pr.size - 1)], 0.0)
        aps.append(float(q.mean()))
        ars.append(float(rc[-1]))
    return aps, ars


def _mean(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _filtered(dets, score_min):
    return [d for d in dets if d.score >= score_min]


def image_ious(dets: Sequence[Detection], gts: Sequence[GroundTruth], geometry: str = "mask",
               image_ids: Optional[Sequence[int]] = None) -> Dict[int, np.ndarray]:
    """Per-image IoU matrices, rows in the per-image order of ``dets``."""
    by_det, by_gt = _group(dets), _group(gts)
    ids = _ids(by_det, by_gt, image_ids)
    return {i: iou_matrix(by_det.get(i, []), by_gt.get(i, []), geometry) for i in ids}


def _ids(by_det, by_gt, image_ids):
    if image_ids is not None:
        return list(image_ids)
    return list(dict.fromkeys(list(by_gt) + list(by_det)))


def average_precision(dets: Sequence[Detection], gts: Sequence[GroundTruth], config: ApConfig = ApConfig(),
                      image_ids: Optional[Sequence[int]] = None, ious: Optional[Dict[int, np.ndarray]] = None):
    """Per-threshold AP and max recall lists for one area range.

    ``ious`` may supply precomputed matrices; they must match the per-image
    order of ``dets`` after score filtering.
    """
    dets = _filtered(dets, config.score_min)
    by_det, by_gt = _group(dets), _group(gts)
    ids = _ids(by_det, by_gt, image_ids)
    evals = [_evaluate_image(by_det.get(i, []), by_gt.get(i, []), config,
                             None if ious is None else ious[i]) for i in ids]
    return _accumulate(evals, len(config.iou_set))


def adaptive_area_thresholds(gt_areas: Sequence[float]) -> Tuple[float, float]:
    """Tercile thresholds with linear interpolation between order statistics.

    Interpolation positions are computed with integer arithmetic so that a
    threshold landing exactly on a sample equals that sample.
    """
    a = np.sort(np.asarray(gt_areas, dtype=float))
    n = a.size
    if n < 3:
        raise ValueError(f"need at least 3 areas, got {n}")
    out = []
    for j in (1, 2):
        i, rem = divmod((n - 1) * j, 3)
        t = a[i] if rem == 0 else a[i] + (rem / 3.0) * (a[i + 1] - a[i])
        out.append(float(t))
    t1, t2 = out
    if t1 == t2 or t1 == a[0]:
        log.warning("degenerate area thresholds (%g, %g): categories are uneven", t1, t2)
    return t1, t2


def area_category(area: float, thresholds: Tuple[float, float]) -> str:
    t1, t2 = thresholds
    if area < t1:
        return "small"
    return "medium" if area < t2 else "large"


def evaluate(dets: Sequence[Detection], gts: Sequence[GroundTruth], score_min: float = 0.0,
             geometry: str = "mask", max_dets: int = 100, image_ids: Optional[Sequence[int]] = None,
             area_thresholds: Optional[Tuple[float, float]] = None, with_areas: bool = True,
             ious: Optional[Dict[int, np.ndarray]] = None) -> ApReport:
    dets = _filtered(dets, score_min)
    if ious is None:
        ious = image_ious(dets, gts, geometry, image_ids)
    base = ApConfig(geometry=geometry, max_dets=max_dets)
    ap, ar = average_precision(dets, gts, base, image_ids, ious)
    if not with_areas:
        area_thresholds = None
    elif area_thresholds is None and len(gts) >= 3:
        area_thresholds = adaptive_area_thresholds([g.area for g in gts])
    by_area = {}
    if area_thresholds is not None:
        t1, t2 = area_thresholds
        for name, rng in (("small", (0.0, t1)), ("medium", (t1, t2)), ("large", (t2, float("inf")))):
            cfg = ApConfig(geometry=geometry, max_dets=max_dets, area_range=rng)
            by_area[name] = _mean(average_precision(dets, gts, cfg, image_ids, ious)[0])
    return ApReport(
        ap_5095=_mean(ap),
        ap_50=ap[0],
        ap_small=by_area.get("small"),
        ap_medium=by_area.get("medium"),
        ap_large=by_area.get("large"),
        ar_5095=_mean(ar),
        area_thresholds=area_thresholds,
    )
