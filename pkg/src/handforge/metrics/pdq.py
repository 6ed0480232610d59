"""Probability-based detection quality with optimal assignment, and score sweeps."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .coco_eval import _group, evaluate, image_ious
from .geometry import Detection, GroundTruth, box_to_mask

EPS = 1e-14


def detection_probability(det: Detection, shape, geometry: str = "box") -> np.ndarray:
    """Per-pixel foreground probability of a detection, clamped to [EPS, 1 - EPS]."""
    fg = det.as_mask(shape) if geometry == "mask" else box_to_mask(det.box, shape)
    return np.where(fg, 1.0 - EPS, EPS)


def spatial_quality(p: np.ndarray, gt: GroundTruth) -> float:
    """exp(-(L_FG + L_BG)), both losses normalised by the GT pixel count."""
    gt_mask = gt.mask
    n = gt_mask.sum()
    l_fg = -np.log(p[gt_mask]).sum() / n
    outside = ~box_to_mask(gt.box, gt_mask.shape)
    fg = p > 0.5
    l_bg = -np.log1p(-p[outside & fg]).sum() / n
    return float(np.exp(-(l_fg + l_bg)))


def pairwise_pdq(det: Detection, gt: GroundTruth, geometry: str = "box") -> float:
    p = detection_probability(det, gt.mask.shape, geometry)
    if not np.any((p > 0.5) & gt.mask):
        return 0.0
    return float(np.sqrt(spatial_quality(p, gt) * float(det.score)))


def pairwise_matrix(dets, gts, geometry: str = "box") -> np.ndarray:
    return np.array([[pairwise_pdq(d, g, geometry) for g in gts] for d in dets], dtype=float).reshape(len(dets), len(gts))


@dataclass
class PdqCounts:
    total: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __iadd__(self, other: "PdqCounts"):
        self.total += other.total
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    @property
    def pdq(self) -> float:
        denom = self.tp + self.fp + self.fn
        return self.total / denom if denom else 0.0


def assign(matrix: np.ndarray) -> PdqCounts:
    """Maximum-weight one-to-one assignment; zero-quality pairs split into FP + FN."""
    n_det, n_gt = matrix.shape
    out = PdqCounts(fp=n_det, fn=n_gt)
    if n_det == 0 or n_gt == 0:
        return out
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    for r, c in zip(rows, cols):
        q = float(matrix[r, c])
        if q > 0:
            out.total += q
            out.tp += 1
            out.fp -= 1
            out.fn -= 1
    return out


def _image_ids(dets, gts, image_ids):
    if image_ids is not None:
        return list(image_ids)
    return list(dict.fromkeys([g.image_id for g in gts] + [d.image_id for d in dets]))


def pdq_counts(dets: Sequence[Detection], gts: Sequence[GroundTruth], geometry: str = "box",
               image_ids=None, workers: int = 1, matrices: Optional[Dict[int, np.ndarray]] = None) -> PdqCounts:
    by_det, by_gt = _group(dets), _group(gts)
    ids = _image_ids(dets, gts, image_ids)

    def one(i):
        if matrices is not None and i in matrices:
            return assign(matrices[i])
        return assign(pairwise_matrix(by_det.get(i, []), by_gt.get(i, []), geometry))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(one, ids))
    else:
        parts = [one(i) for i in ids]
    total = PdqCounts()
    for p in parts:  # fixed image order keeps the float sum thread-count invariant
        total += p
    return total


def pdq_score(dets: Sequence[Detection], gts: Sequence[GroundTruth], geometry: str = "box",
              image_ids=None, workers: int = 1) -> float:
    return pdq_counts(dets, gts, geometry, image_ids, workers).pdq


@dataclass
class PdqReport:
    curve: List[Tuple[float, float, Optional[float]]]  # (threshold, pdq, ap)
    pdq_max: float
    threshold_at_max: float
    ap_at_max: Optional[float]
    ap_max: Optional[float]

    def table_row(self) -> dict:
        return {"PDQ_max": self.pdq_max, "threshold": self.threshold_at_max,
                "AP_at_PDQ_max": self.ap_at_max, "AP_max": self.ap_max}

    def to_dict(self) -> dict:
        return {"curve": [list(c) for c in self.curve], **self.table_row()}


def sweep_thresholds(step: float = 0.025) -> List[float]:
    n = int(round(1.0 / step))
    if not 0 < step <= 1 or abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"step {step} must divide 1.0")
    return [i / n for i in range(n + 1)]


def threshold_sweep(dets: Sequence[Detection], gts: Sequence[GroundTruth], step: float = 0.025,
                    geometry: str = "box", image_ids=None, workers: int = 1) -> PdqReport:
    ids = _image_ids(dets, gts, image_ids)
    by_det, by_gt = _group(dets), _group(gts)
    # pairwise qualities do not depend on the threshold; filter rows instead of recomputing
    full = {i: pairwise_matrix(by_det.get(i, []), by_gt.get(i, []), geometry) for i in ids}
    full_iou = image_ious(dets, gts, geometry, ids)
    curve = []
    for t in sweep_thresholds(step):
        kept = [d for d in dets if d.score >= t]
        mats, ious = {}, {}
        for i in ids:
            rows = [k for k, d in enumerate(by_det.get(i, [])) if d.score >= t]
            mats[i] = full[i][rows]
            ious[i] = full_iou[i][rows]
        pdq = pdq_counts(kept, gts, geometry, ids, workers, mats).pdq
        ap = evaluate(kept, gts, 0.0, geometry, image_ids=ids, with_areas=False, ious=ious).ap_5095
        curve.append((t, pdq, ap))
    best = max(range(len(curve)), key=lambda k: (curve[k][1], -k))
    t, pdq_max, ap_at = curve[best]
    return PdqReport(curve, pdq_max, t, ap_at, curve[0][2])
