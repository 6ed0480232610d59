"""Reading ground truth and detection JSON; writing reports."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..dataset_io.coco import DatasetError, decode_segmentation, dumps, load_json, rle_decode
from .geometry import Detection, GroundTruth


class UnknownImageError(DatasetError):
    def __init__(self, image_ids: Sequence[int]):
        self.image_ids = sorted(set(image_ids))
        super().__init__(f"detections reference unknown image ids: {self.image_ids}")


def load_ground_truth(coco: Dict) -> Tuple[List[GroundTruth], List[int], Dict[int, Tuple[int, int]]]:
    """GT records, the image id order, and per-image (height, width)."""
    sizes = {img["id"]: (img["height"], img["width"]) for img in coco["images"]}
    gts = [GroundTruth(a["image_id"], decode_segmentation(a["segmentation"], *sizes[a["image_id"]]))
           for a in coco["annotations"]]
    return gts, [img["id"] for img in coco["images"]], sizes


def load_detections(records: List[Dict], sizes: Dict[int, Tuple[int, int]]) -> List[Detection]:
    bad = sorted({r["image_id"] for r in records if r["image_id"] not in sizes})
    if bad:
        raise UnknownImageError(bad)
    out = []
    for r in records:
        mask = None
        if "segmentation" in r and isinstance(r["segmentation"], dict):
            mask = rle_decode(r["segmentation"])
            if mask.shape != sizes[r["image_id"]]:
                raise DatasetError(f"detection mask size {mask.shape} differs from image {r['image_id']}")
        box = r.get("bbox")
        if mask is None and box is None:
            raise DatasetError(f"detection on image {r['image_id']} has neither bbox nor RLE segmentation")
        if mask is not None and not mask.any():
            continue
        out.append(Detection(r["image_id"], float(r["score"]), box=box, mask=mask, label=r.get("category_id", 1)))
    return out


def to_box_mode(dets: Sequence[Detection]) -> List[Detection]:
    """Drop masks so every detection is represented by its (possibly mask-derived) box."""
    return [Detection(d.image_id, d.score, box=d.box, label=d.label) for d in dets]


def load_pair(gt_path, det_path):
    coco = load_json(gt_path)
    gts, ids, sizes = load_ground_truth(coco)
    dets = load_detections(load_json(det_path), sizes)
    return gts, dets, ids


def write_report_json(report: Dict, path) -> Path:
    path = Path(path)
    path.write_text(dumps(report) + "\n", encoding="utf-8")
    return path


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def write_key_value_csv(report: Dict, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in report.items():
            if isinstance(v, (list, tuple)):
                v = " ".join(_num(x) for x in v)
            w.writerow([k, _num(v) if isinstance(v, (float, np.floating)) or v is None else v])
    return path


def write_curve_csv(curve, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "pdq", "ap_5095"])
        for t, pdq, ap in curve:
            w.writerow([_num(t), _num(pdq), _num(ap)])
    return path


def write_table_csv(row: Dict, path) -> Path:
    """One header line and one value line, columns in dict order."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([_num(v) for v in row.values()])
    return path
