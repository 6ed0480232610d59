"""Detection and ground-truth records plus overlap measures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..dataset_io.coco import mask_to_bbox

GEOMETRIES = ("mask", "box")


@dataclass(eq=False)
class Detection:
    image_id: int
    score: float
    box: Optional[Sequence[float]] = None  # [x, y, w, h]
    mask: Optional[np.ndarray] = None
    label: int = 1

    def __post_init__(self):
        if not 0.0 <= float(self.score) <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.mask is not None:
            self.mask = np.asarray(self.mask) != 0
            if not self.mask.any():
                raise ValueError("empty detection mask")
        if self.box is None:
            if self.mask is None:
                raise ValueError("detection needs a box or a mask")
            self.box = tuple(float(v) for v in mask_to_bbox(self.mask))
        else:
            self.box = tuple(float(v) for v in self.box)
            if self.box[2] <= 0 or self.box[3] <= 0:
                raise ValueError(f"degenerate box {self.box}")

    def area(self, geometry: str) -> float:
        if geometry == "mask" and self.mask is not None:
            return float(self.mask.sum())
        return self.box[2] * self.box[3]

    def as_mask(self, shape) -> np.ndarray:
        if self.mask is not None:
            if self.mask.shape != tuple(shape):
                raise ValueError(f"detection mask {self.mask.shape} does not match image {tuple(shape)}")
            return self.mask
        return box_to_mask(self.box, shape)


@dataclass(eq=False)
class GroundTruth:
    image_id: int
    mask: np.ndarray
    box: tuple = field(init=False)
    area: int = field(init=False)

    def __post_init__(self):
        self.mask = np.asarray(self.mask) != 0
        self.box = tuple(float(v) for v in mask_to_bbox(self.mask))
        self.area = int(self.mask.sum())


def box_to_mask(box, shape) -> np.ndarray:
    """Pixels whose centers fall inside the half-open box."""
    h, w = shape
    x, y, bw, bh = box
    cols = np.arange(w) + 0.5
    rows = np.arange(h) + 0.5
    cx = (cols >= x) & (cols < x + bw)
    ry = (rows >= y) & (rows < y + bh)
    return ry[:, None] & cx[None, :]


def iou_box(a, b) -> float:
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def iou_mask(a, b) -> float:
    a = np.asarray(a) != 0
    b = np.asarray(b) != 0
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        raise ValueError("both masks empty")
    return np.count_nonzero(a & b) / union


def iou_matrix(dets: Sequence[Detection], gts: Sequence[GroundTruth], geometry: str = "mask") -> np.ndarray:
    out = np.zeros((len(dets), len(gts)))
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            if geometry == "mask":
                out[i, j] = iou_mask(d.as_mask(g.mask.shape), g.mask)
            else:
                out[i, j] = iou_box(d.box, g.box)
    return out
