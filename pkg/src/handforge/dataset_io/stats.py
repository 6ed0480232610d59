"""Dataset statistics: instances per image, centroid heatmap, area histogram."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
from PIL import Image

from .coco import decode_segmentation

HEATMAP_GRID = (32, 26)  # columns x rows


@dataclass(eq=False)
class DatasetStats:
    instance_count_histogram: Dict[int, int]
    centroid_heatmap: np.ndarray  # (rows, cols)
    area_histogram: np.ndarray
    area_bin_edges: np.ndarray

    @property
    def image_count(self) -> int:
        return sum(self.instance_count_histogram.values())

    @property
    def instance_count(self) -> int:
        return sum(k * v for k, v in self.instance_count_histogram.items())

    def heatmap_coverage(self) -> float:
        return float(np.count_nonzero(self.centroid_heatmap)) / self.centroid_heatmap.size


def mask_centroid(mask: np.ndarray):
    """Mean pixel-center coordinate (x, y) of the nonzero pixels."""
    ys, xs = np.nonzero(mask)
    return float(xs.mean() + 0.5), float(ys.mean() + 0.5)


def centroid_bin(x: float, y: float, width: int, height: int, grid=HEATMAP_GRID):
    cols, rows = grid
    col = min(int(x / width * cols), cols - 1)
    row = min(int(y / height * rows), rows - 1)
    return row, col


def compute_dataset_stats(coco: Dict, grid=HEATMAP_GRID, area_bins: Optional[Sequence[float]] = None,
                          max_instances: int = 2) -> DatasetStats:
    cols, rows = grid
    heat = np.zeros((rows, cols), dtype=np.int64)
    per_image = {img["id"]: 0 for img in coco["images"]}
    sizes = {img["id"]: (img["width"], img["height"]) for img in coco["images"]}
    areas = []
    for ann in coco["annotations"]:
        per_image[ann["image_id"]] += 1
        areas.append(ann["area"])
        w, h = sizes[ann["image_id"]]
        mask = decode_segmentation(ann["segmentation"], h, w)
        if not mask.any():
            continue
        r, c = centroid_bin(*mask_centroid(mask), w, h, grid)
        heat[r, c] += 1
    top = max([max_instances] + list(per_image.values()))
    hist = {k: 0 for k in range(top + 1)}
    for n in per_image.values():
        hist[n] += 1
    if area_bins is None:
        if sizes:
            w, h = next(iter(sizes.values()))
            area_bins = np.linspace(0, w * h, 33)
        else:
            area_bins = np.linspace(0, 1, 33)
    counts, edges = np.histogram(np.asarray(areas, dtype=float), bins=np.asarray(area_bins, dtype=float))
    return DatasetStats(hist, heat, counts, edges)


def write_stats(stats: DatasetStats, out_dir, prefix: str = "stats") -> list:
    """CSV tables plus a grayscale heatmap PNG (10x nearest-neighbour upscale)."""
    out = Path(out_dir)
    paths = [out / f"{prefix}_instances.csv", out / f"{prefix}_centroids.csv",
             out / f"{prefix}_areas.csv", out / f"{prefix}_centroid_heatmap.png"]
    with open(paths[0], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instances", "images"])
        for k, v in sorted(stats.instance_count_histogram.items()):
            w.writerow([k, v])
    with open(paths[1], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "count"])
        for (r, c), v in np.ndenumerate(stats.centroid_heatmap):
            w.writerow([r, c, int(v)])
    with open(paths[2], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["area_min", "area_max", "count"])
        for lo, hi, v in zip(stats.area_bin_edges[:-1], stats.area_bin_edges[1:], stats.area_histogram):
            w.writerow([f"{lo:g}", f"{hi:g}", int(v)])
    heat = stats.centroid_heatmap.astype(float)
    peak = heat.max()
    img = np.zeros(heat.shape, dtype=np.uint8) if peak == 0 else np.floor(heat / peak * 255 + 0.5).astype(np.uint8)
    Image.fromarray(np.kron(img, np.ones((10, 10), dtype=np.uint8))).save(paths[3], format="PNG")
    return paths
