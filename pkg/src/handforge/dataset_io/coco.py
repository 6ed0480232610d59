"""COCO-format annotation assembly and run-length mask codecs.

Segmentations use COCO's run-length encoding: counts alternate background
and foreground runs starting with background, over the mask flattened in
column-major order (the order pycocotools uses), so standard COCO readers
decode them without conversion.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from ..renderer import png_bytes

CATEGORIES = [{"id": 1, "name": "hand"}]

FRAME_RGB = re.compile(r"^(\d{6})_rgb\.png$")
FRAME_MASK = re.compile(r"^(\d{6})_mask(\d+)\.png$")


class DatasetError(Exception):
    """Malformed dataset directory or annotation content."""


def frame_name(frame_index: int, kind: str) -> str:
    return f"{frame_index:06d}_{kind}.png"


def mask_to_bbox(mask: np.ndarray) -> List[int]:
    """Tight ``[x, y, w, h]`` around the nonzero pixels."""
    ys, xs = np.nonzero(np.asarray(mask))
    if xs.size == 0:
        raise ValueError("empty mask")
    x0, y0 = int(xs.min()), int(ys.min())
    return [x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1]


def rle_encode(mask: np.ndarray) -> Dict:
    """Uncompressed COCO RLE ``{"size": [h, w], "counts": [...]}``."""
    m = np.asarray(mask) != 0
    h, w = m.shape
    flat = m.ravel(order="F").astype(np.int8)
    change = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0] == 1:
        runs = [0] + runs
    return {"size": [int(h), int(w)], "counts": [int(r) for r in runs]}


def rle_decode(rle: Dict) -> np.ndarray:
    """Decode an uncompressed (list) or compressed (string) RLE to a uint8 {0, 1} mask."""
    h, w = rle["size"]
    counts = rle["counts"]
    if isinstance(counts, (str, bytes)):
        counts = rle_counts_from_string(counts)
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() != h * w:
        raise DatasetError(f"RLE counts sum to {int(counts.sum())}, expected {h * w}")
    values = np.arange(counts.size) % 2
    flat = np.repeat(values.astype(np.uint8), counts)
    return flat.reshape((w, h)).T.copy()


def rle_counts_to_string(counts: List[int]) -> str:
    """COCO's compact ASCII form of run counts (delta + 5-bit varint)."""
    out = []
    for i, x in enumerate(counts):
        x = int(x)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


def rle_counts_from_string(s) -> List[int]:
    if isinstance(s, bytes):
        s = s.decode("ascii")
    counts: List[int] = []
    p = 0
    while p < len(s):
        x, k, more = 0, 0, True
        while more:
            c = ord(s[p]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def mask_to_polygons(mask: np.ndarray, tolerance: float = 0.0) -> List[List[float]]:
    """Lossy polygon outline of a mask (one flat x/y list per contour)."""
    from skimage import measure

    padded = np.pad(np.asarray(mask) != 0, 1).astype(np.uint8)
    polys = []
    for contour in measure.find_contours(padded, 0.5):
        if tolerance > 0:
            contour = measure.approximate_polygon(contour, tolerance)
        contour = np.flip(contour - 1.0, axis=1)
        if len(contour) < 3:
            continue
        polys.append([round(float(c), 2) for c in contour.ravel()])
    return polys


def annotation_record(ann_id: int, image_id: int, mask: np.ndarray, segmentation: str = "rle") -> Dict:
    m = np.asarray(mask) != 0
    seg = rle_encode(m) if segmentation == "rle" else mask_to_polygons(m)
    return {
        "id": ann_id,
        "image_id": image_id,
        "category_id": 1,
        "segmentation": seg,
        "bbox": mask_to_bbox(m),
        "area": int(m.sum()),
        "iscrowd": 0,
    }


def read_gray(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L"):
            return np.asarray(im).astype(np.int64)
        return np.asarray(im.convert("L") if im.mode not in ("L",) else im)


def _image_size(path: Path):
    with Image.open(path) as im:
        return im.size  # (w, h)


def dataset_frames(directory) -> Dict[int, Dict]:
    """Map frame index to its rgb/depth/mask file paths (masks sorted by k)."""
    d = Path(directory)
    frames: Dict[int, Dict] = {}
    for p in sorted(d.iterdir()):
        m = FRAME_RGB.match(p.name)
        if m:
            frames.setdefault(int(m.group(1)), {"masks": []})["rgb"] = p
    for p in sorted(d.iterdir()):
        m = FRAME_MASK.match(p.name)
        if m:
            idx = int(m.group(1))
            if idx not in frames:
                raise DatasetError(f"{p.name}: mask without matching rgb image")
            frames[idx]["masks"].append((int(m.group(2)), p))
    for idx, f in frames.items():
        f["masks"].sort()
        depth = d / frame_name(idx, "depth")
        f["depth"] = depth if depth.exists() else None
    return dict(sorted(frames.items()))


def build_coco_annotations(directory, segmentation: str = "rle") -> Dict:
    """Assemble the COCO annotation set for a dataset directory."""
    images, annotations = [], []
    ann_id = 1
    for idx, f in dataset_frames(directory).items():
        w, h = _image_size(f["rgb"])
        others = ([f["depth"]] if f["depth"] is not None else []) + [p for _, p in f["masks"]]
        for p in others:
            if _image_size(p) != (w, h):
                raise DatasetError(f"{p.name}: size {_image_size(p)} differs from rgb size {(w, h)}")
        images.append({"id": idx, "file_name": f["rgb"].name, "width": w, "height": h})
        for _, p in f["masks"]:
            mask = read_gray(p) != 0
            if not mask.any():
                continue
            annotations.append(annotation_record(ann_id, idx, mask, segmentation))
            ann_id += 1
    return {"images": images, "annotations": annotations, "categories": list(CATEGORIES)}


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(dumps(obj) + "\n", encoding="utf-8")
    return path


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_sample(sample, frame_index: int, out_dir) -> List[Path]:
    """Write rgb, depth and per-instance mask PNGs for one frame."""
    out = Path(out_dir)
    paths = [out / frame_name(frame_index, "rgb"), out / frame_name(frame_index, "depth")]
    paths[0].write_bytes(sample.rgb_png)
    paths[1].write_bytes(sample.depth_png)
    for k, mask in enumerate(sample.masks, 1):
        p = out / frame_name(frame_index, f"mask{k}")
        p.write_bytes(png_bytes(np.where(np.asarray(mask) != 0, 255, 0).astype(np.uint8)))
        paths.append(p)
    return paths


def annotation_masks(coco: Dict) -> Dict[int, List[np.ndarray]]:
    """Decoded masks grouped by image id (image order preserved)."""
    out: Dict[int, List[np.ndarray]] = {img["id"]: [] for img in coco["images"]}
    sizes = {img["id"]: (img["height"], img["width"]) for img in coco["images"]}
    for ann in coco["annotations"]:
        out[ann["image_id"]].append(decode_segmentation(ann["segmentation"], *sizes[ann["image_id"]]))
    return out


def decode_segmentation(seg, height: int, width: int) -> np.ndarray:
    if isinstance(seg, dict):
        return rle_decode(seg)
    from skimage.draw import polygon as fill_polygon

    mask = np.zeros((height, width), dtype=np.uint8)
    for poly in seg:
        xy = np.asarray(poly, dtype=float).reshape(-1, 2)
        rr, cc = fill_polygon(xy[:, 1], xy[:, 0], (height, width))
        mask[rr, cc] = 1
    return mask


COCO_SCHEMA = {
    "type": "object",
    "required": ["images", "annotations", "categories"],
    "properties": {
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "file_name", "width", "height"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "file_name": {"type": "string"},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                },
            },
        },
        "annotations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "image_id", "category_id", "segmentation", "bbox", "area", "iscrowd"],
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "image_id": {"type": "integer", "minimum": 0},
                    "category_id": {"const": 1},
                    "segmentation": {
                        "oneOf": [
                            {
                                "type": "object",
                                "required": ["size", "counts"],
                                "properties": {
                                    "size": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                                    "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                                },
                            },
                            {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                        ]
                    },
                    "bbox": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 4, "maxItems": 4},
                    "area": {"type": "integer", "minimum": 1},
                    "iscrowd": {"const": 0},
                },
            },
        },
        "categories": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "name"],
                "properties": {"id": {"type": "integer"}, "name": {"type": "string"}},
            },
        },
    },
}


def check_references(coco: Dict) -> Optional[str]:
    ids = {img["id"] for img in coco["images"]}
    bad = sorted({a["image_id"] for a in coco["annotations"]} - ids)
    return f"annotations reference unknown image ids: {bad}" if bad else None
