"""External-dataset adaptation and real depth preprocessing.

Normalized input layout, one set of files per frame stem::

    <stem>_rgb.png          optional color image
    <stem>_depth.npy        metric depth in meters (0 = no return), or
    <stem>_depth_mm.png     16-bit depth in millimeters, or
    <stem>_depth.png        8-bit depth already encoded over [near, far]
    <stem>_mask<k>.png      raw label map for instance k (8 or 16 bit)

Output uses the generated-dataset layout, so adapting an adapted directory
again reproduces it.
"""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from ..renderer import encode_depth, png_bytes
from .coco import build_coco_annotations, frame_name, load_json, read_gray, write_json

log = logging.getLogger(__name__)

MASK_RULES = ("binarize", "keep_categories", "identity")
_FILE = re.compile(r"^(?P<stem>.+?)_(?P<kind>rgb|depth|depth_mm|mask(?P<k>\d+))\.(?P<ext>png|npy)$")


@dataclass(frozen=True)
class AdapterSpec:
    mask_rule: str = "binarize"
    threshold: int = 0
    categories: Tuple[int, ...] = ()
    known_labels: Optional[Tuple[int, ...]] = None
    near: float = 0.2
    far: float = 1.0
    truncate_beyond_far: bool = True
    missing_value: int = 255
    instance_merge: bool = True

    def __post_init__(self):
        if self.mask_rule not in MASK_RULES:
            raise ValueError(f"mask_rule must be one of {MASK_RULES}")
        if not self.near < self.far:
            raise ValueError("near must be below far")
        object.__setattr__(self, "categories", tuple(int(c) for c in self.categories))
        if self.known_labels is not None:
            object.__setattr__(self, "known_labels", tuple(int(c) for c in self.known_labels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["categories"] = list(self.categories)
        d["known_labels"] = None if self.known_labels is None else list(self.known_labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdapterSpec":
        d = dict(d)
        if "categories" in d:
            d["categories"] = tuple(d["categories"])
        if d.get("known_labels") is not None:
            d["known_labels"] = tuple(d["known_labels"])
        return cls(**d)


def apply_mask_rule(labels: np.ndarray, spec: AdapterSpec) -> Tuple[List[np.ndarray], List[int]]:
    """Binary instance masks from one raw label map, plus unknown label ids seen."""
    labels = np.asarray(labels)
    if spec.mask_rule == "identity":
        return [labels != 0], []
    if spec.mask_rule == "binarize":
        return [labels > spec.threshold], []
    present = [int(v) for v in np.unique(labels) if v != 0]
    keep = set(spec.categories)
    unknown = []
    if spec.known_labels is not None:
        allowed = keep | set(spec.known_labels)
        unknown = [v for v in present if v not in allowed]
    if spec.instance_merge:
        return [np.isin(labels, list(keep))], unknown
    return [labels == v for v in present if v in keep], unknown


def _load_depth(files: Dict[str, Path], spec: AdapterSpec) -> Optional[np.ndarray]:
    if "depth" in files and files["depth"].suffix == ".png":
        return read_gray(files["depth"]).astype(np.uint8)
    if "depth" in files:
        d = np.load(files["depth"]).astype(float)
    elif "depth_mm" in files:
        d = read_gray(files["depth_mm"]).astype(float) / 1000.0
    else:
        return None
    if spec.truncate_beyond_far:
        d = np.where(d > spec.far, spec.far, d)
    else:
        d = np.where(d > spec.far, 0.0, d)
    return encode_depth(d, spec.near, spec.far, spec.missing_value)


def _collect(input_dir: Path) -> Dict[str, Dict[str, Path]]:
    frames: Dict[str, Dict[str, Path]] = {}
    for p in sorted(input_dir.iterdir()):
        m = _FILE.match(p.name)
        if not m:
            continue
        kind = m.group("kind")
        frames.setdefault(m.group("stem"), {})[kind] = p
    return frames


def _stem_key(stem: str):
    return (0, int(stem), stem) if stem.isdigit() else (1, 0, stem)


def adapt_external_dataset(input_dir, spec: AdapterSpec, out_dir) -> Tuple[Path, dict, dict]:
    """Convert a normalized external dataset into the generated layout.

    Returns ``(out_dir, coco, report)``; ``report`` carries the frame-stem
    mapping and any unknown label ids met under ``keep_categories``.
    """
    src, out = Path(input_dir), Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta_path = src / "metadata.json"
    already = meta_path.exists() and load_json(meta_path).get("adapter") == spec.to_dict()
    effective = AdapterSpec(**{**spec.to_dict(), "mask_rule": "identity", "categories": (),
                               "known_labels": None}) if already else spec

    frames = _collect(src)
    unknown: Dict[int, int] = {}
    stems = []
    for index, stem in enumerate(sorted(frames, key=_stem_key)):
        files = frames[stem]
        stems.append({"frame": index, "stem": stem})
        depth = _load_depth(files, effective)
        masks = []
        for kind in sorted((k for k in files if k.startswith("mask")), key=lambda k: int(k[4:])):
            produced, unk = apply_mask_rule(read_gray(files[kind]), effective)
            for v in unk:
                unknown[v] = unknown.get(v, 0) + 1
            masks.extend(produced)
        shape = None
        for arr in [depth] + masks:
            if arr is not None:
                shape = arr.shape[:2]
                break
        if "rgb" in files:
            with Image.open(files["rgb"]) as im:
                rgb = np.asarray(im.convert("RGB"))
            shape = shape or rgb.shape[:2]
        elif shape is not None:
            rgb = np.zeros(shape + (3,), dtype=np.uint8)
        else:
            log.warning("frame %s has no rgb, depth or masks; skipped", stem)
            continue
        (out / frame_name(index, "rgb")).write_bytes(png_bytes(rgb))
        if depth is not None:
            (out / frame_name(index, "depth")).write_bytes(png_bytes(depth))
        k = 0
        for m in masks:
            if not m.any():
                continue
            k += 1
            (out / frame_name(index, f"mask{k}")).write_bytes(png_bytes(np.where(m, 255, 0).astype(np.uint8)))

    if unknown:
        log.warning("skipped %d unknown label ids: %s", len(unknown), sorted(unknown))
    coco = build_coco_annotations(out)
    write_json(coco, out / "annotations.json")
    write_json({"adapter": spec.to_dict(), "mask_semantics": "modal",
                "depth_encoding": {"near": spec.near, "far": spec.far, "missing": spec.missing_value}},
               out / "metadata.json")
    report = {"frames": stems, "unknown_labels": sorted(unknown), "warning_count": sum(unknown.values())}
    return out, coco, report


def preprocess_depth(depth: np.ndarray, static_background: np.ndarray, zero_is_invalid: bool = True) -> np.ndarray:
    """Fill depth holes from a static background shot, then from the nearest valid pixel.

    Holes are zero-valued pixels (when ``zero_is_invalid``). Remaining holes
    take the value of the Chebyshev-nearest originally valid pixel; among
    equally near candidates the first in row-major scan order wins.
    """
    depth = np.asarray(depth)
    bg = np.asarray(static_background)
    if depth.shape != bg.shape:
        raise ValueError(f"dimension mismatch: depth {depth.shape} vs background {bg.shape}")
    out = depth.copy()
    if not zero_is_invalid:
        return out
    holes = out == 0
    use_bg = holes & (bg != 0)
    out[use_bg] = bg[use_bg]
    holes &= ~use_bg
    valid = ~holes
    if not holes.any() or not valid.any():
        return out
    h, w = out.shape
    source = out.copy()
    hy, hx = np.nonzero(holes)
    pending = np.ones(hy.size, dtype=bool)
    for r in range(1, max(h, w)):
        if not pending.any():
            break
        idx = np.nonzero(pending)[0]
        y0, x0 = hy[idx], hx[idx]
        claimed = np.zeros(idx.size, dtype=bool)
        for dy in range(-r, r + 1):
            step = 1 if abs(dy) == r else 2 * r
            for dx in range(-r, r + 1, step):
                yy, xx = y0 + dy, x0 + dx
                ok = ~claimed & (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
                sel = np.nonzero(ok)[0]
                sel = sel[valid[yy[sel], xx[sel]]]
                out[y0[sel], x0[sel]] = source[yy[sel], xx[sel]]
                claimed[sel] = True
        pending[idx[claimed]] = False
    return out
