"""End-to-end dataset generation: scene specs, rendering, files, annotations, stats."""

from __future__ import annotations

import dataclasses
import logging
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .assets import AssetLibrary, builtin_library
from .dataset_io.coco import build_coco_annotations, write_json, write_sample
from .dataset_io.stats import compute_dataset_stats, write_stats
from .randomizer import RNG_NAME, GenerationPolicy, build_frame_spec
from .renderer import DEPTH_FAR, DEPTH_NEAR, render_frame
from .scene_core import CameraModel

log = logging.getLogger(__name__)

_WORKER: Dict = {}


def _init_worker(seed, policy, assets, camera, out_dir):
    _WORKER.update(seed=seed, policy=policy, assets=assets, camera=camera, out_dir=out_dir)


def _frame_job(frame_index: int) -> dict:
    w = _WORKER
    spec = build_frame_spec(w["seed"], frame_index, w["policy"], w["assets"], w["camera"])
    _, sample = render_frame(spec, w["assets"])
    record = {
        "frame": frame_index,
        "hands": len(spec.hand_instances),
        "instances": len(sample.masks),
        "occluded": sample.occluded_ids,
        "events": list(spec.log),
    }
    try:
        write_sample(sample, frame_index, w["out_dir"])
    except OSError as exc:
        record["error"] = f"{type(exc).__name__}: {exc.strerror or exc}"
    return record


def generate_dataset(out_dir, seed: int, frames: int, policy: GenerationPolicy = GenerationPolicy(),
                     assets: Optional[AssetLibrary] = None, camera: Optional[CameraModel] = None,
                     threads: int = 1, asset_manifest: Optional[dict] = None) -> dict:
    """Generate ``frames`` samples plus annotations, metadata and stats.

    Output bytes depend only on the arguments, never on ``threads``.
    Returns the metadata dict.
    """
    if frames < 0:
        raise ValueError("frame count must be >= 0")
    assets = assets or builtin_library()
    camera = camera or CameraModel()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    args = (int(seed), policy, assets, camera, out)

    if threads > 1 and frames > 1:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(threads, mp_context=ctx, initializer=_init_worker, initargs=args) as pool:
            records = list(pool.map(_frame_job, range(frames), chunksize=max(1, frames // (threads * 8))))
    else:
        _init_worker(*args)
        records = [_frame_job(i) for i in range(frames)]

    gaps = []
    for r in records:
        if "error" in r:
            log.error("frame %d not written: %s", r["frame"], r["error"])
            gaps.append({"frame": r["frame"], "error": r.pop("error")})

    coco = build_coco_annotations(out)
    write_json(coco, out / "annotations.json")
    stats = compute_dataset_stats(coco)
    write_stats(stats, out)
    metadata = {
        "generator": "handforge",
        "version": __version__,
        "seed": int(seed),
        "rng": RNG_NAME,
        "frame_count": frames,
        "policy": policy.to_dict(),
        "camera": dataclasses.asdict(camera),
        "assets": asset_manifest if asset_manifest is not None else assets.manifest(),
        "mask_semantics": "modal",
        "depth_encoding": {"near": DEPTH_NEAR, "far": DEPTH_FAR, "bits": 8, "missing": 255,
                           "rounding": "half-up"},
        "frames": records,
        "gaps": gaps,
    }
    write_json(metadata, out / "metadata.json")
    return metadata
