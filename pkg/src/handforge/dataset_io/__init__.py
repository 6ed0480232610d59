"""Dataset files, COCO annotations, statistics and external-data adaptation."""

from .adapt import AdapterSpec, adapt_external_dataset, preprocess_depth
from .coco import (CATEGORIES, COCO_SCHEMA, DatasetError, build_coco_annotations, frame_name, mask_to_bbox,
                   rle_decode, rle_encode, write_sample)
from .stats import DatasetStats, compute_dataset_stats, write_stats

__all__ = [
    "AdapterSpec", "adapt_external_dataset", "preprocess_depth", "CATEGORIES", "COCO_SCHEMA", "DatasetError",
    "build_coco_annotations", "frame_name", "mask_to_bbox", "rle_decode", "rle_encode", "write_sample",
    "DatasetStats", "compute_dataset_stats", "write_stats",
]
