"""Detection and segmentation evaluation."""

from .coco_eval import (IOU_THRESHOLDS, ApConfig, ApReport, MatchResult, adaptive_area_thresholds, area_category,
                        average_precision, evaluate, match_detections)
from .geometry import Detection, GroundTruth, box_to_mask, iou_box, iou_mask
from .pdq import EPS, PdqReport, pairwise_pdq, pdq_counts, pdq_score, sweep_thresholds, threshold_sweep

__all__ = [
    "IOU_THRESHOLDS", "ApConfig", "ApReport", "MatchResult", "adaptive_area_thresholds", "area_category",
    "average_precision", "evaluate", "match_detections", "Detection", "GroundTruth", "box_to_mask",
    "iou_box", "iou_mask", "EPS", "PdqReport", "pairwise_pdq", "pdq_counts", "pdq_score",
    "sweep_thresholds", "threshold_sweep",
]
