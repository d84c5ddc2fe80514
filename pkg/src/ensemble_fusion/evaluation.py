"""COCO-style average precision and recall at fixed IoU thresholds.

A single area range is used and the number of detections per image is unlimited unless `ar_at_iou` is asked to
truncate.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, NoGroundTruthError
from .geom import as_array, iou_matrix
from .model import GroundTruth
from .types import BoxArray, CategoryId, ImageId, ScoredOutputs
from .validation import check_unit_interval

logger = logging.getLogger(__name__)

RECALL_THRESHOLDS = np.arange(101) / 100
COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * step, 2) for step in range(10))


@dataclass(frozen=True)
class PRPoint:
    score: float
    precision: float
    recall: float


@dataclass(frozen=True)
class CategoryMetrics:
    category: CategoryId
    name: str
    n_ground_truth: int
    n_detections: int
    ap_50: float
    ap_95: float
    ar_50: float
    ar_95: float


@dataclass(frozen=True)
class EvalReport:
    ap_50: float
    ap_95: float
    ar_50: float
    ar_95: float
    # Mean over IoU 0.50:0.05:0.95, the COCO headline numbers
    ap_50_95: float
    ar_50_95: float
    n_images: int
    n_detections: int
    n_ground_truth: int
    categories: Tuple[CategoryMetrics, ...]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "ap_50": self.ap_50,
            "ap_95": self.ap_95,
            "ar_50": self.ar_50,
            "ar_95": self.ar_95,
            "ap_50_95": self.ap_50_95,
            "ar_50_95": self.ar_50_95,
            "n_images": self.n_images,
            "n_detections": self.n_detections,
            "n_ground_truth": self.n_ground_truth,
            "categories": [
                {
                    "category": item.category,
                    "name": item.name,
                    "n_ground_truth": item.n_ground_truth,
                    "n_detections": item.n_detections,
                    "ap_50": item.ap_50,
                    "ap_95": item.ap_95,
                    "ar_50": item.ar_50,
                    "ar_95": item.ar_95,
                }
                for item in self.categories
            ],
        }


@dataclass(frozen=True)
class _ImageBlock:
    """Detections and ground truth of one category in one image; detections sorted by score."""

    image_id: ImageId
    scores: np.ndarray
    overlaps: BoxArray
    n_truth: int


def _prepare(detections: ScoredOutputs, ground_truth: GroundTruth) -> Dict[CategoryId, List[_ImageBlock]]:
    if len(ground_truth) == 0:
        raise NoGroundTruthError("AP and AR are undefined without ground-truth boxes")
    blocks: Dict[CategoryId, List[_ImageBlock]] = {category: [] for category in ground_truth.category_ids()}
    for image_id in sorted(set(detections) | set(ground_truth.boxes)):
        items = detections.get(image_id, ())
        truths = ground_truth.for_image(image_id)
        for category, category_blocks in blocks.items():
            candidates = sorted((item for item in items if item.category == category), key=lambda item: -item.score)
            targets = [truth.box for truth in truths if truth.category == category]
            if not candidates and not targets:
                continue
            category_blocks.append(
                _ImageBlock(
                    image_id=image_id,
                    scores=np.array([item.score for item in candidates], dtype=np.float64),
                    overlaps=iou_matrix(as_array([item.box for item in candidates]), as_array(targets)),
                    n_truth=len(targets),
                )
            )
    return blocks


def _match(block: _ImageBlock, iou_threshold: float, max_dets: Optional[int] = None) -> np.ndarray:
    """Greedy matching; each detection takes the best still-unmatched ground-truth box with IoU >= threshold."""
    n_dets = len(block.scores) if max_dets is None else min(max_dets, len(block.scores))
    matched = np.zeros(n_dets, dtype=bool)
    taken = np.zeros(block.n_truth, dtype=bool)
    if block.n_truth == 0:
        return matched
    for row in range(n_dets):
        available = np.where(taken, -1.0, block.overlaps[row])
        best = int(np.argmax(available))
        if not taken[best] and available[best] >= iou_threshold:
            taken[best] = True
            matched[row] = True
    return matched


def _ranking(blocks: List[_ImageBlock], iou_threshold: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """Scores and match flags of one category, ordered globally by descending score."""
    if blocks:
        scores = np.concatenate([block.scores for block in blocks])
        matched = np.concatenate([_match(block, iou_threshold) for block in blocks])
    else:
        scores = np.zeros(0, dtype=np.float64)
        matched = np.zeros(0, dtype=bool)
    order = np.argsort(-scores, kind="mergesort")
    return scores[order], matched[order], sum(block.n_truth for block in blocks)


def _curve(matched: np.ndarray, n_truth: int) -> Tuple[np.ndarray, np.ndarray]:
    true_positives = np.cumsum(matched)
    false_positives = np.cumsum(~matched)
    recall = true_positives / n_truth
    precision = true_positives / np.maximum(true_positives + false_positives, 1)
    return precision, recall


def _interpolated_ap(matched: np.ndarray, n_truth: int) -> float:
    """101-point interpolated AP: precision envelope sampled at recall thresholds 0, 0.01, ..., 1."""
    if len(matched) == 0:
        return 0.0
    precision, recall = _curve(matched, n_truth)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    positions = np.searchsorted(recall, RECALL_THRESHOLDS, side="left")
    sampled = np.where(positions < len(envelope), envelope[np.minimum(positions, len(envelope) - 1)], 0.0)
    return float(np.mean(sampled))


def precision_recall_curve(
    detections: ScoredOutputs, ground_truth: GroundTruth, category: CategoryId, iou_threshold: float
) -> List[PRPoint]:
    """Raw precision/recall after each ranked detection of one category."""
    check_unit_interval("iou_threshold", iou_threshold)
    blocks = _prepare(detections, ground_truth).get(category, [])
    scores, matched, n_truth = _ranking(blocks, iou_threshold)
    if n_truth == 0 or len(scores) == 0:
        return []
    precision, recall = _curve(matched, n_truth)
    return [PRPoint(float(s), float(p), float(r)) for s, p, r in zip(scores, precision, recall)]


def _ap(blocks: Dict[CategoryId, List[_ImageBlock]], iou_threshold: float) -> Dict[CategoryId, float]:
    result = {}
    for category, category_blocks in blocks.items():
        _, matched, n_truth = _ranking(category_blocks, iou_threshold)
        result[category] = _interpolated_ap(matched, n_truth)
    return result


def _ar(blocks: Dict[CategoryId, List[_ImageBlock]], iou_threshold: float, max_dets: Optional[int]) -> Dict[CategoryId, float]:
    result = {}
    for category, category_blocks in blocks.items():
        n_truth = sum(block.n_truth for block in category_blocks)
        found = sum(int(_match(block, iou_threshold, max_dets).sum()) for block in category_blocks)
        result[category] = found / n_truth
    return result


def ap_at_iou(detections: ScoredOutputs, ground_truth: GroundTruth, iou_threshold: float) -> float:
    """Mean over ground-truth categories of 101-point interpolated average precision."""
    check_unit_interval("iou_threshold", iou_threshold)
    per_category = _ap(_prepare(detections, ground_truth), iou_threshold)
    return float(np.mean(list(per_category.values())))


def ar_at_iou(
    detections: ScoredOutputs, ground_truth: GroundTruth, iou_threshold: float, max_dets: Optional[int] = None
) -> float:
    """Mean over ground-truth categories of the recall reached by the top ``max_dets`` detections per image."""
    check_unit_interval("iou_threshold", iou_threshold)
    if max_dets is not None and (isinstance(max_dets, bool) or not isinstance(max_dets, int) or max_dets < 0):
        raise ConfigError(f"`max_dets` must be a non-negative integer, got {max_dets!r}")
    per_category = _ar(_prepare(detections, ground_truth), iou_threshold, max_dets)
    return float(np.mean(list(per_category.values())))


def evaluate(detections: ScoredOutputs, ground_truth: GroundTruth) -> EvalReport:
    blocks = _prepare(detections, ground_truth)
    ap = {threshold: _ap(blocks, threshold) for threshold in COCO_IOU_THRESHOLDS}
    ar = {threshold: _ar(blocks, threshold, None) for threshold in COCO_IOU_THRESHOLDS}
    categories = tuple(
        CategoryMetrics(
            category=category,
            name=ground_truth.categories.get(category, str(category)),
            n_ground_truth=sum(block.n_truth for block in blocks[category]),
            n_detections=sum(len(block.scores) for block in blocks[category]),
            ap_50=ap[0.5][category],
            ap_95=ap[0.95][category],
            ar_50=ar[0.5][category],
            ar_95=ar[0.95][category],
        )
        for category in sorted(blocks)
    )

    def mean(values: Dict[CategoryId, float]) -> float:
        return float(np.mean(list(values.values())))

    report = EvalReport(
        ap_50=mean(ap[0.5]),
        ap_95=mean(ap[0.95]),
        ar_50=mean(ar[0.5]),
        ar_95=mean(ar[0.95]),
        ap_50_95=float(np.mean([mean(ap[threshold]) for threshold in COCO_IOU_THRESHOLDS])),
        ar_50_95=float(np.mean([mean(ar[threshold]) for threshold in COCO_IOU_THRESHOLDS])),
        n_images=len(set(detections) | set(ground_truth.image_ids())),
        n_detections=sum(len(items) for items in detections.values()),
        n_ground_truth=len(ground_truth),
        categories=categories,
    )
    logger.info("Evaluated %d detections against %d ground-truth boxes", report.n_detections, report.n_ground_truth)
    return report
