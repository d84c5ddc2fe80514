"""Expected Calibration Error over matched detections, plus reliability-diagram data."""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, EmptyBinError, NoSamplesError
from .geom import as_array, iou_matrix
from .model import GroundTruth
from .types import ScoredOutputs
from .validation import check_unit_interval

logger = logging.getLogger(__name__)

DEFAULT_BINS = 10
DEFAULT_MATCH_IOU = 0.5


@dataclass(frozen=True)
class CalibratedSample:
    confidence: float
    correct: bool

    def __post_init__(self) -> None:
        check_unit_interval("confidence", self.confidence)


@dataclass(frozen=True)
class CalibrationBin:
    """Samples whose confidence falls in ``((index - 1) / n_bins, index / n_bins]``; bin 1 also holds 0."""

    index: int
    n_bins: int
    members: Tuple[CalibratedSample, ...] = ()

    @property
    def low(self) -> float:
        return (self.index - 1) / self.n_bins

    @property
    def high(self) -> float:
        return self.index / self.n_bins

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class BinSummary:
    index: int
    low: float
    high: float
    count: int
    confidence: Optional[float]
    accuracy: Optional[float]


@dataclass(frozen=True)
class CalibrationReport:
    n_bins: int
    n_samples: int
    bins: Tuple[BinSummary, ...]
    ece: float
    # Largest per-bin gap, reported next to ECE
    mce: float

    def as_dict(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "n_samples": self.n_samples,
            "ece": self.ece,
            "mce": self.mce,
            "bins": [
                {
                    "index": item.index,
                    "low": item.low,
                    "high": item.high,
                    "count": item.count,
                    "confidence": item.confidence,
                    "accuracy": item.accuracy,
                }
                for item in self.bins
            ],
        }


class ReliabilityRow(NamedTuple):
    bin_low: float
    bin_high: float
    count: int
    confidence: Optional[float]
    accuracy: Optional[float]


def match_detections(
    fused: ScoredOutputs, ground_truth: GroundTruth, match_iou: float = DEFAULT_MATCH_IOU
) -> List[CalibratedSample]:
    """Turn detections into calibration samples by greedy one-to-one matching against ground truth.

    Within each image and category, detections are visited by descending score and take the unmatched ground-truth
    box they overlap most. A detection is correct when that overlap is at least ``match_iou``.
    """
    check_unit_interval("match_iou", match_iou)
    samples = []
    for image_id in sorted(set(fused) | set(ground_truth.boxes)):
        detections = fused.get(image_id, ())
        truths = ground_truth.for_image(image_id)
        for category in sorted({detection.category for detection in detections}):
            candidates = sorted(
                (detection for detection in detections if detection.category == category),
                key=lambda detection: -detection.score,
            )
            targets = [truth for truth in truths if truth.category == category]
            overlaps = iou_matrix(
                as_array([detection.box for detection in candidates]), as_array([truth.box for truth in targets])
            )
            taken = np.zeros(len(targets), dtype=bool)
            for row, detection in enumerate(candidates):
                correct = False
                if len(targets):
                    available = np.where(taken, -1.0, overlaps[row])
                    best = int(np.argmax(available))
                    if not taken[best] and available[best] >= match_iou:
                        taken[best] = True
                        correct = True
                samples.append(CalibratedSample(confidence=detection.score, correct=correct))
    logger.debug("Matched %d of %d detections", sum(sample.correct for sample in samples), len(samples))
    return samples


def assign_bins(samples: Sequence[CalibratedSample], n_bins: int = DEFAULT_BINS) -> List[CalibrationBin]:
    """Partition samples into equally spaced bins; a sample goes to the smallest m with confidence <= m / n_bins."""
    if n_bins < 1:
        raise ConfigError(f"The number of bins must be positive, got {n_bins}")
    edges = np.arange(n_bins + 1) / n_bins
    confidences = np.array([sample.confidence for sample in samples], dtype=np.float64)
    indices = np.maximum(1, np.searchsorted(edges, confidences, side="left"))
    grouped: List[List[CalibratedSample]] = [[] for _ in range(n_bins)]
    for sample, index in zip(samples, indices):
        grouped[int(index) - 1].append(sample)
    return [CalibrationBin(index=idx + 1, n_bins=n_bins, members=tuple(items)) for idx, items in enumerate(grouped)]


def bin_confidence(bin_: CalibrationBin) -> float:
    if not bin_.members:
        raise EmptyBinError(f"Bin {bin_.index} is empty; its average confidence is undefined")
    return float(np.mean([sample.confidence for sample in bin_.members]))


def bin_accuracy(bin_: CalibrationBin) -> float:
    if not bin_.members:
        raise EmptyBinError(f"Bin {bin_.index} is empty; its accuracy is undefined")
    return sum(sample.correct for sample in bin_.members) / len(bin_.members)


def ece(samples: Sequence[CalibratedSample], n_bins: int = DEFAULT_BINS) -> CalibrationReport:
    """Bin-weighted mean absolute gap between accuracy and average confidence."""
    if not samples:
        raise NoSamplesError("Expected calibration error is undefined without samples")
    total = len(samples)
    summaries = []
    error = 0.0
    max_gap = 0.0
    for bin_ in assign_bins(samples, n_bins):
        if not bin_.members:
            summaries.append(BinSummary(bin_.index, bin_.low, bin_.high, 0, None, None))
            continue
        confidence = bin_confidence(bin_)
        accuracy = bin_accuracy(bin_)
        gap = abs(accuracy - confidence)
        error += len(bin_) / total * gap
        max_gap = max(max_gap, gap)
        summaries.append(BinSummary(bin_.index, bin_.low, bin_.high, len(bin_), confidence, accuracy))
    return CalibrationReport(
        n_bins=n_bins, n_samples=total, bins=tuple(summaries), ece=min(1.0, error), mce=max_gap
    )


def reliability_data(report: CalibrationReport) -> List[ReliabilityRow]:
    """One row per bin, empty bins included with absent statistics."""
    return [ReliabilityRow(item.low, item.high, item.count, item.confidence, item.accuracy) for item in report.bins]
