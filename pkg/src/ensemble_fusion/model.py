"""Detection data model shared by fusion, evaluation and calibration."""

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Sequence, Tuple

from .errors import ConfigError, InvalidRecordError
from .geom import Box
from .types import CategoryId, Coordinates, ImageId, ModelId
from .validation import check_contiguous_ids

ZERO_VARIANCE: Coordinates = (0.0, 0.0, 0.0, 0.0)


def _check_score(score: float) -> None:
    if not (math.isfinite(score) and 0.0 <= score <= 1.0):
        raise InvalidRecordError(f"Score must be in [0, 1], got {score!r}")


@dataclass(frozen=True)
class Detection:
    box: Box
    category: CategoryId
    score: float
    model_id: ModelId = 0
    image_id: ImageId = 0

    def __post_init__(self) -> None:
        _check_score(self.score)
        if self.model_id < 0:
            raise InvalidRecordError(f"Model id must be non-negative, got {self.model_id}")


@dataclass(frozen=True)
class FusedDetection:
    """Result of fusing one cluster of detections.

    ``variance`` is the population variance of x1, y1, x2, y2 across the cluster members.
    """

    box: Box
    category: CategoryId
    score: float
    image_id: ImageId = 0
    variance: Coordinates = ZERO_VARIANCE
    cluster_size: int = 1
    source_model_ids: FrozenSet[ModelId] = frozenset()

    def __post_init__(self) -> None:
        _check_score(self.score)
        if self.cluster_size < 1:
            raise InvalidRecordError(f"Cluster size must be positive, got {self.cluster_size}")
        if any(not (component >= 0.0) for component in self.variance):
            raise InvalidRecordError(f"Variance components must be non-negative, got {self.variance}")
        if self.cluster_size == 1 and tuple(self.variance) != ZERO_VARIANCE:
            raise InvalidRecordError(f"A single-member cluster has zero variance, got {self.variance}")

    @classmethod
    def single(cls, detection: Detection, score: float) -> "FusedDetection":
        """Wrap a surviving detection as a one-member cluster."""
        return cls(
            box=detection.box,
            category=detection.category,
            score=score,
            image_id=detection.image_id,
            source_model_ids=frozenset((detection.model_id,)),
        )

    def as_detection(self, model_id: ModelId = 0) -> Detection:
        return Detection(box=self.box, category=self.category, score=self.score, model_id=model_id, image_id=self.image_id)


@dataclass(frozen=True)
class DetectionStream:
    """All detections of one ensemble member, keyed by image."""

    model_id: ModelId
    detections: Mapping[ImageId, Tuple[Detection, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for image_id, items in self.detections.items():
            for detection in items:
                if detection.model_id != self.model_id:
                    raise InvalidRecordError(
                        f"Stream {self.model_id} contains a detection of model {detection.model_id} (image {image_id})"
                    )
                if detection.image_id != image_id:
                    raise InvalidRecordError(
                        f"Detection of image {detection.image_id} is filed under image {image_id} in stream {self.model_id}"
                    )

    @classmethod
    def from_detections(cls, model_id: ModelId, detections: Iterable[Detection]) -> "DetectionStream":
        """Group detections by image, preserving their order within each image."""
        grouped: Dict[ImageId, List[Detection]] = {}
        for detection in detections:
            grouped.setdefault(detection.image_id, []).append(detection)
        return cls(model_id, {image_id: tuple(items) for image_id, items in grouped.items()})

    def for_image(self, image_id: ImageId) -> Tuple[Detection, ...]:
        return self.detections.get(image_id, ())

    def __iter__(self) -> Iterator[Detection]:
        for image_id in sorted(self.detections):
            yield from self.detections[image_id]

    def __len__(self) -> int:
        return sum(len(items) for items in self.detections.values())


@dataclass(frozen=True)
class EnsembleOutputs:
    n_models: int
    streams: Tuple[DetectionStream, ...]

    def __post_init__(self) -> None:
        if self.n_models < 1:
            raise ConfigError(f"An ensemble needs at least one model, got {self.n_models}")
        check_contiguous_ids((stream.model_id for stream in self.streams), expected_count=self.n_models)

    @classmethod
    def from_streams(cls, streams: Sequence[DetectionStream]) -> "EnsembleOutputs":
        return cls(n_models=len(streams), streams=tuple(streams))

    def image_ids(self) -> List[ImageId]:
        return sorted({image_id for stream in self.streams for image_id in stream.detections})


@dataclass(frozen=True)
class GroundTruthBox:
    box: Box
    category: CategoryId
    annotation_id: int = 0


@dataclass(frozen=True)
class ImageInfo:
    width: float
    height: float


@dataclass(frozen=True)
class GroundTruth:
    """Ground-truth boxes keyed by image.

    ``images`` lists every declared image, including images without annotations.
    """

    boxes: Mapping[ImageId, Tuple[GroundTruthBox, ...]] = field(default_factory=dict)
    images: Mapping[ImageId, ImageInfo] = field(default_factory=dict)
    categories: Mapping[CategoryId, str] = field(default_factory=dict)

    def for_image(self, image_id: ImageId) -> Tuple[GroundTruthBox, ...]:
        return self.boxes.get(image_id, ())

    def image_ids(self) -> List[ImageId]:
        return sorted(set(self.images) | set(self.boxes))

    def category_ids(self) -> List[CategoryId]:
        """Categories that have at least one ground-truth box."""
        return sorted({item.category for items in self.boxes.values() for item in items})

    def __len__(self) -> int:
        return sum(len(items) for items in self.boxes.values())


def sort_key(detection: Detection, position: int) -> Tuple[float, ModelId, int]:
    return (-detection.score, detection.model_id, position)


def ranked(detections: Sequence[Detection]) -> List[Detection]:
    """Order by score descending, then model id, then input position."""
    order = sorted(range(len(detections)), key=lambda idx: sort_key(detections[idx], idx))
    return [detections[idx] for idx in order]


def pool(ensemble: EnsembleOutputs, image_id: ImageId) -> List[Detection]:
    """All ensemble members' detections for one image in deterministic rank order."""
    streams = sorted(ensemble.streams, key=lambda stream: stream.model_id)
    # Streams are concatenated in model order, so "input position" breaks ties within one model
    collected = [detection for stream in streams for detection in stream.for_image(image_id)]
    return ranked(collected)
