"""Hypothesis strategies for detection data.

Useful for property-testing detection post-processing: every drawn object is well-formed, and
coordinates are kept in a small range by default so that drawn boxes overlap often.
"""

from typing import Any, Dict, List, Optional, Sequence

from hypothesis import strategies as st
from hypothesis.errors import InvalidArgument
from hypothesis.strategies._internal.utils import cacheable

from .calibration import CalibratedSample
from .geom import Box
from .model import Detection, DetectionStream, EnsembleOutputs, GroundTruth, GroundTruthBox, ImageInfo
from .types import CategoryId, ImageId

DEFAULT_MAX_COORDINATE = 100.0
SCORES = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
# Confidences landing exactly on bin edges of common bin counts
EDGE_CONFIDENCES = st.integers(min_value=0, max_value=60).map(lambda step: step / 60)


def _validate_extent(max_coordinate: float, min_size: float, max_size: Optional[float]) -> None:
    if not max_coordinate > 0:
        raise InvalidArgument(f"max_coordinate={max_coordinate!r} must be positive")
    if not 0 <= min_size <= max_coordinate:
        raise InvalidArgument(f"min_size={min_size!r} must be in [0, max_coordinate]")
    if max_size is not None and not min_size <= max_size:
        raise InvalidArgument(f"max_size={max_size!r} must not be smaller than min_size={min_size!r}")


def _validate_ids(name: str, values: Sequence[int]) -> None:
    if not values:
        raise InvalidArgument(f"`{name}` should not be empty")
    if any(not isinstance(value, int) or isinstance(value, bool) for value in values):
        raise InvalidArgument(f"`{name}` must contain only integers, got {values!r}")


def _validate_models(n_models: int) -> None:
    if not isinstance(n_models, int) or n_models < 1:
        raise InvalidArgument(f"n_models={n_models!r} must be a positive integer")


def _validate_size(name: str, value: int) -> None:
    if not isinstance(value, int) or value < 0:
        raise InvalidArgument(f"{name}={value!r} must be a non-negative integer")


@cacheable  # type: ignore
def boxes(
    *, max_coordinate: float = DEFAULT_MAX_COORDINATE, min_size: float = 0.0, max_size: Optional[float] = None
) -> st.SearchStrategy[Box]:
    """Boxes inside ``[0, max_coordinate]²`` with sides between ``min_size`` and ``max_size``."""
    _validate_extent(max_coordinate, min_size, max_size)

    @st.composite  # type: ignore
    def inner(draw: Any) -> Box:
        x1 = draw(st.floats(min_value=0.0, max_value=max_coordinate - min_size))
        y1 = draw(st.floats(min_value=0.0, max_value=max_coordinate - min_size))
        width_cap = max(max_coordinate - x1, min_size)
        height_cap = max(max_coordinate - y1, min_size)
        if max_size is not None:
            width_cap = min(width_cap, max_size)
            height_cap = min(height_cap, max_size)
        width = draw(st.floats(min_value=min_size, max_value=width_cap))
        height = draw(st.floats(min_value=min_size, max_value=height_cap))
        return Box(x1, y1, x1 + width, y1 + height)

    return inner()


@cacheable  # type: ignore
def detections(
    *,
    image_id: ImageId = 0,
    n_models: int = 1,
    categories: Sequence[CategoryId] = (1,),
    max_coordinate: float = DEFAULT_MAX_COORDINATE,
    scores: Optional[st.SearchStrategy[float]] = None,
) -> st.SearchStrategy[Detection]:
    _validate_models(n_models)
    _validate_ids("categories", categories)
    return st.builds(
        Detection,
        box=boxes(max_coordinate=max_coordinate),
        category=st.sampled_from(tuple(categories)),
        score=SCORES if scores is None else scores,
        model_id=st.integers(min_value=0, max_value=n_models - 1),
        image_id=st.just(image_id),
    )


@cacheable  # type: ignore
def detection_lists(
    *,
    min_size: int = 0,
    max_size: int = 50,
    image_id: ImageId = 0,
    n_models: int = 1,
    categories: Sequence[CategoryId] = (1,),
    max_coordinate: float = DEFAULT_MAX_COORDINATE,
    scores: Optional[st.SearchStrategy[float]] = None,
) -> st.SearchStrategy[List[Detection]]:
    """Detections of one image, possibly from several models."""
    _validate_size("min_size", min_size)
    _validate_size("max_size", max_size)
    strategy = detections(
        image_id=image_id, n_models=n_models, categories=tuple(categories), max_coordinate=max_coordinate, scores=scores
    )
    return st.lists(strategy, min_size=min_size, max_size=max_size)


@cacheable  # type: ignore
def ensembles(
    *,
    min_models: int = 1,
    max_models: int = 4,
    image_ids: Sequence[ImageId] = (0,),
    categories: Sequence[CategoryId] = (1,),
    max_detections: int = 20,
    max_coordinate: float = DEFAULT_MAX_COORDINATE,
) -> st.SearchStrategy[EnsembleOutputs]:
    """Ensembles with between ``min_models`` and ``max_models`` members over the given images."""
    _validate_models(min_models)
    if max_models < min_models:
        raise InvalidArgument(f"max_models={max_models!r} must not be smaller than min_models={min_models!r}")
    _validate_ids("image_ids", image_ids)
    _validate_ids("categories", categories)
    _validate_size("max_detections", max_detections)
    image_ids = tuple(image_ids)
    categories = tuple(categories)

    @st.composite  # type: ignore
    def inner(draw: Any) -> EnsembleOutputs:
        n_models = draw(st.integers(min_value=min_models, max_value=max_models))
        streams = []
        for model_id in range(n_models):
            items: List[Detection] = []
            for image_id in image_ids:
                drawn = draw(
                    detection_lists(
                        max_size=max_detections, image_id=image_id, categories=categories, max_coordinate=max_coordinate
                    )
                )
                items.extend(
                    Detection(item.box, item.category, item.score, model_id=model_id, image_id=image_id)
                    for item in drawn
                )
            streams.append(DetectionStream.from_detections(model_id, items))
        return EnsembleOutputs.from_streams(streams)

    return inner()


@cacheable  # type: ignore
def calibrated_samples(*, min_size: int = 0, max_size: int = 200) -> st.SearchStrategy[List[CalibratedSample]]:
    """Samples whose confidences mix arbitrary values with exact bin edges."""
    _validate_size("min_size", min_size)
    _validate_size("max_size", max_size)
    sample = st.builds(CalibratedSample, confidence=SCORES | EDGE_CONFIDENCES, correct=st.booleans())
    return st.lists(sample, min_size=min_size, max_size=max_size)


@cacheable  # type: ignore
def ground_truths(
    *,
    image_ids: Sequence[ImageId] = (0,),
    categories: Sequence[CategoryId] = (1,),
    max_boxes: int = 10,
    max_coordinate: float = DEFAULT_MAX_COORDINATE,
    min_size: float = 1.0,
) -> st.SearchStrategy[GroundTruth]:
    """Ground truth with non-degenerate boxes; every image is declared with size ``max_coordinate``."""
    _validate_ids("image_ids", image_ids)
    _validate_ids("categories", categories)
    _validate_size("max_boxes", max_boxes)
    if not min_size > 0:
        raise InvalidArgument(f"min_size={min_size!r} must be positive, ground-truth boxes can not be degenerate")
    _validate_extent(max_coordinate, min_size, None)
    image_ids = tuple(image_ids)
    categories = tuple(categories)
    annotation = st.tuples(boxes(max_coordinate=max_coordinate, min_size=min_size), st.sampled_from(categories))

    @st.composite  # type: ignore
    def inner(draw: Any) -> GroundTruth:
        annotation_id = 1
        boxes_by_image: Dict[ImageId, List[GroundTruthBox]] = {}
        for image_id in image_ids:
            for box, category in draw(st.lists(annotation, max_size=max_boxes)):
                boxes_by_image.setdefault(image_id, []).append(GroundTruthBox(box, category, annotation_id))
                annotation_id += 1
        return GroundTruth(
            boxes={image_id: tuple(items) for image_id, items in boxes_by_image.items()},
            images={image_id: ImageInfo(max_coordinate, max_coordinate) for image_id in image_ids},
            categories={category: f"category-{category}" for category in categories},
        )

    return inner()
