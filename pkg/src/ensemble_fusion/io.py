"""Readers and writers for COCO ground truth, COCO detection results, ensemble manifests and reports.

Boxes are stored as COCO ``[x, y, width, height]`` on disk and converted to corner form on load. Numbers are written
with 6 decimal places and JSON keys keep a fixed order, so equal inputs always serialize to equal bytes.
"""

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import FileAccessError, InvalidRecordError, MalformedFileError, UnknownImageError
from .fusion import FusionConfig
from .geom import Box
from .model import (
    Detection,
    DetectionStream,
    EnsembleOutputs,
    FusedDetection,
    GroundTruth,
    GroundTruthBox,
    ImageInfo,
)
from .types import CategoryId, ImageId, JSONRecord
from .validation import check_contiguous_ids, check_known_keys, check_positive

logger = logging.getLogger(__name__)

PRECISION = 6
RELIABILITY_HEADER = ("bin_low", "bin_high", "count", "confidence", "accuracy")
PathLike = Union[str, "os.PathLike[str]"]


@dataclass(frozen=True)
class ModelEntry:
    id: int
    path: str
    weight: Optional[float] = None


@dataclass(frozen=True)
class EnsembleManifest:
    """An ensemble as one reproducible object: ground truth, one detection file per model and fusion overrides.

    Paths are stored as written and resolved against ``base_dir``, the manifest's directory.
    """

    ground_truth: str
    models: Tuple[ModelEntry, ...]
    fusion: Mapping[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        check_contiguous_ids(entry.id for entry in self.models)
        for entry in self.models:
            if entry.weight is not None:
                check_positive(f"models[{entry.id}].weight", entry.weight)

    @property
    def n_models(self) -> int:
        return len(self.models)

    def resolve(self, path: str) -> Path:
        return self.base_dir / path

    @property
    def ground_truth_path(self) -> Path:
        return self.resolve(self.ground_truth)

    def model_paths(self) -> List[Tuple[int, Path]]:
        return [(entry.id, self.resolve(entry.path)) for entry in sorted(self.models, key=lambda entry: entry.id)]

    def fusion_config(self, base: Optional[FusionConfig] = None) -> FusionConfig:
        """Module defaults (or ``base``) overridden by the manifest's fusion block and per-model weights."""
        config = (base or FusionConfig()).with_overrides(self.fusion)
        if any(entry.weight is not None for entry in self.models):
            weights = tuple(
                1.0 if entry.weight is None else entry.weight for entry in sorted(self.models, key=lambda e: e.id)
            )
            config = config.with_overrides({"model_weights": weights})
        return config


def _read_json(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fd:
            return json.load(fd)
    except FileNotFoundError:
        raise FileAccessError(f"{path}: file not found") from None
    except UnicodeDecodeError as exc:
        raise MalformedFileError(f"{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from None
    except (ValueError, RecursionError) as exc:
        # `JSONDecodeError` and integer-size limits are both `ValueError`
        raise MalformedFileError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise FileAccessError(f"{path}: {exc.strerror or exc}") from None


def write_text(path: PathLike, content: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fd:
            fd.write(content)
    except OSError as exc:
        raise FileAccessError(f"{path}: {exc.strerror or exc}") from None
    logger.info("Wrote %s", path)


def write_json(path: PathLike, data: Any) -> None:
    """Write a JSON document; key order is the insertion order of ``data``."""
    write_text(path, json.dumps(data, indent=2, allow_nan=False) + "\n")


def _round(value: float) -> float:
    # Adding 0.0 turns -0.0 into 0.0
    return round(float(value), PRECISION) + 0.0


def _require(record: Any, keys: Iterable[str], context: str) -> Dict[str, Any]:
    if not isinstance(record, dict):
        raise InvalidRecordError(f"{context}: expected an object, got {type(record).__name__}")
    missing = [key for key in keys if key not in record]
    if missing:
        raise InvalidRecordError(f"{context}: missing {', '.join(missing)}")
    return record


def _integer(value: Any, name: str, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidRecordError(f"{context}: `{name}` must be an integer, got {value!r}")
    return value


def _number(value: Any, name: str, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidRecordError(f"{context}: `{name}` must be a number, got {value!r}")
    try:
        number = float(value)
    except OverflowError:
        raise InvalidRecordError(f"{context}: `{name}` is out of range for a float") from None
    if not math.isfinite(number):
        raise InvalidRecordError(f"{context}: `{name}` must be finite, got {value!r}")
    return number


def _bbox(value: Any, context: str, *, allow_empty: bool) -> Box:
    if not isinstance(value, list) or len(value) != 4:
        raise InvalidRecordError(f"{context}: `bbox` must be a list [x, y, width, height], got {value!r}")
    x, y, width, height = (_number(item, "bbox", context) for item in value)
    if width < 0 or height < 0 or (not allow_empty and (width == 0 or height == 0)):
        kind = "negative" if width < 0 or height < 0 else "zero"
        raise InvalidRecordError(f"{context}: {kind} width or height in bbox {value!r}")
    return Box.from_xywh(x, y, width, height)


def _bbox_record(box: Box) -> List[float]:
    return [_round(value) for value in box.to_xywh()]


def load_ground_truth(path: PathLike) -> GroundTruth:
    """Load COCO annotations: ``images``, ``annotations`` and ``categories``."""
    document = _read_json(path)
    if not isinstance(document, dict):
        raise MalformedFileError(f"{path}: expected a COCO annotation object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(document.get(key), list):
            raise MalformedFileError(f"{path}: `{key}` must be a list")
    images: Dict[ImageId, ImageInfo] = {}
    for idx, record in enumerate(document["images"]):
        context = f"{path}: images[{idx}]"
        record = _require(record, ("id",), context)
        image_id = _integer(record["id"], "id", context)
        width = _number(record.get("width", 0), "width", context)
        height = _number(record.get("height", 0), "height", context)
        images[image_id] = ImageInfo(width=width, height=height)
    categories: Dict[CategoryId, str] = {}
    for idx, record in enumerate(document["categories"]):
        context = f"{path}: categories[{idx}]"
        record = _require(record, ("id",), context)
        category_id = _integer(record["id"], "id", context)
        categories[category_id] = str(record.get("name", category_id))
    boxes: Dict[ImageId, List[GroundTruthBox]] = {}
    for idx, record in enumerate(document["annotations"]):
        record = _require(record, ("id", "image_id", "category_id", "bbox"), f"{path}: annotations[{idx}]")
        context = f"{path}: annotation {record['id']!r}"
        annotation_id = _integer(record["id"], "id", context)
        image_id = _integer(record["image_id"], "image_id", context)
        if image_id not in images:
            raise UnknownImageError(f"{context}: unknown image_id {image_id}")
        category = _integer(record["category_id"], "category_id", context)
        box = _bbox(record["bbox"], context, allow_empty=False)
        boxes.setdefault(image_id, []).append(GroundTruthBox(box=box, category=category, annotation_id=annotation_id))
    ground_truth = GroundTruth(
        boxes={image_id: tuple(items) for image_id, items in boxes.items()}, images=images, categories=categories
    )
    logger.info("Loaded %d ground-truth boxes over %d images from %s", len(ground_truth), len(images), path)
    return ground_truth


def _read_results(path: PathLike) -> List[Any]:
    document = _read_json(path)
    if not isinstance(document, list):
        raise MalformedFileError(f"{path}: expected a JSON array of detection results")
    return document


def _parse_result(record: Any, context: str) -> Tuple[ImageId, CategoryId, Box, float]:
    record = _require(record, ("image_id", "category_id", "bbox", "score"), context)
    image_id = _integer(record["image_id"], "image_id", context)
    category = _integer(record["category_id"], "category_id", context)
    box = _bbox(record["bbox"], context, allow_empty=True)
    score = _number(record["score"], "score", context)
    if not 0.0 <= score <= 1.0:
        raise InvalidRecordError(f"{context}: score must be in [0, 1], got {score!r}")
    return image_id, category, box, score


def load_detections(path: PathLike, model_id: int) -> DetectionStream:
    """Load a COCO results array as one model's stream; the order within each image is kept."""
    detections = []
    for idx, record in enumerate(_read_results(path)):
        image_id, category, box, score = _parse_result(record, f"{path}: record {idx}")
        detections.append(Detection(box=box, category=category, score=score, model_id=model_id, image_id=image_id))
    stream = DetectionStream.from_detections(model_id, detections)
    logger.info("Loaded %d detections for model %d from %s", len(detections), model_id, path)
    return stream


def load_fused(path: PathLike) -> Dict[ImageId, List[FusedDetection]]:
    """Load fused output; files without the variance extension load as singleton clusters."""
    fused: Dict[ImageId, List[FusedDetection]] = {}
    for idx, record in enumerate(_read_results(path)):
        context = f"{path}: record {idx}"
        image_id, category, box, score = _parse_result(record, context)
        variance = record.get("variance", [0.0, 0.0, 0.0, 0.0])
        if not isinstance(variance, list) or len(variance) != 4:
            raise InvalidRecordError(f"{context}: `variance` must be a list of 4 numbers")
        v1, v2, v3, v4 = (_number(item, "variance", context) for item in variance)
        cluster_size = _integer(record.get("cluster_size", 1), "cluster_size", context)
        if cluster_size == 1 and (v1, v2, v3, v4) != (0.0, 0.0, 0.0, 0.0):
            raise InvalidRecordError(f"{context}: a single-member cluster must have zero `variance`")
        sources = record.get("source_models", [])
        if not isinstance(sources, list):
            raise InvalidRecordError(f"{context}: `source_models` must be a list")
        fused.setdefault(image_id, []).append(
            FusedDetection(
                box=box,
                category=category,
                score=score,
                image_id=image_id,
                variance=(v1, v2, v3, v4),
                cluster_size=cluster_size,
                source_model_ids=frozenset(_integer(item, "source_models", context) for item in sources),
            )
        )
    return fused


def _result_record(image_id: ImageId, category: CategoryId, box: Box, score: float) -> JSONRecord:
    return {"image_id": image_id, "category_id": category, "bbox": _bbox_record(box), "score": _round(score)}


def write_detections(path: PathLike, stream: DetectionStream) -> None:
    """Write one stream as a COCO results array, images ascending and input order preserved."""
    records = [
        _result_record(detection.image_id, detection.category, detection.box, detection.score) for detection in stream
    ]
    write_json(path, records)


def fused_records(fused: Mapping[ImageId, Sequence[FusedDetection]]) -> List[JSONRecord]:
    records = []
    for image_id in sorted(fused):
        for detection in sorted(fused[image_id], key=lambda item: -item.score):
            record = _result_record(image_id, detection.category, detection.box, detection.score)
            record["variance"] = [_round(value) for value in detection.variance]
            record["cluster_size"] = detection.cluster_size
            record["source_models"] = sorted(detection.source_model_ids)
            records.append(record)
    return records


def write_fused(path: PathLike, fused: Mapping[ImageId, Sequence[FusedDetection]]) -> None:
    """Write fused detections as COCO results extended with ``variance``, ``cluster_size`` and ``source_models``."""
    write_json(path, fused_records(fused))


def load_manifest(path: PathLike) -> EnsembleManifest:
    document = _read_json(path)
    if not isinstance(document, dict):
        raise MalformedFileError(f"{path}: expected a manifest object")
    check_known_keys("manifest", document, ("ground_truth", "models", "fusion"))
    ground_truth = document.get("ground_truth")
    if not isinstance(ground_truth, str):
        raise MalformedFileError(f"{path}: `ground_truth` must be a path string")
    models = document.get("models")
    if not isinstance(models, list):
        raise MalformedFileError(f"{path}: `models` must be a list")
    entries = []
    for idx, record in enumerate(models):
        context = f"{path}: models[{idx}]"
        record = _require(record, ("id", "path"), context)
        check_known_keys("model", record, ("id", "path", "weight"))
        if not isinstance(record["path"], str):
            raise MalformedFileError(f"{context}: `path` must be a string")
        weight = record.get("weight")
        entries.append(
            ModelEntry(
                id=_integer(record["id"], "id", context),
                path=record["path"],
                weight=None if weight is None else _number(weight, "weight", context),
            )
        )
    fusion = document.get("fusion", {})
    if not isinstance(fusion, dict):
        raise MalformedFileError(f"{path}: `fusion` must be an object")
    return EnsembleManifest(
        ground_truth=ground_truth, models=tuple(entries), fusion=fusion, base_dir=Path(path).parent
    )


def write_manifest(
    path: PathLike,
    ground_truth: PathLike,
    model_paths: Sequence[PathLike],
    fusion: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write a manifest whose paths are relative to the manifest's own directory."""
    base = Path(path).parent

    def relative(target: PathLike) -> str:
        return Path(os.path.relpath(Path(target).resolve(), base.resolve())).as_posix()

    document = {
        "ground_truth": relative(ground_truth),
        "models": [{"id": idx, "path": relative(model_path)} for idx, model_path in enumerate(model_paths)],
        "fusion": dict(fusion or {}),
    }
    write_json(path, document)


def load_ensemble(manifest: EnsembleManifest) -> EnsembleOutputs:
    streams = [load_detections(path, model_id) for model_id, path in manifest.model_paths()]
    return EnsembleOutputs.from_streams(streams)


def write_reliability_csv(path: PathLike, rows: Iterable[Sequence[Any]]) -> None:
    """Reliability rows as CSV; absent statistics become empty fields."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fd:
            writer = csv.writer(fd, lineterminator="\n")
            writer.writerow(RELIABILITY_HEADER)
            for row in rows:
                writer.writerow(["" if value is None else _round(value) if isinstance(value, float) else value for value in row])
    except OSError as exc:
        raise FileAccessError(f"{path}: {exc.strerror or exc}") from None
    logger.info("Wrote %s", path)


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as fd:
            for chunk in iter(lambda: fd.read(65536), b""):
                digest.update(chunk)
    except OSError as exc:
        raise FileAccessError(f"{path}: {exc.strerror or exc}") from None
    return digest.hexdigest()
