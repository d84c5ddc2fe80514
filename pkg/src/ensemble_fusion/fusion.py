"""Decision fusion for detector ensembles: NMS, Soft-NMS and Weighted Boxes Fusion."""

import enum
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError
from .geom import Box, as_array, iou_matrix
from .model import Detection, EnsembleOutputs, FusedDetection, pool, ranked
from .types import CategoryId, Coordinates, FusedOutputs, ImageId, ModelId
from .validation import check_known_keys, check_non_negative, check_positive, check_unit_interval

logger = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_SOFT_SIGMA = 0.5
DEFAULT_SOFT_SCORE_FLOOR = 0.001
DEFAULT_WBF_SKIP_THRESHOLD = 0.2


class FusionMethod(str, enum.Enum):
    NMS = "nms"
    SOFT_NMS = "softnms"
    WBF = "wbf"

    @classmethod
    def parse(cls, value: Union[str, "FusionMethod"]) -> "FusionMethod":
        if isinstance(value, cls):
            return value
        normalized = str(value).strip().lower().replace("-", "").replace("_", "")
        for method in cls:
            if method.value == normalized:
                return method
        raise ConfigError(f"Unknown fusion method {value!r}; expected one of: {', '.join(m.value for m in cls)}")


class SoftMode(str, enum.Enum):
    LINEAR = "linear"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value: Union[str, "SoftMode"]) -> "SoftMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(
                f"Unknown Soft-NMS mode {value!r}; expected one of: {', '.join(m.value for m in cls)}"
            ) from None


@dataclass(frozen=True)
class FusionConfig:
    method: FusionMethod = FusionMethod.WBF
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    soft_sigma: float = DEFAULT_SOFT_SIGMA
    soft_mode: SoftMode = SoftMode.GAUSSIAN
    soft_score_floor: float = DEFAULT_SOFT_SCORE_FLOOR
    wbf_skip_threshold: float = DEFAULT_WBF_SKIP_THRESHOLD
    conf_rescale: bool = True
    # Per-model trust used by WBF; empty means every model weighs the same
    model_weights: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", FusionMethod.parse(self.method))
        object.__setattr__(self, "soft_mode", SoftMode.parse(self.soft_mode))
        object.__setattr__(self, "model_weights", tuple(float(weight) for weight in self.model_weights))
        check_unit_interval("iou_threshold", self.iou_threshold, include_zero=False)
        check_positive("soft_sigma", self.soft_sigma)
        check_non_negative("soft_score_floor", self.soft_score_floor)
        check_unit_interval("wbf_skip_threshold", self.wbf_skip_threshold, include_one=False)
        if not isinstance(self.conf_rescale, bool):
            raise ConfigError(f"`conf_rescale` must be a boolean, got {self.conf_rescale!r}")
        for weight in self.model_weights:
            check_positive("model_weights", weight)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "FusionConfig":
        """Return a copy with the given fields replaced; unknown keys are rejected."""
        check_known_keys("fusion", overrides, (item.name for item in fields(self)))
        try:
            return replace(self, **{key: _coerce(key, value) for key, value in overrides.items() if value is not None})
        except (TypeError, ValueError, OverflowError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"Invalid fusion options: {exc}") from exc

    def weight_of(self, model_id: ModelId) -> float:
        """Relative weight in (0, 1] of one model; the most trusted model weighs 1."""
        if not self.model_weights:
            return 1.0
        if model_id >= len(self.model_weights):
            raise ConfigError(f"No weight configured for model {model_id}")
        return self.model_weights[model_id] / max(self.model_weights)

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["method"] = self.method.value
        data["soft_mode"] = self.soft_mode.value
        data["model_weights"] = list(self.model_weights)
        return data


def _coerce(key: str, value: Any) -> Any:
    if key == "conf_rescale":
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"`conf_rescale` must be a boolean, got {value!r}")
            return lowered in ("true", "1", "yes")
        return value
    if key in ("iou_threshold", "soft_sigma", "soft_score_floor", "wbf_skip_threshold"):
        if isinstance(value, bool):
            raise ConfigError(f"`{key}` must be a number, got {value!r}")
        return float(value)
    if key == "model_weights":
        return tuple(value)
    return value


@dataclass
class Cluster:
    """Same-category detections merged by WBF.

    ``weights`` holds each member's effective score (raw score scaled by its model weight).
    Members are appended in rank order, so the representative is always the first one.
    """

    members: List[Detection] = field(default_factory=list)
    weights: List[float] = field(default_factory=list)
    representative: int = 0

    @property
    def category(self) -> CategoryId:
        return self.members[self.representative].category

    def add(self, detection: Detection, weight: float) -> None:
        if self.members and detection.category != self.category:
            raise ValueError(f"Cannot add category {detection.category} to a cluster of category {self.category}")
        self.members.append(detection)
        self.weights.append(weight)

    def coordinates(self) -> np.ndarray:
        return as_array([member.box for member in self.members])

    def fused_box(self) -> Box:
        coords = self.coordinates()
        weights = np.asarray(self.weights, dtype=np.float64)
        averaged = (weights[:, None] * coords).sum(axis=0) / weights.sum()
        # A weighted mean lies inside the member hull; clipping removes rounding excursions
        averaged = np.clip(averaged, coords.min(axis=0), coords.max(axis=0))
        x1, y1, x2, y2 = (float(value) for value in averaged)
        return Box(x1, y1, max(x1, x2), max(y1, y2))

    def variance(self) -> Coordinates:
        """Unweighted population variance of each corner coordinate."""
        if len(self.members) == 1:
            return (0.0, 0.0, 0.0, 0.0)
        coords = self.coordinates()
        variance = coords.var(axis=0)
        variance[np.ptp(coords, axis=0) == 0.0] = 0.0
        v1, v2, v3, v4 = (float(value) for value in variance)
        return (v1, v2, v3, v4)

    def to_fused(self, n_models: int, conf_rescale: bool) -> FusedDetection:
        score = math.fsum(self.weights) / len(self.weights)
        if conf_rescale:
            score *= min(len(self.members), n_models) / n_models
        representative = self.members[self.representative]
        return FusedDetection(
            box=self.fused_box(),
            category=self.category,
            score=min(1.0, score),
            image_id=representative.image_id,
            variance=self.variance(),
            cluster_size=len(self.members),
            source_model_ids=frozenset(member.model_id for member in self.members),
        )


def _by_score(fused: List[FusedDetection]) -> List[FusedDetection]:
    # `sorted` is stable, so equal scores keep their production order
    return sorted(fused, key=lambda item: -item.score)


def nms(detections: Sequence[Detection], iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> List[FusedDetection]:
    """Greedy class-wise non-maximum suppression.

    A lower-ranked box is suppressed when its IoU with a kept box of the same category is strictly greater than
    ``iou_threshold``.
    """
    order = ranked(detections)
    if not order:
        return []
    boxes = as_array([detection.box for detection in order])
    categories = np.array([detection.category for detection in order])
    suppressed = np.zeros(len(order), dtype=bool)
    kept = []
    for idx, detection in enumerate(order):
        if suppressed[idx]:
            continue
        kept.append(FusedDetection.single(detection, detection.score))
        rest = slice(idx + 1, None)
        overlaps = iou_matrix(boxes[idx : idx + 1], boxes[rest])[0]
        suppressed[rest] |= (categories[rest] == detection.category) & (overlaps > iou_threshold)
    return kept


def soft_nms(detections: Sequence[Detection], config: Optional[FusionConfig] = None) -> List[FusedDetection]:
    """Soft-NMS: decay the scores of overlapping same-category boxes instead of removing them.

    Linear mode multiplies by ``1 - IoU`` when the IoU exceeds ``iou_threshold``; gaussian mode multiplies by
    ``exp(-IoU² / soft_sigma)``. Boxes whose score drops below ``soft_score_floor`` are discarded.
    """
    config = config or FusionConfig(method=FusionMethod.SOFT_NMS)
    order = ranked(detections)
    if not order:
        return []
    boxes = as_array([detection.box for detection in order])
    categories = np.array([detection.category for detection in order])
    scores = np.array([detection.score for detection in order], dtype=np.float64)
    # Rank position doubles as the tie-break: `order` is sorted by (score, model id, input order)
    alive = list(range(len(order)))
    kept = []
    while alive:
        best = min(alive, key=lambda idx: (-scores[idx], order[idx].model_id, idx))
        alive.remove(best)
        kept.append(FusedDetection.single(order[best], float(scores[best])))
        if not alive:
            break
        candidates = np.array(alive)
        overlaps = iou_matrix(boxes[best : best + 1], boxes[candidates])[0]
        same = categories[candidates] == categories[best]
        if config.soft_mode is SoftMode.LINEAR:
            decay = np.where(same & (overlaps > config.iou_threshold), 1.0 - overlaps, 1.0)
        else:
            decay = np.where(same & (overlaps > 0.0), np.exp(-(overlaps * overlaps) / config.soft_sigma), 1.0)
        scores[candidates] = scores[candidates] * decay
        alive = [idx for idx in alive if scores[idx] >= config.soft_score_floor]
    return _by_score(kept)


def wbf(detections: Sequence[Detection], n_models: int, config: Optional[FusionConfig] = None) -> List[FusedDetection]:
    """Weighted Boxes Fusion with per-cluster empirical variance.

    Detections scoring at or below ``wbf_skip_threshold`` are discarded first. The rest are visited in rank order and
    join the same-category cluster whose current fused box overlaps them most, if that IoU exceeds ``iou_threshold``.
    """
    config = config or FusionConfig(method=FusionMethod.WBF)
    if n_models < 1:
        raise ConfigError(f"`n_models` must be positive, got {n_models}")
    order = [detection for detection in ranked(detections) if detection.score > config.wbf_skip_threshold]
    by_category: Dict[CategoryId, List[Detection]] = {}
    for detection in order:
        by_category.setdefault(detection.category, []).append(detection)
    fused = []
    for category in sorted(by_category):
        clusters: List[Cluster] = []
        fused_boxes: List[Box] = []
        for detection in by_category[category]:
            weight = detection.score * config.weight_of(detection.model_id)
            if clusters:
                overlaps = iou_matrix(as_array([detection.box]), as_array(fused_boxes))[0]
                # `argmax` returns the earliest cluster among equal overlaps
                best = int(np.argmax(overlaps))
                if overlaps[best] > config.iou_threshold:
                    clusters[best].add(detection, weight)
                    fused_boxes[best] = clusters[best].fused_box()
                    continue
            cluster = Cluster()
            cluster.add(detection, weight)
            clusters.append(cluster)
            fused_boxes.append(detection.box)
        fused.extend(cluster.to_fused(n_models, config.conf_rescale) for cluster in clusters)
    return _by_score(fused)


def fuse_image(detections: Sequence[Detection], n_models: int, config: FusionConfig) -> List[FusedDetection]:
    if config.method is FusionMethod.NMS:
        return nms(detections, config.iou_threshold)
    if config.method is FusionMethod.SOFT_NMS:
        return soft_nms(detections, config)
    return wbf(detections, n_models, config)


def fuse(
    ensemble: EnsembleOutputs,
    image_ids: Optional[Iterable[ImageId]] = None,
    config: Optional[FusionConfig] = None,
) -> FusedOutputs:
    """Pool every image's detections across the ensemble and fuse them with the configured method.

    The result covers the union of ``image_ids`` and the images present in the ensemble; images without detections
    map to empty lists.
    """
    config = config or FusionConfig()
    if not isinstance(config.method, FusionMethod):
        raise ConfigError(f"Unknown fusion method {config.method!r}")
    if config.model_weights and len(config.model_weights) != ensemble.n_models:
        raise ConfigError(
            f"Got {len(config.model_weights)} model weights for an ensemble of {ensemble.n_models} models"
        )
    targets = sorted(set(image_ids or ()) | set(ensemble.image_ids()))
    outputs: FusedOutputs = {}
    for image_id in targets:
        pooled = pool(ensemble, image_id)
        outputs[image_id] = fuse_image(pooled, ensemble.n_models, config)
        logger.debug("Image %s: %d detections fused into %d", image_id, len(pooled), len(outputs[image_id]))
    logger.info(
        "Fused %d images with %s: %d detections kept",
        len(targets),
        config.method.value,
        sum(len(items) for items in outputs.values()),
    )
    return outputs


def baseline(ensemble: EnsembleOutputs, model_id: ModelId = 0, image_ids: Optional[Iterable[ImageId]] = None) -> FusedOutputs:
    """Pass one member's raw detections through unchanged, as a no-fusion reference."""
    streams = {stream.model_id: stream for stream in ensemble.streams}
    if model_id not in streams:
        raise ConfigError(f"Model {model_id} is not part of the ensemble")
    stream = streams[model_id]
    targets = sorted(set(image_ids or ()) | set(ensemble.image_ids()))
    return {
        image_id: [FusedDetection.single(detection, detection.score) for detection in ranked(stream.for_image(image_id))]
        for image_id in targets
    }
