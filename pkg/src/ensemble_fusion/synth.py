"""Seeded synthetic ensembles: perturb ground truth into several simulated detector streams.

Every random draw comes from a Philox counter-based generator keyed by ``(seed, model, image, box)``, so results do
not depend on the order in which models or images are generated.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ConfigError
from .geom import Box, iou
from .model import Detection, DetectionStream, EnsembleOutputs, GroundTruth
from .types import CategoryId, ImageId, ModelId
from .validation import check_non_negative, check_positive, check_unit_interval

logger = logging.getLogger(__name__)

SCORE_FLOOR = 0.01
SCORE_CEILING = 0.99
# Uniform range of false-positive scores before the miscalibration exponent
FALSE_POSITIVE_SCORES = (0.05, 0.35)
# Spawn-key slot reserved for per-image false-positive draws, distinct from any box index
_FALSE_POSITIVE_SLOT = 2**32


@dataclass(frozen=True)
class SynthConfig:
    n_models: int = 3
    seed: int = 0
    coord_noise_sigma: float = 2.0
    score_mean: float = 0.85
    score_sigma: float = 0.1
    miss_rate: float = 0.1
    false_positive_rate: float = 1.0
    # Reported confidence is quality ** gamma
    gamma: float = 1.0

    def __post_init__(self) -> None:
        check_positive("n_models", self.n_models)
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"`seed` must be a 64-bit non-negative integer, got {self.seed!r}")
        check_non_negative("coord_noise_sigma", self.coord_noise_sigma)
        check_unit_interval("score_mean", self.score_mean)
        check_non_negative("score_sigma", self.score_sigma)
        check_unit_interval("miss_rate", self.miss_rate, include_one=False)
        check_non_negative("false_positive_rate", self.false_positive_rate)
        check_positive("gamma", self.gamma)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one ``(model, image, box)`` cell."""
    spawn_key = tuple(part % 2**64 for part in key)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)))


def _score(rng: np.random.Generator, quality: float, config: SynthConfig) -> float:
    base = float(np.clip(rng.normal(config.score_mean, config.score_sigma), 0.0, 1.0))
    return float(np.clip((base * quality) ** config.gamma, SCORE_FLOOR, SCORE_CEILING))


def _jitter(rng: np.random.Generator, box: Box, sigma: float) -> Box:
    noise = rng.normal(0.0, sigma, size=4) if sigma > 0 else np.zeros(4)
    x1, y1, x2, y2 = (coordinate + float(delta) for coordinate, delta in zip(box.coordinates, noise))
    return Box(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))


def _false_positives(
    rng: np.random.Generator,
    image_id: ImageId,
    model_id: ModelId,
    bounds: Tuple[float, float],
    shapes: List[Tuple[float, float]],
    categories: List[CategoryId],
    config: SynthConfig,
) -> List[Detection]:
    count = int(rng.poisson(config.false_positive_rate)) if config.false_positive_rate > 0 else 0
    detections = []
    for _ in range(count):
        width, height = shapes[int(rng.integers(len(shapes)))]
        image_width, image_height = bounds
        x = float(rng.uniform(0.0, max(image_width - width, 0.0)))
        y = float(rng.uniform(0.0, max(image_height - height, 0.0)))
        category = categories[int(rng.integers(len(categories)))]
        low, high = FALSE_POSITIVE_SCORES
        score = float(np.clip(rng.uniform(low, high) ** config.gamma, SCORE_FLOOR, SCORE_CEILING))
        detections.append(
            Detection(Box(x, y, x + width, y + height), category, score, model_id=model_id, image_id=image_id)
        )
    return detections


def _image_bounds(ground_truth: GroundTruth, image_id: ImageId) -> Tuple[float, float]:
    info = ground_truth.images.get(image_id)
    if info is not None and info.width > 0 and info.height > 0:
        return (info.width, info.height)
    # Undeclared sizes fall back to the extent of the annotated boxes
    boxes = [truth.box for truths in ground_truth.boxes.values() for truth in truths]
    return (max((box.x2 for box in boxes), default=1.0), max((box.y2 for box in boxes), default=1.0))


def generate(ground_truth: GroundTruth, config: SynthConfig) -> EnsembleOutputs:
    """Simulate ``config.n_models`` detectors from ground truth.

    Each model sees each ground-truth box with probability ``1 - miss_rate``; seen boxes get gaussian corner noise
    and a score derived from their IoU with the source box. Poisson-distributed false positives with low scores are
    added per image, shaped like randomly chosen ground-truth boxes.
    """
    image_ids = ground_truth.image_ids()
    shapes = [(truth.box.width, truth.box.height) for image_id in image_ids for truth in ground_truth.for_image(image_id)]
    categories = ground_truth.category_ids() or sorted(ground_truth.categories)
    streams = []
    for model_id in range(config.n_models):
        detections: List[Detection] = []
        for image_id in image_ids:
            for index, truth in enumerate(ground_truth.for_image(image_id)):
                rng = substream(config.seed, model_id, image_id, index)
                if rng.random() < config.miss_rate:
                    continue
                box = _jitter(rng, truth.box, config.coord_noise_sigma)
                quality = iou(box, truth.box)
                detections.append(
                    Detection(box, truth.category, _score(rng, quality, config), model_id=model_id, image_id=image_id)
                )
            if shapes and categories:
                rng = substream(config.seed, model_id, image_id, _FALSE_POSITIVE_SLOT)
                bounds = _image_bounds(ground_truth, image_id)
                detections.extend(_false_positives(rng, image_id, model_id, bounds, shapes, categories, config))
        stream = DetectionStream.from_detections(model_id, detections)
        streams.append(stream)
        logger.debug("Model %d: %d synthetic detections", model_id, len(detections))
    logger.info("Generated %d synthetic streams over %d images", config.n_models, len(image_ids))
    return EnsembleOutputs.from_streams(streams)

