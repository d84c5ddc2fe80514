"""Side-by-side comparison of fusion methods: AP, AR and ECE per method, as JSON and as an aligned text table."""

import logging
import time
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from . import __version__
from .calibration import DEFAULT_BINS, DEFAULT_MATCH_IOU, CalibrationReport, ece, match_detections
from .errors import NoSamplesError
from .evaluation import EvalReport, evaluate
from .fusion import FusionConfig, baseline, fuse
from .model import EnsembleOutputs, GroundTruth
from .types import FusedOutputs

logger = logging.getLogger(__name__)

BASELINE = "none"
TABLE_COLUMNS = ("ensemble", "aggregation", "AP@50", "AP@95", "AR@50", "AR@95", "ECE", "time (s)")


@dataclass(frozen=True)
class RunReport:
    label: str
    aggregation: str
    config: Mapping[str, Any]
    evaluation: EvalReport
    # Absent when the run produced no detections to calibrate
    calibration: Optional[CalibrationReport]
    fusion_seconds: float

    def as_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "ensemble": self.label,
            "aggregation": self.aggregation,
            "config": dict(self.config),
            "evaluation": self.evaluation.as_dict(),
            "calibration": None if self.calibration is None else self.calibration.as_dict(),
        }
        if include_timing:
            data["fusion_seconds"] = self.fusion_seconds
        return data


def _measure(
    fused: FusedOutputs,
    ground_truth: GroundTruth,
    *,
    label: str,
    aggregation: str,
    config: Mapping[str, Any],
    seconds: float,
    n_bins: int,
    match_iou: float,
) -> RunReport:
    evaluation = evaluate(fused, ground_truth)
    try:
        calibration: Optional[CalibrationReport] = ece(match_detections(fused, ground_truth, match_iou), n_bins)
    except NoSamplesError:
        logger.warning("%s produced no detections; calibration is not reported", aggregation)
        calibration = None
    return RunReport(label, aggregation, config, evaluation, calibration, seconds)


def run(
    ensemble: EnsembleOutputs,
    ground_truth: GroundTruth,
    config: FusionConfig,
    *,
    label: str = "ensemble",
    n_bins: int = DEFAULT_BINS,
    match_iou: float = DEFAULT_MATCH_IOU,
) -> RunReport:
    """Fuse, evaluate and calibrate one method; only fusion is timed."""
    start = time.perf_counter()
    fused = fuse(ensemble, ground_truth.image_ids(), config)
    seconds = time.perf_counter() - start
    logger.info("%s fusion took %.3fs", config.method.value, seconds)
    return _measure(
        fused,
        ground_truth,
        label=label,
        aggregation=config.method.value,
        config=config.as_dict(),
        seconds=seconds,
        n_bins=n_bins,
        match_iou=match_iou,
    )


def run_baseline(
    ensemble: EnsembleOutputs,
    ground_truth: GroundTruth,
    *,
    model_id: int = 0,
    n_bins: int = DEFAULT_BINS,
    match_iou: float = DEFAULT_MATCH_IOU,
) -> RunReport:
    """Evaluate one member's raw detections without any fusion."""
    start = time.perf_counter()
    fused = baseline(ensemble, model_id, ground_truth.image_ids())
    seconds = time.perf_counter() - start
    return _measure(
        fused,
        ground_truth,
        label="baseline",
        aggregation=BASELINE,
        config={"model_id": model_id},
        seconds=seconds,
        n_bins=n_bins,
        match_iou=match_iou,
    )


def build_document(
    runs: Sequence[RunReport],
    *,
    inputs: Mapping[str, str],
    n_bins: int,
    match_iou: float,
    include_timing: bool = False,
) -> Dict[str, Any]:
    return {
        "tool": "ensemble-fusion",
        "version": __version__,
        "inputs": dict(inputs),
        "calibration": {"bins": n_bins, "match_iou": match_iou},
        "runs": [item.as_dict(include_timing) for item in runs],
    }


def _metric(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3f}"


def echo_config(config: Mapping[str, Any]) -> str:
    parts = []
    for key, value in config.items():
        if isinstance(value, bool):
            rendered = str(value).lower()
        elif isinstance(value, float):
            rendered = f"{value:.2f}" if round(value, 2) == value else repr(value)
        elif isinstance(value, list):
            rendered = "[" + ", ".join(f"{item:g}" for item in value) + "]"
        else:
            rendered = str(value)
        parts.append(f"{key}={rendered}")
    return " ".join(parts)


def render_table(runs: Iterable[RunReport], include_timing: bool = False) -> str:
    """Aligned text table in the column order ensemble, aggregation, AP, AR, ECE, time, followed by config echoes."""
    runs = list(runs)
    rows: List[Sequence[str]] = [TABLE_COLUMNS]
    for item in runs:
        rows.append(
            (
                item.label,
                item.aggregation,
                _metric(item.evaluation.ap_50),
                _metric(item.evaluation.ap_95),
                _metric(item.evaluation.ar_50),
                _metric(item.evaluation.ar_95),
                _metric(None if item.calibration is None else item.calibration.ece),
                f"{item.fusion_seconds:.3f}" if include_timing else "-",
            )
        )
    widths = [max(len(row[column]) for row in rows) for column in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * width for width in widths))
    lines.append("")
    for item in runs:
        lines.append(f"{item.aggregation}: {echo_config(item.config)}")
    return "\n".join(lines) + "\n"
