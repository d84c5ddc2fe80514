from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("ensemble-fusion")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

from .calibration import CalibratedSample, CalibrationReport, ece, match_detections, reliability_data  # noqa: E402
from .errors import ConfigError, DataError, EnsembleFusionError, FileAccessError  # noqa: E402
from .evaluation import EvalReport, ap_at_iou, ar_at_iou, evaluate  # noqa: E402
from .fusion import FusionConfig, FusionMethod, SoftMode, fuse, nms, soft_nms, wbf  # noqa: E402
from .geom import Box, iou  # noqa: E402
from .model import Detection, DetectionStream, EnsembleOutputs, FusedDetection, GroundTruth  # noqa: E402
from .synth import SynthConfig, generate  # noqa: E402
