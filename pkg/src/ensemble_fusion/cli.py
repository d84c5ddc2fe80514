"""Command-line interface: synth, fuse, evaluate, calibrate and report.

Errors are printed as a single ``error[<category>]: <message>`` line on stderr and mapped to stable exit codes:
0 on success, 2 for configuration errors, 3 for data errors and 4 for file access errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence

from . import __version__
from .calibration import DEFAULT_BINS, DEFAULT_MATCH_IOU, ece, match_detections, reliability_data
from .errors import ConfigError, EnsembleFusionError, FileAccessError
from .evaluation import evaluate
from .fusion import FusionConfig, FusionMethod, fuse
from .io import (
    EnsembleManifest,
    file_digest,
    load_ensemble,
    load_fused,
    load_ground_truth,
    load_manifest,
    write_detections,
    write_fused,
    write_json,
    write_manifest,
    write_reliability_csv,
    write_text,
)
from .report import build_document, echo_config, render_table, run, run_baseline
from .synth import SynthConfig, generate

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
DEFAULT_METHODS = ",".join(method.value for method in FusionMethod)


class ArgumentParser(argparse.ArgumentParser):
    """Parser whose usage errors raise `ConfigError` instead of exiting."""

    def error(self, message: str) -> NoReturn:
        raise ConfigError(f"{self.prog}: {message}")


def _add_fusion_options(parser: argparse.ArgumentParser, *, with_method: bool) -> None:
    # Defaults are None so that module defaults and manifest values are only overridden when a flag is given
    group = parser.add_argument_group("fusion options")
    if with_method:
        group.add_argument("--method", help="nms, softnms or wbf (default: wbf)")
    group.add_argument("--iou-thresh", dest="iou_threshold", type=float, help="clustering/suppression IoU threshold")
    group.add_argument("--wbf-skip", dest="wbf_skip_threshold", type=float, help="WBF elimination threshold")
    group.add_argument("--soft-sigma", dest="soft_sigma", type=float, help="gaussian Soft-NMS sigma")
    group.add_argument("--soft-mode", dest="soft_mode", help="linear or gaussian")
    group.add_argument("--soft-floor", dest="soft_score_floor", type=float, help="Soft-NMS score floor")
    group.add_argument(
        "--no-conf-rescale",
        dest="conf_rescale",
        action="store_false",
        default=None,
        help="do not scale WBF scores by cluster coverage",
    )


def _fusion_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    keys = ("method", "iou_threshold", "wbf_skip_threshold", "soft_sigma", "soft_mode", "soft_score_floor", "conf_rescale")
    return {key: getattr(args, key) for key in keys if getattr(args, key, None) is not None}


def _add_calibration_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bins", type=int, default=DEFAULT_BINS, help="number of confidence bins")
    parser.add_argument("--match-iou", type=float, default=DEFAULT_MATCH_IOU, help="IoU for a detection to count as correct")


def _effective_config(manifest: EnsembleManifest, args: argparse.Namespace) -> FusionConfig:
    return manifest.fusion_config().with_overrides(_fusion_overrides(args))


def _emit(data: Any, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(json.dumps(data, indent=2, allow_nan=False) + "\n")
    else:
        write_json(out, data)


def cmd_fuse(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    config = _effective_config(manifest, args)
    ground_truth = load_ground_truth(manifest.ground_truth_path)
    fused = fuse(load_ensemble(manifest), ground_truth.image_ids(), config)
    write_fused(args.out, fused)
    sys.stdout.write(f"{config.method.value}: {echo_config(config.as_dict())}\n")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    report = evaluate(load_fused(args.fused), load_ground_truth(args.ground_truth))
    _emit(report.as_dict(), args.out)
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    samples = match_detections(load_fused(args.fused), load_ground_truth(args.ground_truth), args.match_iou)
    report = ece(samples, args.bins)
    _emit(report.as_dict(), args.out_report)
    if args.out_reliability_csv is not None:
        write_reliability_csv(args.out_reliability_csv, reliability_data(report))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        n_models=args.models,
        seed=args.seed,
        coord_noise_sigma=args.sigma,
        score_mean=args.score_mean,
        score_sigma=args.score_sigma,
        miss_rate=args.miss_rate,
        false_positive_rate=args.fp_rate,
        gamma=args.gamma,
    )
    ground_truth = load_ground_truth(args.ground_truth)
    ensemble = generate(ground_truth, config)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FileAccessError(f"{out_dir}: {exc.strerror or exc}") from None
    paths = []
    for stream in ensemble.streams:
        path = out_dir / f"model_{stream.model_id}.json"
        write_detections(path, stream)
        paths.append(path)
    write_manifest(out_dir / "manifest.json", args.ground_truth, paths)
    return 0


def _parse_methods(value: str) -> List[FusionMethod]:
    methods = [FusionMethod.parse(item) for item in value.split(",") if item.strip()]
    if not methods:
        raise ConfigError("`--methods` needs at least one fusion method")
    return methods


def cmd_report(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    base = _effective_config(manifest, args)
    methods = _parse_methods(args.methods)
    ground_truth = load_ground_truth(manifest.ground_truth_path)
    ensemble = load_ensemble(manifest)
    runs = []
    if args.baseline:
        runs.append(run_baseline(ensemble, ground_truth, n_bins=args.bins, match_iou=args.match_iou))
    for method in methods:
        config = base.with_overrides({"method": method})
        runs.append(run(ensemble, ground_truth, config, label=args.label, n_bins=args.bins, match_iou=args.match_iou))
    inputs = {"manifest": file_digest(args.manifest), "ground_truth": file_digest(manifest.ground_truth_path)}
    for model_id, path in manifest.model_paths():
        inputs[f"model_{model_id}"] = file_digest(path)
    document = build_document(runs, inputs=inputs, n_bins=args.bins, match_iou=args.match_iou, include_timing=args.timing)
    table = render_table(runs, include_timing=args.timing)
    if args.out is not None:
        write_json(args.out, document)
    if args.out_text is not None:
        write_text(args.out_text, table)
    sys.stdout.write(table)
    return 0


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="ensemble-fusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    def command(name: str, handler: Callable[[argparse.Namespace], int], summary: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=summary, description=summary)
        sub.set_defaults(handler=handler)
        return sub

    fuse_parser = command("fuse", cmd_fuse, "Fuse an ensemble described by a manifest")
    fuse_parser.add_argument("manifest")
    _add_fusion_options(fuse_parser, with_method=True)
    fuse_parser.add_argument("--out", required=True, help="fused detections JSON")

    evaluate_parser = command("evaluate", cmd_evaluate, "Compute AP and AR of fused detections")
    evaluate_parser.add_argument("fused")
    evaluate_parser.add_argument("ground_truth")
    evaluate_parser.add_argument("--out", help="report JSON (default: stdout)")

    calibrate_parser = command("calibrate", cmd_calibrate, "Compute ECE and reliability data of fused detections")
    calibrate_parser.add_argument("fused")
    calibrate_parser.add_argument("ground_truth")
    _add_calibration_options(calibrate_parser)
    calibrate_parser.add_argument("--out-report", help="report JSON (default: stdout)")
    calibrate_parser.add_argument("--out-reliability-csv", help="reliability diagram CSV")

    defaults = SynthConfig()
    synth_parser = command("synth", cmd_synth, "Generate a seeded synthetic ensemble from ground truth")
    synth_parser.add_argument("ground_truth")
    synth_parser.add_argument("--models", type=int, default=defaults.n_models)
    synth_parser.add_argument("--seed", type=int, default=defaults.seed)
    synth_parser.add_argument("--sigma", type=float, default=defaults.coord_noise_sigma, help="corner noise in pixels")
    synth_parser.add_argument("--gamma", type=float, default=defaults.gamma, help="miscalibration exponent")
    synth_parser.add_argument("--miss-rate", type=float, default=defaults.miss_rate)
    synth_parser.add_argument("--fp-rate", type=float, default=defaults.false_positive_rate)
    synth_parser.add_argument("--score-mean", type=float, default=defaults.score_mean)
    synth_parser.add_argument("--score-sigma", type=float, default=defaults.score_sigma)
    synth_parser.add_argument("--out-dir", required=True)

    report_parser = command("report", cmd_report, "Compare fusion methods side by side")
    report_parser.add_argument("manifest")
    report_parser.add_argument("--methods", default=DEFAULT_METHODS, help=f"comma-separated (default: {DEFAULT_METHODS})")
    _add_fusion_options(report_parser, with_method=False)
    _add_calibration_options(report_parser)
    report_parser.add_argument("--label", default="ensemble", help="value of the ensemble column")
    report_parser.add_argument("--baseline", action="store_true", help="add a row for model 0 without fusion")
    report_parser.add_argument("--timing", action="store_true", help="include fusion wall-clock time")
    report_parser.add_argument("--out", help="report JSON")
    report_parser.add_argument("--out-text", help="aligned text table")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    # One handler, replaced on every invocation
    package_logger = logging.getLogger("ensemble_fusion")
    package_logger.handlers[:] = [handler]
    package_logger.setLevel(level)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(args.verbose)
        logger.debug("Running `%s` with %s", args.command, vars(args))
        return args.handler(args)
    except EnsembleFusionError as exc:
        sys.stderr.write(f"error[{exc.category}]: {exc}\n")
        return exc.exit_code
