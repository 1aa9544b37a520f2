"""Run the detect→parse→denormalize→segment pipeline over a dataset slice.

Per-sample work is independent and may run on a bounded worker pool;
aggregation is a single fold over results in *sample* order, so report
numbers never depend on completion order. Each finished sample is also
streamed to an optional results file (one JSON object per line) before
aggregation, letting long runs survive interruption.

Failure policy: a sample that fails anywhere in the pipeline (image I/O,
backend, parsing, validation) scores 0 in all three metric means, stays in
the denominator, and its wall-clock time still counts toward AIT. The
alternative policy ``exclude`` (drop failures from metric means) is
available on :class:`EvalConfig` and echoed in the report either way.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

from .backends import (
    Detector,
    DetectorRequest,
    HttpDetector,
    HttpSegmenter,
    BackendConfig,
    Segmenter,
    SegmenterRequest,
    detect,
    segment,
)
from .datasets import (
    DEFAULT_PROMPT_TEMPLATE,
    AnnotatedSample,
    DatasetSlice,
    prompt_from_category,
)
from .errors import ConfigError, CoordSegError
from .extraction import parse_coordinate_text
from .geometry import (
    MetricTriple,
    PixelBox,
    denormalize_box,
    metric_triple,
    normalize_box,
    rasterize_box,
)
from .imaging import GridConfig, Image, apply_grid_overlay

__all__ = [
    "EvalConfig",
    "FailureInfo",
    "PerSampleResult",
    "EvalReport",
    "evaluate_sample",
    "run_eval",
    "emit_report",
    "report_from_json",
]


@dataclass(frozen=True)
class EvalConfig:
    grid: GridConfig | None = None
    clamp_mode: str = "strict"
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    parallelism: int = 1
    seed: int = 0
    detector: BackendConfig | None = None
    segmenter: BackendConfig | None = None
    failure_scoring: str = "zero"  # "zero" | "exclude"
    grid_for_segmenter: bool = False

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.clamp_mode not in ("strict", "clamp"):
            raise ConfigError(f"clamp_mode must be strict|clamp, got {self.clamp_mode!r}")
        if self.failure_scoring not in ("zero", "exclude"):
            raise ConfigError(
                f"failure_scoring must be zero|exclude, got {self.failure_scoring!r}"
            )
        if "{label}" not in self.prompt_template:
            raise ConfigError("prompt_template missing {label} placeholder")

    def echo(self) -> dict:
        """JSON-safe snapshot of the settings that shaped a report."""
        grid = None
        if self.grid is not None:
            grid = {
                "cells_per_axis": self.grid.cells_per_axis,
                "opacity": self.grid.opacity,
                "line_width": self.grid.line_width,
                "line_color": list(self.grid.line_color),
                "draw_border": self.grid.draw_border,
            }
        return {
            "grid": grid,
            "clamp_mode": self.clamp_mode,
            "prompt_template": self.prompt_template,
            "parallelism": self.parallelism,
            "seed": self.seed,
            "failure_scoring": self.failure_scoring,
            "grid_for_segmenter": self.grid_for_segmenter,
            "detector_endpoint": self.detector.endpoint if self.detector else None,
            "segmenter_endpoint": self.segmenter.endpoint if self.segmenter else None,
        }


@dataclass(frozen=True)
class FailureInfo:
    kind: str
    message: str


@dataclass(frozen=True)
class PerSampleResult:
    sample_id: str
    predicted_box: PixelBox | None
    metrics: MetricTriple | None
    latency_s: float
    failure: FailureInfo | None

    def __post_init__(self):
        if (self.metrics is None) == (self.failure is None):
            raise ConfigError("exactly one of metrics/failure must be present")
        if self.latency_s < 0:
            raise ConfigError(f"latency must be >= 0, got {self.latency_s}")


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    method: str
    n_samples: int
    n_failures: int
    mean_iou: float
    mean_giou: float
    mean_ciou: float
    ait_s: float
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("mean_iou", "mean_giou", "mean_ciou"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ConfigError(f"{name} = {v} outside [-1, 1]")
        if self.ait_s < 0:
            raise ConfigError(f"ait_s must be >= 0, got {self.ait_s}")
        if not 0 <= self.n_failures <= self.n_samples:
            raise ConfigError(
                f"n_failures = {self.n_failures} out of range for n = {self.n_samples}"
            )


def evaluate_sample(
    s: AnnotatedSample, det: Detector, seg: Segmenter, cfg: EvalConfig
) -> PerSampleResult:
    """One full pipeline pass; never raises, failures land in the result.

    Latency spans image load through metric computation. Metrics compare
    the predicted and ground-truth boxes in normalized space, where both
    sides went through the same division by image dims.
    """
    start = time.perf_counter()
    predicted: PixelBox | None = None
    try:
        img = Image.from_file(s.image_path)
        detector_input = img
        if cfg.grid is not None:
            detector_input = apply_grid_overlay(img, cfg.grid)
        prompt = prompt_from_category(s.category, cfg.prompt_template)
        bound = det.for_sample(s) if hasattr(det, "for_sample") else det
        response = detect(
            bound, DetectorRequest(image=detector_input.to_png(), prompt=prompt)
        )
        outcome = parse_coordinate_text(response.text, dims=s.dims, mode=cfg.clamp_mode)
        predicted = denormalize_box(outcome.box, s.dims)
        raster = rasterize_box(predicted, s.dims)
        segmenter_img = detector_input if cfg.grid_for_segmenter else img
        segment(seg, SegmenterRequest(image=segmenter_img.to_png(), box=raster))
        metrics = metric_triple(outcome.box, normalize_box(s.gt_box, s.dims))
        return PerSampleResult(
            sample_id=s.sample_id,
            predicted_box=predicted,
            metrics=metrics,
            latency_s=time.perf_counter() - start,
            failure=None,
        )
    except CoordSegError as exc:
        failure = FailureInfo(kind=exc.kind, message=str(exc))
    except OSError as exc:
        failure = FailureInfo(kind="io", message=str(exc))
    return PerSampleResult(
        sample_id=s.sample_id,
        predicted_box=predicted,
        metrics=None,
        latency_s=time.perf_counter() - start,
        failure=failure,
    )


def _result_record(r: PerSampleResult) -> dict:
    return {
        "sample_id": r.sample_id,
        "predicted_box": list(r.predicted_box.as_tuple()) if r.predicted_box else None,
        "metrics": (
            {"iou": r.metrics.iou, "giou": r.metrics.giou, "ciou": r.metrics.ciou}
            if r.metrics
            else None
        ),
        "latency_s": r.latency_s,
        "failure": (
            {"kind": r.failure.kind, "message": r.failure.message}
            if r.failure
            else None
        ),
    }


def _resolve_backends(
    cfg: EvalConfig, detector: Detector | None, segmenter: Segmenter | None
) -> tuple[Detector, Segmenter]:
    if detector is None:
        if cfg.detector is None:
            raise ConfigError("no detector: pass one or set EvalConfig.detector")
        detector = HttpDetector(cfg.detector)
    if segmenter is None:
        if cfg.segmenter is None:
            raise ConfigError("no segmenter: pass one or set EvalConfig.segmenter")
        segmenter = HttpSegmenter(cfg.segmenter)
    return detector, segmenter


def run_eval(
    slice_: DatasetSlice,
    cfg: EvalConfig,
    detector: Detector | None = None,
    segmenter: Segmenter | None = None,
    results_path=None,
    method: str = "coordseg",
) -> EvalReport:
    """Evaluate every sample and fold the results into one report.

    ``detector``/``segmenter`` instances (e.g. mocks) take precedence over
    the HTTP backends configured on ``cfg``. AIT is the mean wall-clock
    pipeline time over ALL samples, failed ones included.
    """
    if not slice_.samples:
        raise ConfigError("cannot evaluate an empty dataset slice")
    det, seg = _resolve_backends(cfg, detector, segmenter)

    samples = slice_.samples
    results: list[PerSampleResult | None] = [None] * len(samples)
    sink = open(results_path, "w", encoding="utf-8") if results_path else None
    try:
        if cfg.parallelism == 1:
            for i, s in enumerate(samples):
                results[i] = evaluate_sample(s, det, seg, cfg)
                if sink:
                    sink.write(json.dumps(_result_record(results[i]), sort_keys=True) + "\n")
                    sink.flush()
        else:
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                futures = {
                    pool.submit(evaluate_sample, s, det, seg, cfg): i
                    for i, s in enumerate(samples)
                }
                for future in as_completed(futures):
                    i = futures[future]
                    results[i] = future.result()
                    if sink:
                        sink.write(
                            json.dumps(_result_record(results[i]), sort_keys=True) + "\n"
                        )
                        sink.flush()
    finally:
        if sink:
            sink.close()

    n = len(results)
    n_failures = sum(1 for r in results if r.failure is not None)
    denominator = n if cfg.failure_scoring == "zero" else max(1, n - n_failures)
    sums = [0.0, 0.0, 0.0]
    for r in results:  # sample order: independent of completion order
        if r.metrics is not None:
            sums[0] += r.metrics.iou
            sums[1] += r.metrics.giou
            sums[2] += r.metrics.ciou
    ait = sum(r.latency_s for r in results) / n
    return EvalReport(
        dataset=slice_.source,
        method=method,
        n_samples=n,
        n_failures=n_failures,
        mean_iou=sums[0] / denominator,
        mean_giou=sums[1] / denominator,
        mean_ciou=sums[2] / denominator,
        ait_s=ait,
        config=cfg.echo(),
    )


def emit_report(r: EvalReport, format: str = "table") -> bytes:
    """Render a report as an aligned table, lossless JSON, or one-row CSV."""
    if format == "table":
        headers = ["Method", "IoU", "GIoU", "CIoU", "AIT (s)"]
        row = [
            r.method,
            f"{r.mean_iou:.4f}",
            f"{r.mean_giou:.4f}",
            f"{r.mean_ciou:.4f}",
            str(int(math.floor(r.ait_s + 0.5))),
        ]
        widths = [max(len(h), len(c)) for h, c in zip(headers, row)]
        lines = [
            " | ".join(h.ljust(w) for h, w in zip(headers, widths)),
            "-+-".join("-" * w for w in widths),
            " | ".join(c.ljust(w) for c, w in zip(row, widths)),
            f"# dataset={r.dataset} n={r.n_samples} failures={r.n_failures}",
        ]
        return ("\n".join(lines) + "\n").encode("utf-8")
    if format == "json":
        payload = {
            "dataset": r.dataset,
            "method": r.method,
            "n_samples": r.n_samples,
            "n_failures": r.n_failures,
            "mean_iou": r.mean_iou,
            "mean_giou": r.mean_giou,
            "mean_ciou": r.mean_ciou,
            "ait_s": r.ait_s,
            "config": r.config,
        }
        return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["method", "dataset", "n", "iou", "giou", "ciou", "ait_s", "failures"]
        )
        writer.writerow(
            [
                r.method,
                r.dataset,
                r.n_samples,
                repr(r.mean_iou),
                repr(r.mean_giou),
                repr(r.mean_ciou),
                repr(r.ait_s),
                r.n_failures,
            ]
        )
        return buf.getvalue().encode("utf-8")
    raise ConfigError(f"unknown report format {format!r}")


def report_from_json(data: bytes | str) -> EvalReport:
    """Inverse of ``emit_report(..., "json")``."""
    payload = json.loads(data)
    try:
        return EvalReport(
            dataset=payload["dataset"],
            method=payload["method"],
            n_samples=payload["n_samples"],
            n_failures=payload["n_failures"],
            mean_iou=payload["mean_iou"],
            mean_giou=payload["mean_giou"],
            mean_ciou=payload["mean_ciou"],
            ait_s=payload["ait_s"],
            config=payload["config"],
        )
    except KeyError as exc:
        raise ConfigError(f"report JSON missing field {exc}") from exc
