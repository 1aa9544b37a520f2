"""Command-line front end.

Subcommands: ``eval``, ``overlay``, ``metrics``, ``parse``,
``dataset-inspect``. Options resolve as flag > config file > environment >
default; the config file is INI-style ``key = value`` sections, one section
per subcommand plus an optional ``[shared]`` section, with keys spelled like
the long flags (``grid-opacity = 0.3``).

Exit codes: 0 success, 1 runtime/setup failure, 2 configuration error,
3 no coordinate quadruple found (``parse``).
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

from .backends import (
    BackendConfig,
    HttpDetector,
    HttpSegmenter,
    ReferenceSegmenter,
    make_mock_detector,
)
from .datasets import (
    DEFAULT_PROMPT_TEMPLATE,
    DatasetSlice,
    load_coco,
    load_voc,
    sample_subset,
)
from .errors import ConfigError, CoordSegError, NoQuadrupleFound
from .evaluation import EvalConfig, emit_report, run_eval
from .extraction import parse_coordinate_text
from .geometry import ImageDims, PixelBox, ciou, giou, iou, normalize_box
from .imaging import GridConfig, Image, apply_grid_overlay

__all__ = [
    "main",
    "cmd_eval",
    "cmd_overlay",
    "cmd_metrics",
    "cmd_parse",
    "cmd_dataset_inspect",
]


# --- option resolution -------------------------------------------------------


class _FileConfig:
    """Config-file lookups for one subcommand, shared section as fallback."""

    def __init__(self, path: str | None, section: str):
        self._cp = None
        self._section = section
        if path:
            if not Path(path).is_file():
                raise ConfigError(f"config file not found: {path}")
            cp = configparser.ConfigParser()
            try:
                cp.read(path, encoding="utf-8")
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
            self._cp = cp

    def get(self, key: str) -> str | None:
        if self._cp is None:
            return None
        for section in (self._section, "shared"):
            if self._cp.has_option(section, key):
                return self._cp.get(section, key)
        return None


def _resolve(flag_value, file_value: str | None, default, convert):
    """flag > config file > default; file values arrive as strings."""
    if flag_value is not None:
        return flag_value
    if file_value is not None:
        try:
            return convert(file_value)
        except ValueError as exc:
            raise ConfigError(f"bad config-file value {file_value!r}: {exc}") from exc
    return default


def _to_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_box_flag(text: str) -> PixelBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(f"expected x1,y1,x2,y2 — got {text!r}")
    try:
        values = [float(p) for p in parts]
        return PixelBox(*values)
    except (ValueError, CoordSegError) as exc:
        raise ConfigError(f"bad box {text!r}: {exc}") from exc


def _parse_dims_flag(text: str) -> ImageDims:
    w, sep, h = text.partition("x")
    if not sep:
        raise ConfigError(f"expected WxH dims, got {text!r}")
    try:
        return ImageDims(int(w), int(h))
    except ValueError as exc:
        raise ConfigError(f"bad dims {text!r}: {exc}") from exc


def _parse_mock_flag(text: str) -> tuple[str, float]:
    name, sep, arg = text.partition(":")
    if name == "jitter":
        if not sep:
            raise ConfigError("jitter mock needs a sigma: --mock jitter:0.05")
        try:
            return "jitter", float(arg)
        except ValueError as exc:
            raise ConfigError(f"bad jitter sigma {arg!r}") from exc
    if name in ("perfect", "refuse") and not sep:
        return name, 0.0
    raise ConfigError(f"unknown mock behavior {text!r}")


# --- subcommands -------------------------------------------------------------


def _load_slice(dataset, annotations, root, split, categories=None) -> DatasetSlice:
    if dataset == "coco":
        if not annotations or not root:
            raise ConfigError("coco needs --annotations and --root")
        return load_coco(annotations, root, categories)
    if dataset == "voc":
        if not root:
            raise ConfigError("voc needs --root")
        return load_voc(root, split, categories)
    raise ConfigError(f"unknown dataset {dataset!r} (expected coco|voc)")


def cmd_eval(args) -> int:
    cfgfile = _FileConfig(args.config, "eval")
    dataset = _resolve(args.dataset, cfgfile.get("dataset"), None, str)
    annotations = _resolve(args.annotations, cfgfile.get("annotations"), None, str)
    root = _resolve(args.root, cfgfile.get("root"), None, str)
    split = _resolve(args.split, cfgfile.get("split"), "val", str)
    subset = _resolve(args.subset, cfgfile.get("subset"), None, int)
    seed = _resolve(args.seed, cfgfile.get("seed"), 0, int)
    output = Path(_resolve(args.output, cfgfile.get("output"), "coordseg-out", str))
    mock = _resolve(args.mock, cfgfile.get("mock"), None, str)
    detector_url = _resolve(
        args.detector_url,
        cfgfile.get("detector-url"),
        os.environ.get("COORDSEG_DETECTOR_URL"),
        str,
    )
    segmenter_url = _resolve(
        args.segmenter_url,
        cfgfile.get("segmenter-url"),
        os.environ.get("COORDSEG_SEGMENTER_URL"),
        str,
    )
    grid_cells = _resolve(args.grid, cfgfile.get("grid"), None, int)
    grid_opacity = _resolve(args.grid_opacity, cfgfile.get("grid-opacity"), 0.3, float)
    clamp = args.clamp or _resolve(None, cfgfile.get("clamp"), False, _to_bool)
    parallelism = _resolve(args.parallelism, cfgfile.get("parallelism"), 1, int)
    template = _resolve(
        args.prompt_template,
        cfgfile.get("prompt-template"),
        DEFAULT_PROMPT_TEMPLATE,
        str,
    )
    fail_on_error = args.fail_on_error or _resolve(
        None, cfgfile.get("fail-on-error"), False, _to_bool
    )

    if dataset is None:
        raise ConfigError("no dataset selected: pass --dataset coco|voc")
    if mock is None and not (detector_url and segmenter_url):
        raise ConfigError(
            "backends unset: pass --mock, or --detector-url and --segmenter-url "
            "(or COORDSEG_DETECTOR_URL / COORDSEG_SEGMENTER_URL)"
        )

    grid = None
    if grid_cells is not None:
        grid = GridConfig(cells_per_axis=grid_cells, opacity=grid_opacity)
    eval_cfg = EvalConfig(
        grid=grid,
        clamp_mode="clamp" if clamp else "strict",
        prompt_template=template,
        parallelism=parallelism,
        seed=seed,
        detector=BackendConfig(detector_url) if detector_url else None,
        segmenter=BackendConfig(segmenter_url) if segmenter_url else None,
    )

    try:
        slice_ = _load_slice(dataset, annotations, root, split)
        if subset is not None:
            slice_ = sample_subset(slice_, subset, seed)
        if not slice_.samples:
            print("dataset slice is empty", file=sys.stderr)
            return 1
    except ConfigError:
        raise
    except CoordSegError as exc:
        print(f"dataset setup failed: {exc}", file=sys.stderr)
        return 1

    detector = segmenter = None
    method = "http"
    if mock is not None:
        behavior, sigma = _parse_mock_flag(mock)
        gt_norm = {
            s.sample_id: normalize_box(s.gt_box, s.dims) for s in slice_.samples
        }
        detector = make_mock_detector(behavior, gt_norm, sigma=sigma, seed=seed)
        segmenter = ReferenceSegmenter()
        method = f"mock:{behavior}"
    else:
        detector = HttpDetector(eval_cfg.detector)
        segmenter = HttpSegmenter(eval_cfg.segmenter)

    output.mkdir(parents=True, exist_ok=True)
    report = run_eval(
        slice_,
        eval_cfg,
        detector,
        segmenter,
        results_path=output / "results.jsonl",
        method=method,
    )
    (output / "report.txt").write_bytes(emit_report(report, "table"))
    (output / "report.json").write_bytes(emit_report(report, "json"))
    (output / "report.csv").write_bytes(emit_report(report, "csv"))
    sys.stdout.write(emit_report(report, "table").decode())
    print(f"results and reports written to {output}/")
    if fail_on_error and report.n_failures:
        print(f"{report.n_failures} samples failed", file=sys.stderr)
        return 1
    return 0


def cmd_overlay(args) -> int:
    cfgfile = _FileConfig(args.config, "overlay")
    cells = _resolve(args.cells, cfgfile.get("cells"), 9, int)
    opacity = _resolve(args.opacity, cfgfile.get("opacity"), 0.3, float)
    line_width = _resolve(args.line_width, cfgfile.get("line-width"), 1, int)
    border = args.border or _resolve(None, cfgfile.get("border"), False, _to_bool)
    cfg = GridConfig(
        cells_per_axis=cells,
        opacity=opacity,
        line_width=line_width,
        draw_border=border,
    )
    try:
        img = Image.from_file(args.input)
    except (OSError, CoordSegError) as exc:
        print(f"cannot read {args.input}: {exc}", file=sys.stderr)
        return 1
    apply_grid_overlay(img, cfg).save(args.output_image)
    return 0


def cmd_metrics(args) -> int:
    a = _parse_box_flag(args.a)
    b = _parse_box_flag(args.b)
    print(f"iou={iou(a, b):.6f} giou={giou(a, b):.6f} ciou={ciou(a, b):.6f}")
    return 0


def cmd_parse(args) -> int:
    text = args.text if args.text is not None else sys.stdin.read()
    dims = _parse_dims_flag(args.dims) if args.dims else None
    try:
        outcome = parse_coordinate_text(
            text, dims=dims, mode="clamp" if args.clamp else "strict"
        )
    except NoQuadrupleFound:
        raise
    except CoordSegError as exc:
        print(f"extraction failed ({exc.kind}): {exc}", file=sys.stderr)
        return 1
    b = outcome.box
    print(f"{b.x1:.6f} {b.y1:.6f} {b.x2:.6f} {b.y2:.6f}")
    return 0


def cmd_dataset_inspect(args) -> int:
    cfgfile = _FileConfig(args.config, "dataset-inspect")
    dataset = _resolve(args.dataset, cfgfile.get("dataset"), None, str)
    if dataset is None:
        raise ConfigError("no dataset selected: pass --dataset coco|voc")
    try:
        slice_ = _load_slice(
            dataset, args.annotations, args.root, args.split or "val"
        )
    except ConfigError:
        raise
    except CoordSegError as exc:
        print(f"dataset load failed: {exc}", file=sys.stderr)
        return 1
    for s in slice_.samples:
        box = ",".join(f"{v:g}" for v in s.gt_box.as_tuple())
        flags = " difficult" if s.difficult else ""
        print(
            f"{s.sample_id}\t{s.category}\t{s.dims.width}x{s.dims.height}"
            f"\t[{box}]{flags}"
        )
    print(f"# {len(slice_.samples)} samples, {len(slice_.warnings)} warnings")
    for w in slice_.warnings:
        print(f"# warning: {w}")
    return 0


# --- parser wiring -----------------------------------------------------------


def _add_shared(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI-style config file merged under flags")
    p.add_argument("--seed", type=int, help="seed for subsetting and mocks")
    p.add_argument("--output", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordseg",
        description="Coordinate-grounded detection/segmentation evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="run the pipeline over a dataset slice")
    _add_shared(p)
    p.add_argument("--dataset", choices=["coco", "voc"])
    p.add_argument("--annotations", help="COCO instances JSON path")
    p.add_argument("--root", help="image root (coco) or VOC root directory")
    p.add_argument("--split", help="VOC split list name (default val)")
    p.add_argument("--subset", type=int, help="evaluate a seeded subset of N samples")
    p.add_argument("--mock", help="offline backends: perfect | jitter:SIGMA | refuse")
    p.add_argument("--detector-url", dest="detector_url")
    p.add_argument("--segmenter-url", dest="segmenter_url")
    p.add_argument("--grid", type=int, help="enable grid overlay with N cells per axis")
    p.add_argument("--grid-opacity", dest="grid_opacity", type=float)
    p.add_argument("--clamp", action="store_true", help="repair out-of-range boxes")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--prompt-template", dest="prompt_template")
    p.add_argument("--fail-on-error", dest="fail_on_error", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("overlay", help="write a grid-overlaid copy of an image")
    _add_shared(p)
    p.add_argument("input")
    p.add_argument("output_image", metavar="output")
    p.add_argument("--cells", type=int)
    p.add_argument("--opacity", type=float)
    p.add_argument("--line-width", dest="line_width", type=int)
    p.add_argument("--border", action="store_true")
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("metrics", help="iou/giou/ciou of two boxes")
    _add_shared(p)
    p.add_argument("--a", required=True, help="box as x1,y1,x2,y2")
    p.add_argument("--b", required=True, help="box as x1,y1,x2,y2")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("parse", help="extract a normalized box from detector text")
    _add_shared(p)
    p.add_argument("text", nargs="?", help="text to parse; stdin when omitted")
    p.add_argument("--dims", help="image dims WxH for pixel-valued text")
    p.add_argument("--clamp", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("dataset-inspect", help="list the samples a loader produces")
    _add_shared(p)
    p.add_argument("--dataset", choices=["coco", "voc"])
    p.add_argument("--annotations")
    p.add_argument("--root")
    p.add_argument("--split")
    p.set_defaults(func=cmd_dataset_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 for --help, 2 for bad flags
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NoQuadrupleFound as exc:
        print(f"no quadruple found: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CoordSegError as exc:
        print(f"error ({exc.kind}): {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
