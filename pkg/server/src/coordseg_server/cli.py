"""`coordseg-server` command: resolve config, build the app, run uvicorn."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .config import load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coordseg-server",
        description="Serve a detector and a promptable segmenter over HTTP.",
    )
    parser.add_argument("--config", help="INI file with a [server] section")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    parser.add_argument("--device", help="cpu, cuda, cuda:N, or auto")
    parser.add_argument(
        "--max-side",
        type=int,
        dest="max_side",
        help="downscale detector inputs whose longest side exceeds this",
    )
    parser.add_argument(
        "--detector-model",
        dest="detector_model",
        help="checkpoint path/identifier, or 'stub' / 'stub:<reply>'",
    )
    parser.add_argument(
        "--segmenter-model",
        dest="segmenter_model",
        help="checkpoint path/identifier, or 'stub'",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "host": args.host,
        "port": args.port,
        "device": args.device,
        "max_side": args.max_side,
        "detector_model": args.detector_model,
        "segmenter_model": args.segmenter_model,
    }
    try:
        cfg = load_config(args.config, overrides)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        app = create_app(cfg)
    except (RuntimeError, OSError) as exc:  # missing [models] extra, bad checkpoint
        print(f"startup error: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
