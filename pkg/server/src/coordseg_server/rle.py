"""Run-length encoder for binary masks.

Wire layout: magic ``CSRLE1``, then mask width and height as little-endian
u32, then run lengths as little-endian u32 — row-major, alternating
foreground/background, always starting with a run of zeros (length 0 when
the first pixel is set). Runs sum to exactly width*height.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CSRLE1"


def encode_rle(mask: np.ndarray) -> bytes:
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != np.bool_:
        raise ValueError(f"mask must be boolean, got dtype {mask.dtype}")
    if mask.size == 0:
        raise ValueError("mask must not be empty")
    height, width = mask.shape
    flat = mask.ravel(order="C")
    # run boundaries = positions where the value changes
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    if runs.max(initial=0) > 0xFFFFFFFF:
        raise ValueError("run length exceeds u32")
    header = MAGIC + struct.pack("<II", width, height)
    return header + struct.pack(f"<{len(runs)}I", *(int(r) for r in runs))
