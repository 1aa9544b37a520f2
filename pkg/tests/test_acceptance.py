"""End-to-end acceptance gate.

Each test checks exactly one release criterion and prints one
``[ACCEPT] <name>: PASS|FAIL`` line (visible under ``pytest -s``); the
per-test PASSED/FAILED column of ``pytest -v`` carries the same verdict.
Reference metric implementations here are written straight from the
formulas and deliberately share no code with coordseg.geometry.
"""

from __future__ import annotations

import json
import math
import random
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from coordseg import (
    EvalConfig,
    EvalReport,
    GridConfig,
    Image,
    ImageDims,
    MockDetector,
    NormBox,
    PixelBox,
    ReferenceSegmenter,
    apply_grid_overlay,
    ciou,
    denormalize_box,
    emit_report,
    giou,
    iou,
    load_coco,
    load_voc,
    normalize_box,
    parse_coordinate_text,
    report_from_json,
    run_eval,
    sample_subset,
)
from coordseg.errors import CoordSegError

FIXTURES = Path(__file__).parent / "fixtures"


@contextmanager
def criterion(name: str, budget_s: float | None = None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[ACCEPT] {name}: FAIL")
        raise
    elapsed = time.perf_counter() - start
    if budget_s is not None and elapsed >= budget_s:
        print(f"[ACCEPT] {name}: FAIL (took {elapsed:.2f}s, budget {budget_s}s)")
        raise AssertionError(f"{name} exceeded {budget_s}s budget: {elapsed:.2f}s")
    print(f"[ACCEPT] {name}: PASS")


# --- independent metric references (straight from the formulas) ---------


def _iou_ref(a, b):
    inter_w = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    inter_h = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = inter_w * inter_h
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def _giou_ref(a, b):
    c = (max(a[2], b[2]) - min(a[0], b[0])) * (max(a[3], b[3]) - min(a[1], b[1]))
    inter_w = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    inter_h = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = inter_w * inter_h
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return _iou_ref(a, b) - (c - union) / c


def _ciou_ref(a, b):
    i = _iou_ref(a, b)
    rho2 = ((a[0] + a[2]) / 2 - (b[0] + b[2]) / 2) ** 2 + (
        (a[1] + a[3]) / 2 - (b[1] + b[3]) / 2
    ) ** 2
    c2 = (max(a[2], b[2]) - min(a[0], b[0])) ** 2 + (
        max(a[3], b[3]) - min(a[1], b[1])
    ) ** 2
    v = (4.0 / math.pi**2) * (
        math.atan((a[2] - a[0]) / (a[3] - a[1]))
        - math.atan((b[2] - b[0]) / (b[3] - b[1]))
    ) ** 2
    alpha = 0.0 if v == 0.0 else v / ((1.0 - i) + v)
    return i - rho2 / c2 - alpha * v


def _random_int_pair(rng: random.Random, extent: int = 64):
    def one():
        x1 = rng.randrange(0, extent - 1)
        y1 = rng.randrange(0, extent - 1)
        x2 = rng.randrange(x1 + 1, extent + 1)
        y2 = rng.randrange(y1 + 1, extent + 1)
        return PixelBox(float(x1), float(y1), float(x2), float(y2))

    return one(), one()


def _raster_iou(a: PixelBox, b: PixelBox, extent: int = 64) -> float:
    grid_a = np.zeros((extent, extent), dtype=bool)
    grid_b = np.zeros((extent, extent), dtype=bool)
    grid_a[int(a.y1) : int(a.y2), int(a.x1) : int(a.x2)] = True
    grid_b[int(b.y1) : int(b.y2), int(b.x1) : int(b.x2)] = True
    inter = int(np.count_nonzero(grid_a & grid_b))
    union = int(np.count_nonzero(grid_a | grid_b))
    return inter / union


# --- criteria -----------------------------------------------------------


def test_normalization_example_exact():
    with criterion("normalization-example-exact", budget_s=1.0):
        dims = ImageDims(300, 200)
        nb = normalize_box(PixelBox(30, 60, 90, 100), dims)
        for got, want in zip(nb.as_tuple(), (0.1, 0.3, 0.3, 0.5)):
            assert abs(got - want) < 1e-12
        back = denormalize_box(nb, dims)
        for got, want in zip(back.as_tuple(), (30.0, 60.0, 90.0, 100.0)):
            assert abs(got - want) < 1e-12


def test_metric_oracle_equivalence():
    with criterion("metric-oracle-equivalence", budget_s=5.0):
        rng = random.Random(64)
        for _ in range(1000):
            a, b = _random_int_pair(rng)
            assert iou(a, b) == _raster_iou(a, b)
            ta, tb = a.as_tuple(), b.as_tuple()
            assert abs(giou(a, b) - _giou_ref(ta, tb)) < 1e-9
            assert abs(ciou(a, b) - _ciou_ref(ta, tb)) < 1e-9


def test_worked_metric_values():
    with criterion("worked-metric-values"):
        a = PixelBox(0, 0, 2, 2)
        b = PixelBox(1, 1, 3, 3)
        assert abs(iou(a, b) - 1 / 7) < 1e-9
        assert abs(giou(a, b) - (-5 / 63)) < 1e-9
        assert abs(ciou(a, b) - 2 / 63) < 1e-9


def test_metric_order_and_scale_invariance():
    with criterion("metric-order-and-scale-invariance"):
        rng = random.Random(1000)

        def one():
            x1 = rng.uniform(0.0, 50.0)
            y1 = rng.uniform(0.0, 50.0)
            return PixelBox(x1, y1, x1 + rng.uniform(0.5, 40.0), y1 + rng.uniform(0.5, 40.0))

        def scaled(box, s):
            return PixelBox(box.x1 * s, box.y1 * s, box.x2 * s, box.y2 * s)

        for _ in range(1000):
            a, b = one(), one()
            i, g, c = iou(a, b), giou(a, b), ciou(a, b)
            assert g <= i
            assert c <= i
            for s in (0.5, 3.0, 10.0):
                sa, sb = scaled(a, s), scaled(b, s)
                assert abs(iou(sa, sb) - i) < 1e-9
                assert abs(giou(sa, sb) - g) < 1e-9
                assert abs(ciou(sa, sb) - c) < 1e-9


def test_pipeline_identity(synthetic_slice):
    with criterion("pipeline-identity"):
        slice_, gt_norm = synthetic_slice
        assert len(slice_) == 20
        detector = MockDetector("perfect", gt_source=gt_norm)
        report = run_eval(slice_, EvalConfig(), detector, ReferenceSegmenter())
        assert report.mean_iou == 1.0
        assert report.mean_giou == 1.0
        assert report.mean_ciou == 1.0
        assert report.n_failures == 0
        assert report.n_samples == 20


def test_failure_scoring(synthetic_slice):
    with criterion("failure-scoring"):
        slice_, gt_norm = synthetic_slice
        known = dict(sorted(gt_norm.items())[10:])  # detector refuses the other 10
        detector = MockDetector("perfect", gt_source=known)
        report = run_eval(slice_, EvalConfig(), detector, ReferenceSegmenter())
        assert report.n_failures == 10
        assert report.mean_iou == 0.5
        assert report.n_samples == 20


def test_grid_overlay_golden():
    with criterion("grid-overlay-golden"):
        src = Image.from_file(FIXTURES / "grid" / "gray200_90.png")
        out = apply_grid_overlay(src, GridConfig(cells_per_axis=9, opacity=0.3))
        anchors = {round(i * 90 / 9) for i in range(1, 9)}
        on_line = np.zeros(90, dtype=bool)
        on_line[sorted(anchors)] = True
        arr = out.pixels
        line_mask = on_line[:, None] | on_line[None, :]
        assert (arr[line_mask] == 140).all()
        assert (arr[~line_mask] == 200).all()
        golden = (FIXTURES / "grid" / "gray200_90_grid9_op03.png").read_bytes()
        assert out.to_png() == golden


def test_coordinate_text_parsing():
    with criterion("coordinate-text-parsing"):
        for text, want in [
            ("[0.334,0.120,0.550,0.988]", (0.334, 0.120, 0.550, 0.988)),
            ("[0.36,0.2,0.53,0.8]", (0.36, 0.2, 0.53, 0.8)),
        ]:
            outcome = parse_coordinate_text(text)
            assert outcome.box == NormBox(*want)

        rng = random.Random(10_000)
        seeds = [
            "[0.1, 0.2, 0.3, 0.4]",
            "box (30, 60, 90, 100) maybe",
            "1e999 nan inf -0.5",
            "",
        ]
        dims_pool = [None, ImageDims(300, 200)]
        for _ in range(10_000):
            if rng.random() < 0.5:
                raw = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 80)))
                text = raw.decode("latin-1")
            else:
                text = list(rng.choice(seeds))
                for _ in range(rng.randrange(0, 6)):
                    pos = rng.randrange(0, len(text) + 1)
                    text.insert(pos, chr(rng.randrange(32, 127)))
                text = "".join(text)
            try:
                parse_coordinate_text(
                    text,
                    dims=rng.choice(dims_pool),
                    mode=rng.choice(("strict", "clamp")),
                )
            except CoordSegError:
                pass  # structured rejection is fine; anything else is a crash


def test_dataset_fixtures_load():
    with criterion("dataset-fixtures-load"):
        coco = load_coco(FIXTURES / "coco" / "instances.json", FIXTURES / "coco" / "images")
        assert len(coco) == 3
        by_id = {s.sample_id: s for s in coco.samples}
        first = by_id["coco:11"]
        assert first.gt_box == PixelBox(10, 20, 40, 60)  # [x,y,w,h] -> corners
        assert first.category == "car"
        assert first.dims == ImageDims(100, 80)

        voc = load_voc(FIXTURES / "voc", split="val")
        assert len(voc) == 3
        flags = {s.sample_id: s.difficult for s in voc.samples}
        assert flags["voc:0002:1"] is True

        picked = [s.sample_id for s in sample_subset(coco, 2, seed=5).samples]
        again = [s.sample_id for s in sample_subset(coco, 2, seed=5).samples]
        assert picked == again and len(picked) == 2


def test_inference_time_measurement(synthetic_slice):
    with criterion("inference-time-measurement"):
        slice_, gt_norm = synthetic_slice
        detector = MockDetector("perfect", gt_source=gt_norm, delay_s=0.05)
        report = run_eval(slice_, EvalConfig(), detector, ReferenceSegmenter())
        assert report.n_samples == 20
        assert 0.050 <= report.ait_s <= 0.080


def test_report_formatting_round_trip():
    with criterion("report-formatting-round-trip"):
        report = EvalReport(
            dataset="refcoco-val",
            method="SJTU",
            n_samples=500,
            n_failures=0,
            mean_iou=0.5958,
            mean_giou=0.5661,
            mean_ciou=0.5390,
            ait_s=7.0,
            config={"seed": 0},
        )
        table = emit_report(report, "table").decode()
        lines = table.splitlines()
        header, sep, row = lines[0], lines[1], lines[2]
        assert [h.strip() for h in header.split("|")] == [
            "Method", "IoU", "GIoU", "CIoU", "AIT (s)",
        ]
        assert set(sep) <= {"-", "+"}
        assert [c.strip() for c in row.split("|")] == [
            "SJTU", "0.5958", "0.5661", "0.5390", "7",
        ]

        blob = emit_report(report, "json")
        assert report_from_json(blob) == report
        assert json.loads(blob)["mean_iou"] == 0.5958
