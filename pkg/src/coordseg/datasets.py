"""Load COCO-instances JSON and Pascal-VOC XML into a common sample model.

Each object instance becomes one :class:`AnnotatedSample` (one prompt, one
ground-truth box). Boxes reaching past the image edge are clipped; boxes
with non-positive size are dropped; both cases append to the slice's
``warnings`` so callers can count them. Loading is order-stable: the same
files always produce the same sample order.
"""

from __future__ import annotations

import json
import random
import xml.etree.ElementTree as ET
from collections.abc import Collection
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigError, DatasetError
from .geometry import ImageDims, PixelBox
from .imaging import BinaryMask

__all__ = [
    "AnnotatedSample",
    "DatasetSlice",
    "DEFAULT_PROMPT_TEMPLATE",
    "load_coco",
    "load_voc",
    "sample_subset",
    "prompt_from_category",
]

DEFAULT_PROMPT_TEMPLATE = (
    "Provide the bounding box of the {label} as [x1,y1,x2,y2] "
    "normalized coordinates."
)


@dataclass(frozen=True)
class AnnotatedSample:
    sample_id: str
    image_path: Path
    dims: ImageDims
    category: str
    gt_box: PixelBox
    gt_mask: BinaryMask | None = None
    difficult: bool = False

    def __post_init__(self):
        if not self.category:
            raise DatasetError(f"sample {self.sample_id}: empty category")
        self.gt_box.check_bounds(self.dims)


@dataclass(frozen=True)
class DatasetSlice:
    samples: tuple[AnnotatedSample, ...]
    source: str  # "coco" | "voc"
    seed: int = 0
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DatasetError(f"duplicate sample ids: {dupes}")

    def __len__(self) -> int:
        return len(self.samples)


def _clip_box(
    x1: float, y1: float, x2: float, y2: float, dims: ImageDims
) -> tuple[PixelBox | None, bool]:
    """Clip corners to the image; None when nothing remains."""
    cx1 = max(0.0, min(float(dims.width), x1))
    cy1 = max(0.0, min(float(dims.height), y1))
    cx2 = max(0.0, min(float(dims.width), x2))
    cy2 = max(0.0, min(float(dims.height), y2))
    clipped = (cx1, cy1, cx2, cy2) != (x1, y1, x2, y2)
    if cx1 >= cx2 or cy1 >= cy2:
        return None, clipped
    return PixelBox(cx1, cy1, cx2, cy2), clipped


def load_coco(
    annotation_file,
    image_root,
    categories: Collection[str] | None = None,
) -> DatasetSlice:
    """Read a COCO-instances JSON file into a slice.

    Annotation boxes arrive as [x, y, w, h] and are converted to corner
    form [x, y, x+w, y+h]. Images without annotations contribute nothing.
    """
    annotation_file = Path(annotation_file)
    image_root = Path(image_root)
    if not annotation_file.is_file():
        raise DatasetError(f"annotation file not found: {annotation_file}")
    try:
        doc = json.loads(annotation_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed JSON in {annotation_file}: {exc}") from exc
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise DatasetError(f"{annotation_file}: missing {key!r} array")

    try:
        images = {
            img["id"]: (img["file_name"], ImageDims(img["width"], img["height"]))
            for img in doc["images"]
        }
        cat_names = {c["id"]: c["name"] for c in doc["categories"]}
    except (KeyError, TypeError, ConfigError) as exc:
        raise DatasetError(f"{annotation_file}: bad record: {exc}") from exc

    samples: list[AnnotatedSample] = []
    warnings: list[str] = []
    for i, ann in enumerate(doc["annotations"]):
        try:
            image_id = ann["image_id"]
            bbox = ann["bbox"]
            category = cat_names[ann["category_id"]]
        except (KeyError, TypeError) as exc:
            raise DatasetError(
                f"{annotation_file}: annotation {i}: bad record: {exc}"
            ) from exc
        if image_id not in images:
            raise DatasetError(
                f"{annotation_file}: annotation {i} references "
                f"unknown image id {image_id}"
            )
        if categories is not None and category not in categories:
            continue
        sample_id = f"coco:{ann.get('id', i)}"
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0 or h <= 0:
            warnings.append(f"{sample_id}: non-positive bbox {w}x{h}, skipped")
            continue
        file_name, dims = images[image_id]
        box, clipped = _clip_box(x, y, x + w, y + h, dims)
        if box is None:
            warnings.append(f"{sample_id}: bbox entirely outside image, skipped")
            continue
        if clipped:
            warnings.append(f"{sample_id}: bbox exceeds image bounds, clipped")
        samples.append(
            AnnotatedSample(
                sample_id=sample_id,
                image_path=image_root / file_name,
                dims=dims,
                category=category,
                gt_box=box,
            )
        )
    return DatasetSlice(tuple(samples), "coco", warnings=tuple(warnings))


def _voc_instance_mask(seg_path: Path, index: int, dims: ImageDims) -> BinaryMask | None:
    """Pick object ``index`` (0-based) out of a VOC SegmentationObject PNG."""
    with PILImage.open(seg_path) as im:
        arr = np.asarray(im)
    if arr.shape != (dims.height, dims.width):
        return None
    return BinaryMask(arr == index + 1)


def load_voc(
    voc_root,
    split: str,
    categories: Collection[str] | None = None,
) -> DatasetSlice:
    """Read a Pascal-VOC directory tree (Annotations + ImageSets) into a slice.

    ``bndbox`` corners are taken as-is. Objects flagged difficult are kept,
    with ``difficult=True`` on the sample. Instance masks are attached when a
    ``SegmentationObject`` PNG exists for the image.
    """
    voc_root = Path(voc_root)
    ann_dir = voc_root / "Annotations"
    if not ann_dir.is_dir():
        raise DatasetError(f"missing Annotations directory: {ann_dir}")
    split_file = voc_root / "ImageSets" / "Main" / f"{split}.txt"
    if not split_file.is_file():
        raise DatasetError(f"missing split list: {split_file}")
    image_ids = split_file.read_text(encoding="utf-8").split()

    samples: list[AnnotatedSample] = []
    warnings: list[str] = []
    for image_id in image_ids:
        xml_path = ann_dir / f"{image_id}.xml"
        if not xml_path.is_file():
            raise DatasetError(f"missing annotation file: {xml_path}")
        try:
            root = ET.parse(xml_path).getroot()
        except ET.ParseError as exc:
            raise DatasetError(f"malformed XML in {xml_path}: {exc}") from exc
        size = root.find("size")
        if size is None:
            raise DatasetError(f"{xml_path}: missing <size>")
        try:
            dims = ImageDims(
                int(size.findtext("width")), int(size.findtext("height"))
            )
        except (TypeError, ValueError, ConfigError) as exc:
            raise DatasetError(f"{xml_path}: bad <size>: {exc}") from exc
        filename = root.findtext("filename") or f"{image_id}.jpg"
        seg_path = voc_root / "SegmentationObject" / f"{image_id}.png"

        for n, obj in enumerate(root.iter("object")):
            sample_id = f"voc:{image_id}:{n}"
            name = (obj.findtext("name") or "").strip()
            if not name:
                raise DatasetError(f"{xml_path}: object {n}: missing <name>")
            if categories is not None and name not in categories:
                continue
            bnd = obj.find("bndbox")
            if bnd is None:
                raise DatasetError(f"{xml_path}: object {n}: missing <bndbox>")
            try:
                corners = tuple(
                    float(bnd.findtext(tag))
                    for tag in ("xmin", "ymin", "xmax", "ymax")
                )
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"{xml_path}: object {n}: bad <bndbox>: {exc}") from exc
            if corners[2] <= corners[0] or corners[3] <= corners[1]:
                warnings.append(f"{sample_id}: empty bndbox {corners}, skipped")
                continue
            box, clipped = _clip_box(*corners, dims)
            if box is None:
                warnings.append(f"{sample_id}: bndbox entirely outside image, skipped")
                continue
            if clipped:
                warnings.append(f"{sample_id}: bndbox exceeds image bounds, clipped")
            mask = (
                _voc_instance_mask(seg_path, n, dims) if seg_path.is_file() else None
            )
            samples.append(
                AnnotatedSample(
                    sample_id=sample_id,
                    image_path=voc_root / "JPEGImages" / filename,
                    dims=dims,
                    category=name,
                    gt_box=box,
                    gt_mask=mask,
                    difficult=(obj.findtext("difficult") or "0").strip() == "1",
                )
            )
    return DatasetSlice(tuple(samples), "voc", warnings=tuple(warnings))


def sample_subset(s: DatasetSlice, n: int, seed: int) -> DatasetSlice:
    """Seeded shuffle, then the first ``n`` samples."""
    if n > len(s.samples):
        raise DatasetError(f"subset size {n} exceeds slice size {len(s.samples)}")
    if n < 0:
        raise DatasetError(f"subset size must be >= 0, got {n}")
    order = list(s.samples)
    random.Random(seed).shuffle(order)
    return replace(s, samples=tuple(order[:n]), seed=seed)


def prompt_from_category(label: str, template: str = DEFAULT_PROMPT_TEMPLATE) -> str:
    """Substitute the label into the prompt template (exactly once)."""
    if "{label}" not in template:
        raise ConfigError(f"template missing {{label}} placeholder: {template!r}")
    return template.replace("{label}", label, 1)
