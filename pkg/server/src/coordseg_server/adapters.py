"""Model adapters behind the two inference routes.

An adapter owns one model. ``generate`` maps (image, prompt) to the raw
generated text — no parsing, no post-processing. ``segment`` maps (image,
pixel box) to a (height, width) array of foreground scores in [0, 1] (or an
already-binary bool mask); thresholding happens in the app layer so the cut
point is documented in exactly one place.

The stub adapters exist so the protocol surface can be exercised without
any model weights: the stub detector answers with a fixed coordinate string
and the stub segmenter scores the prompted box 0.9 against an 0.1
background. Real adapters import torch/transformers lazily; the server runs
without them as long as only stubs are configured.
"""

from __future__ import annotations

import threading
from typing import Protocol, runtime_checkable

import numpy as np
from PIL import Image

from .config import ServerConfig


@runtime_checkable
class DetectorAdapter(Protocol):
    def generate(self, image: Image.Image, prompt: str) -> str: ...


@runtime_checkable
class SegmenterAdapter(Protocol):
    def segment(
        self, image: Image.Image, box: tuple[int, int, int, int]
    ) -> np.ndarray: ...


class StubDetector:
    """Deterministic detector: a canned reply, or a centered half-size box."""

    def __init__(self, reply: str | None = None):
        self.reply = reply

    def generate(self, image: Image.Image, prompt: str) -> str:
        if self.reply is not None:
            return self.reply
        return "[0.250000,0.250000,0.750000,0.750000]"


class StubSegmenter:
    """Scores the prompted box at 0.9 and everything else at 0.1."""

    def segment(self, image: Image.Image, box: tuple[int, int, int, int]) -> np.ndarray:
        width, height = image.size
        scores = np.full((height, width), 0.1, dtype=np.float32)
        x1, y1, x2, y2 = box
        scores[y1:y2, x1:x2] = 0.9
        return scores


def _pick_device(device: str) -> str:
    if device != "auto":
        return device
    import torch

    return "cuda" if torch.cuda.is_available() else "cpu"


class VlmDetector:
    """Chat-style vision-language model loaded from a transformers checkpoint.

    Generation is greedy (do_sample=False) so identical requests yield
    identical text.
    """

    def __init__(self, model_path: str, device: str = "auto", max_new_tokens: int = 128):
        try:
            import torch
            from transformers import AutoModelForImageTextToText, AutoProcessor
        except ImportError as exc:  # pragma: no cover - env without models extra
            raise RuntimeError(
                "detector model support needs the [models] extra "
                "(pip install 'coordseg-server[models]')"
            ) from exc
        self._torch = torch
        self._device = _pick_device(device)
        self._processor = AutoProcessor.from_pretrained(model_path)
        self._model = AutoModelForImageTextToText.from_pretrained(model_path).to(
            self._device
        )
        self._model.eval()
        self._max_new_tokens = max_new_tokens

    def generate(self, image: Image.Image, prompt: str) -> str:  # pragma: no cover
        messages = [
            {
                "role": "user",
                "content": [{"type": "image"}, {"type": "text", "text": prompt}],
            }
        ]
        text = self._processor.apply_chat_template(messages, add_generation_prompt=True)
        inputs = self._processor(
            text=[text], images=[image.convert("RGB")], return_tensors="pt"
        ).to(self._device)
        with self._torch.no_grad():
            output = self._model.generate(
                **inputs, max_new_tokens=self._max_new_tokens, do_sample=False
            )
        new_tokens = output[:, inputs["input_ids"].shape[1] :]
        return self._processor.batch_decode(new_tokens, skip_special_tokens=True)[0]


class SamSegmenter:
    """Promptable segmenter (SAM-class) loaded from a transformers checkpoint."""

    def __init__(self, model_path: str, device: str = "auto"):
        try:
            import torch
            from transformers import SamModel, SamProcessor
        except ImportError as exc:  # pragma: no cover - env without models extra
            raise RuntimeError(
                "segmenter model support needs the [models] extra "
                "(pip install 'coordseg-server[models]')"
            ) from exc
        self._torch = torch
        self._device = _pick_device(device)
        self._processor = SamProcessor.from_pretrained(model_path)
        self._model = SamModel.from_pretrained(model_path).to(self._device)
        self._model.eval()

    def segment(
        self, image: Image.Image, box: tuple[int, int, int, int]
    ) -> np.ndarray:  # pragma: no cover
        rgb = image.convert("RGB")
        inputs = self._processor(
            rgb, input_boxes=[[list(box)]], return_tensors="pt"
        ).to(self._device)
        with self._torch.no_grad():
            outputs = self._model(**inputs, multimask_output=False)
        # upscale raw logits to the original resolution, then hand back
        # sigmoid scores so the app layer applies the one documented threshold
        logits = self._processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
            binarize=False,
        )[0]
        return self._torch.sigmoid(logits[0, 0]).numpy()


class SerializedAdapter:
    """Queue concurrent requests onto one model instance (GPU-bound)."""

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()

    def generate(self, image, prompt):
        with self._lock:
            return self._inner.generate(image, prompt)

    def segment(self, image, box):
        with self._lock:
            return self._inner.segment(image, box)


def build_detector(cfg: ServerConfig) -> DetectorAdapter:
    name = cfg.detector_model
    if name == "stub":
        return StubDetector()
    if name.startswith("stub:"):
        return StubDetector(name[len("stub:") :])
    return VlmDetector(name, cfg.device, cfg.max_new_tokens)


def build_segmenter(cfg: ServerConfig) -> SegmenterAdapter:
    name = cfg.segmenter_model
    if name == "stub":
        return StubSegmenter()
    return SamSegmenter(name, cfg.device)
