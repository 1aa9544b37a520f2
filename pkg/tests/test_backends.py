from __future__ import annotations

import http.server
import json
import threading
import time

import numpy as np
import pytest

from coordseg.backends import (
    REFUSAL_TEXT,
    BackendConfig,
    DetectorRequest,
    DetectorResponse,
    HttpDetector,
    HttpSegmenter,
    MockDetector,
    ReferenceSegmenter,
    SegmenterRequest,
    SegmenterResponse,
    detect,
    detector_request_from_wire,
    detector_request_to_wire,
    detector_response_from_wire,
    detector_response_to_wire,
    make_mock_detector,
    segment,
    segmenter_request_from_wire,
    segmenter_request_to_wire,
    segmenter_response_from_wire,
    segmenter_response_to_wire,
)
from coordseg.errors import (
    BackendTimeout,
    BoxOutOfBounds,
    ConfigError,
    MaskDimensionMismatch,
    NonSuccessStatus,
    TransportFailure,
)
from coordseg.geometry import NormBox, PixelBox
from coordseg.imaging import BinaryMask, Image, box_to_mask, encode_mask

PNG_10x8 = Image.filled(10, 8, (90, 90, 90)).to_png()


class _Sample:
    def __init__(self, sample_id):
        self.sample_id = sample_id


class StubServer:
    """Minimal scriptable HTTP peer for client tests.

    ``script(path, payload)`` returns ("drop",) to sever the connection,
    or (status, body) where a dict body is sent as JSON and a str as-is.
    """

    def __init__(self):
        self.calls: list[tuple[str, dict, dict]] = []
        self.script = lambda path, payload: (200, {})
        self.delay_s = 0.0
        outer = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length") or 0)
                payload = json.loads(self.rfile.read(length) or b"{}")
                outer.calls.append((self.path, payload, dict(self.headers)))
                if outer.delay_s:
                    time.sleep(outer.delay_s)
                result = outer.script(self.path, payload)
                if result[0] == "drop":
                    self.close_connection = True
                    self.connection.close()
                    return
                status, body = result
                data = body.encode() if isinstance(body, str) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.httpd.daemon_threads = True
        threading.Thread(target=self.httpd.serve_forever, daemon=True).start()

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub():
    server = StubServer()
    yield server
    server.close()


class TestRequestInvariants:
    def test_detector_request_needs_image(self):
        with pytest.raises(ConfigError):
            DetectorRequest(image=b"", prompt="find the cat")

    def test_detector_request_needs_prompt(self):
        with pytest.raises(ConfigError):
            DetectorRequest(image=PNG_10x8, prompt="")

    def test_unsupported_format(self):
        with pytest.raises(ConfigError):
            DetectorRequest(image=PNG_10x8, prompt="x", image_format="jpeg")

    def test_segmenter_box_must_fit_image(self):
        with pytest.raises(BoxOutOfBounds):
            SegmenterRequest(image=PNG_10x8, box=PixelBox(0, 0, 11, 8))

    def test_segmenter_rejects_non_png_bytes(self):
        with pytest.raises(ConfigError):
            SegmenterRequest(image=b"JFIF not png", box=PixelBox(0, 0, 1, 1))

    def test_segmenter_reads_png_dims(self):
        req = SegmenterRequest(image=PNG_10x8, box=PixelBox(0, 0, 10, 8))
        assert (req.image_dims().width, req.image_dims().height) == (10, 8)

    def test_backend_config_validation(self):
        with pytest.raises(ConfigError):
            BackendConfig("http://x", timeout_ms=0)
        with pytest.raises(ConfigError):
            BackendConfig("http://x", retries=-1)
        assert BackendConfig("http://x").timeout_ms == 120000
        assert BackendConfig("http://x").retries == 1


class TestMockDetector:
    GT = {"s1": NormBox(0.1, 0.3, 0.3, 0.5)}

    def req(self):
        return DetectorRequest(image=PNG_10x8, prompt="find the car")

    def test_perfect_emits_six_decimals(self):
        det = make_mock_detector("perfect", self.GT).for_sample(_Sample("s1"))
        assert det.detect(self.req()).text == "[0.100000,0.300000,0.300000,0.500000]"

    def test_unknown_sample_refuses(self):
        det = make_mock_detector("perfect", self.GT).for_sample(_Sample("s2"))
        assert det.detect(self.req()).text == REFUSAL_TEXT

    def test_refuse_behavior(self):
        det = make_mock_detector("refuse", self.GT).for_sample(_Sample("s1"))
        assert det.detect(self.req()).text == REFUSAL_TEXT

    def test_zero_sigma_jitter_equals_perfect(self):
        jit = make_mock_detector("jitter", self.GT, sigma=0.0, seed=5)
        per = make_mock_detector("perfect", self.GT)
        s = _Sample("s1")
        assert jit.for_sample(s).detect(self.req()).text == per.for_sample(s).detect(self.req()).text

    def test_jitter_is_seeded_and_order_independent(self):
        gt = {f"s{i}": NormBox(0.2, 0.2, 0.6, 0.6) for i in range(5)}
        a = make_mock_detector("jitter", gt, sigma=0.05, seed=9)
        b = make_mock_detector("jitter", gt, sigma=0.05, seed=9)
        ids = [f"s{i}" for i in range(5)]
        texts_a = {i: a.for_sample(_Sample(i)).detect(self.req()).text for i in ids}
        texts_b = {
            i: b.for_sample(_Sample(i)).detect(self.req()).text for i in reversed(ids)
        }
        assert texts_a == texts_b

    def test_different_seeds_differ(self):
        a = make_mock_detector("jitter", self.GT, sigma=0.05, seed=1)
        b = make_mock_detector("jitter", self.GT, sigma=0.05, seed=2)
        s = _Sample("s1")
        assert a.for_sample(s).detect(self.req()).text != b.for_sample(s).detect(self.req()).text

    def test_detector_ignores_image_bytes(self):
        det = make_mock_detector("perfect", self.GT).for_sample(_Sample("s1"))
        other = DetectorRequest(
            image=Image.filled(32, 32, (1, 2, 3)).to_png(), prompt="anything"
        )
        assert det.detect(self.req()).text == det.detect(other).text

    def test_invalid_configs(self):
        with pytest.raises(ConfigError):
            make_mock_detector("oracle", self.GT)
        with pytest.raises(ConfigError):
            make_mock_detector("jitter", self.GT, sigma=-0.1)


class TestReferenceSegmenter:
    def test_fills_prompted_box(self):
        resp = ReferenceSegmenter().segment(
            SegmenterRequest(image=PNG_10x8, box=PixelBox(2, 3, 5, 7))
        )
        assert resp.mask.popcount() == 12
        assert (resp.mask.width, resp.mask.height) == (10, 8)

    def test_full_image_box(self):
        resp = ReferenceSegmenter().segment(
            SegmenterRequest(image=PNG_10x8, box=PixelBox(0, 0, 10, 8))
        )
        assert resp.mask.popcount() == 80

    def test_dispatch_helpers(self):
        det = make_mock_detector("refuse")
        req = DetectorRequest(image=PNG_10x8, prompt="x")
        assert detect(det, req) == det.detect(req)
        sreq = SegmenterRequest(image=PNG_10x8, box=PixelBox(0, 0, 2, 2))
        assert segment(ReferenceSegmenter(), sreq).mask.popcount() == 4


class TestWireCodecs:
    def test_detector_request_round_trip(self):
        req = DetectorRequest(image=PNG_10x8, prompt="find the dog")
        wire = detector_request_to_wire(req)
        assert set(wire) == {"image_b64", "image_format", "prompt"}
        assert detector_request_from_wire(wire) == req

    def test_detector_response_round_trip(self):
        resp = DetectorResponse(text="[0.1,0.2,0.3,0.4]")
        assert detector_response_from_wire(detector_response_to_wire(resp)) == resp

    def test_segmenter_request_round_trip(self):
        req = SegmenterRequest(image=PNG_10x8, box=PixelBox(2, 3, 5, 7))
        wire = segmenter_request_to_wire(req)
        assert wire["box"] == [2, 3, 5, 7]
        assert segmenter_request_from_wire(wire) == req

    @pytest.mark.parametrize("fmt", ["rle", "png"])
    def test_segmenter_response_round_trip(self, fmt):
        rng = np.random.default_rng(4)
        resp = SegmenterResponse(mask=BinaryMask(rng.random((8, 10)) < 0.5))
        wire = segmenter_response_to_wire(resp, mask_format=fmt)
        assert wire["mask_format"] == fmt
        assert segmenter_response_from_wire(wire) == resp

    def test_fractional_box_rejected_on_wire(self):
        req = SegmenterRequest(image=PNG_10x8, box=PixelBox(0.5, 0, 5, 7))
        with pytest.raises(ConfigError):
            segmenter_request_to_wire(req)

    def test_box_field_must_be_integers(self):
        wire = segmenter_request_to_wire(
            SegmenterRequest(image=PNG_10x8, box=PixelBox(2, 3, 5, 7))
        )
        wire["box"] = [2.0, 3, 5, 7]
        with pytest.raises(ConfigError):
            segmenter_request_from_wire(wire)

    def test_bad_base64(self):
        with pytest.raises(ConfigError):
            detector_request_from_wire(
                {"image_b64": "!!!", "image_format": "png", "prompt": "x"}
            )

    def test_missing_fields(self):
        with pytest.raises(ConfigError):
            detector_response_from_wire({})
        with pytest.raises(ConfigError):
            segmenter_response_from_wire({"mask_format": "tiff", "mask_b64": ""})


class TestHttpDetector:
    def detector(self, stub, **cfg_kwargs):
        return HttpDetector(BackendConfig(stub.endpoint, **cfg_kwargs))

    def req(self):
        return DetectorRequest(image=PNG_10x8, prompt="find the car")

    def test_success(self, stub):
        stub.script = lambda path, payload: (200, {"text": "[0.1,0.2,0.3,0.4]"})
        resp = self.detector(stub).detect(self.req())
        assert resp == DetectorResponse("[0.1,0.2,0.3,0.4]")
        path, payload, headers = stub.calls[0]
        assert path == "/v1/detect"
        assert payload["prompt"] == "find the car"
        assert payload["image_format"] == "png"

    def test_auth_token_header(self, stub):
        stub.script = lambda path, payload: (200, {"text": "[]"})
        self.detector(stub, auth_token="sesame").detect(self.req())
        assert stub.calls[0][2].get("Authorization") == "Bearer sesame"

    def test_non_success_status_not_retried(self, stub):
        stub.script = lambda path, payload: (503, {"error": "model loading"})
        with pytest.raises(NonSuccessStatus) as e:
            self.detector(stub, retries=3).detect(self.req())
        assert e.value.status == 503
        assert "model loading" in str(e.value)
        assert len(stub.calls) == 1

    def test_transport_failure_retried_then_succeeds(self, stub):
        def script(path, payload):
            if len(stub.calls) == 1:
                return ("drop",)
            return (200, {"text": "late but fine"})

        stub.script = script
        resp = self.detector(stub, retries=1).detect(self.req())
        assert resp.text == "late but fine"
        assert len(stub.calls) == 2

    def test_transport_failure_exhausts_retries(self, stub):
        stub.script = lambda path, payload: ("drop",)
        with pytest.raises(TransportFailure):
            self.detector(stub, retries=2).detect(self.req())
        assert len(stub.calls) == 3

    def test_timeout_against_slow_stub(self, stub):
        stub.delay_s = 0.5
        stub.script = lambda path, payload: (200, {"text": "too late"})
        with pytest.raises(BackendTimeout):
            self.detector(stub, timeout_ms=1, retries=0).detect(self.req())

    def test_garbage_200_body_not_retried(self, stub):
        stub.script = lambda path, payload: (200, "certainly not json")
        with pytest.raises(TransportFailure):
            self.detector(stub, retries=3).detect(self.req())
        assert len(stub.calls) == 1

    def test_missing_text_field(self, stub):
        stub.script = lambda path, payload: (200, {"output": "oops"})
        with pytest.raises(TransportFailure):
            self.detector(stub).detect(self.req())


class TestHttpSegmenter:
    def segmenter(self, stub, **cfg_kwargs):
        return HttpSegmenter(BackendConfig(stub.endpoint, **cfg_kwargs))

    def req(self):
        return SegmenterRequest(image=PNG_10x8, box=PixelBox(2, 3, 5, 7))

    def test_success_rle(self, stub):
        mask = box_to_mask(PixelBox(2, 3, 5, 7), Image.from_png(PNG_10x8).dims)
        wire = segmenter_response_to_wire(SegmenterResponse(mask), "rle")
        stub.script = lambda path, payload: (200, wire)
        resp = self.segmenter(stub).segment(self.req())
        assert resp.mask == mask
        path, payload, _ = stub.calls[0]
        assert path == "/v1/segment"
        assert payload["box"] == [2, 3, 5, 7]

    def test_dimension_mismatch(self, stub):
        wrong = BinaryMask(np.ones((4, 4), dtype=bool))
        wire = segmenter_response_to_wire(SegmenterResponse(wrong), "rle")
        stub.script = lambda path, payload: (200, wire)
        with pytest.raises(MaskDimensionMismatch):
            self.segmenter(stub).segment(self.req())

    def test_error_status_carries_message(self, stub):
        stub.script = lambda path, payload: (400, {"error": "box outside image"})
        with pytest.raises(NonSuccessStatus) as e:
            self.segmenter(stub).segment(self.req())
        assert e.value.status == 400
        assert "box outside image" in str(e.value)
