"""The HTTP endpoint: GET /metadata and POST /classify.

Responses are canonical JSON (sorted keys, no whitespace) so identical
payloads always produce identical bytes.  Malformed requests get 400,
model failures get 500; a response is always complete, never partial.
"""

import base64
import binascii
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .models import ServedModel, resolve_model

PROBS_SUM_TOL = 1e-4


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


class RequestError(ValueError):
    """Client-side fault in a /classify payload; becomes a 400."""


def decode_classify_request(body: bytes, input_shape: tuple) -> np.ndarray:
    """Parse and validate a /classify body into a float32 video."""
    try:
        payload = json.loads(body)
    except ValueError as exc:
        raise RequestError("body is not valid JSON: %s" % exc) from exc
    if not isinstance(payload, dict):
        raise RequestError("body must be a JSON object")
    for key in ("shape", "dtype", "data_b64"):
        if key not in payload:
            raise RequestError("missing field %r" % key)
    if payload["dtype"] != "f32le":
        raise RequestError("unsupported dtype %r" % (payload["dtype"],))
    try:
        shape = tuple(int(d) for d in payload["shape"])
    except (TypeError, ValueError) as exc:
        raise RequestError("bad shape %r" % (payload["shape"],)) from exc
    if shape != tuple(input_shape):
        raise RequestError("expected shape %r, got %r"
                           % (tuple(input_shape), shape))
    try:
        raw = base64.b64decode(payload["data_b64"], validate=True)
    except (binascii.Error, TypeError) as exc:
        raise RequestError("data_b64 is not valid base64") from exc
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise RequestError("payload carries %d bytes, shape needs %d"
                           % (len(raw), expected))
    video = np.frombuffer(raw, dtype="<f4").reshape(shape)
    if not np.isfinite(video).all():
        raise RequestError("video contains non-finite values")
    if video.min() < 0.0 or video.max() > 1.0:
        raise RequestError("video values outside [0, 1]")
    return video


def classify_response(model: ServedModel, video: np.ndarray) -> bytes:
    """Run inference and build the wire response; raises on a broken model."""
    probs = np.asarray(model.predict(video), dtype=np.float64)
    if probs.shape != (model.num_classes,):
        raise RuntimeError("model returned %r probabilities, expected %d"
                           % (probs.shape, model.num_classes))
    if not np.isfinite(probs).all():
        raise RuntimeError("model returned non-finite probabilities")
    if abs(float(probs.sum()) - 1.0) > PROBS_SUM_TOL:
        raise RuntimeError("model probabilities sum to %.6f, not 1"
                           % probs.sum())
    return canonical_json({"probs": probs.tolist(),
                           "label": int(np.argmax(probs))})


class _Handler(BaseHTTPRequestHandler):
    model: ServedModel
    metadata_bytes: bytes  # frozen at server construction
    quiet = True

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    def _send(self, status: int, blob: bytes):
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _send_error(self, status: int, message: str):
        self._send(status, canonical_json({"error": message}))

    def do_GET(self):
        if self.path != "/metadata":
            self._send_error(404, "no such endpoint: %s" % self.path)
            return
        self._send(200, self.metadata_bytes)

    def do_POST(self):
        if self.path != "/classify":
            self._send_error(404, "no such endpoint: %s" % self.path)
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length)
            video = decode_classify_request(body, self.model.input_shape)
        except RequestError as exc:
            self._send_error(400, str(exc))
            return
        try:
            blob = classify_response(self.model, video)
        except Exception as exc:
            self._send_error(500, "inference failure: %s" % exc)
            return
        self._send(200, blob)


def make_server(model: ServedModel, host: str = "127.0.0.1",
                port: int = 0, quiet: bool = True) -> ThreadingHTTPServer:
    """Bind a server for ``model``; caller drives serve_forever/shutdown."""
    handler = type("Handler", (_Handler,), {
        "model": model,
        "metadata_bytes": canonical_json(model.metadata()),
        "quiet": quiet,
    })
    return ThreadingHTTPServer((host, port), handler)


def serve(model_id: str, port: int, host: str = "127.0.0.1") -> None:
    """Serve a model until interrupted; blocks the calling thread."""
    server = make_server(resolve_model(model_id), host, port, quiet=False)
    try:
        server.serve_forever()
    finally:
        server.server_close()
