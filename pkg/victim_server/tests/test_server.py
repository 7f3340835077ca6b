"""Wire-protocol conformance of the server against the shared goldens."""

import base64
import json
import threading
from pathlib import Path

import numpy as np
import pytest
import requests

from victim_server import make_server, resolve_model, stub_model
from victim_server.models import STUB_PROBS, ServedModel
from victim_server.server import canonical_json

GOLDENS = Path(__file__).resolve().parents[2] / "goldens"


def _start(model):
    server = make_server(model)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread, "http://127.0.0.1:%d" % server.server_port


@pytest.fixture(scope="module")
def stub_url():
    server, thread, url = _start(stub_model())
    yield url
    server.shutdown()
    thread.join(timeout=5)


def _request_payload(video: np.ndarray) -> bytes:
    data = np.ascontiguousarray(video, dtype="<f4").tobytes()
    return canonical_json({
        "data_b64": base64.b64encode(data).decode("ascii"),
        "dtype": "f32le",
        "shape": [int(d) for d in video.shape],
    })


def _classify(url, body, **overrides):
    payload = json.loads(body)
    payload.update(overrides)
    return requests.post(url + "/classify", data=canonical_json(payload),
                         timeout=5)


GOLDEN_REQUEST = (GOLDENS / "classify_request.json").read_bytes()


def test_metadata_matches_golden_and_is_constant(stub_url):
    first = requests.get(stub_url + "/metadata", timeout=5)
    assert first.status_code == 200
    assert first.content == (GOLDENS / "metadata.json").read_bytes()
    again = requests.get(stub_url + "/metadata", timeout=5)
    assert again.content == first.content


def test_golden_request_gets_golden_response_byte_for_byte(stub_url):
    resp = requests.post(stub_url + "/classify", data=GOLDEN_REQUEST,
                         timeout=5)
    assert resp.status_code == 200
    assert resp.content == (GOLDENS / "classify_response.json").read_bytes()


def test_zero_video_probs_sum_to_one(stub_url):
    body = _request_payload(np.zeros((2, 4, 4, 1), dtype=np.float32))
    resp = requests.post(stub_url + "/classify", data=body, timeout=5)
    assert resp.status_code == 200
    payload = resp.json()
    assert abs(sum(payload["probs"]) - 1.0) <= 1e-4
    assert payload["label"] == int(np.argmax(payload["probs"]))
    assert payload["probs"] == list(STUB_PROBS)


def test_repeated_classification_is_identical(stub_url):
    rng = np.random.default_rng(3)
    body = _request_payload(rng.random((2, 4, 4, 1)).astype(np.float32))
    blobs = {requests.post(stub_url + "/classify", data=body, timeout=5).content
             for _ in range(3)}
    assert len(blobs) == 1


@pytest.mark.parametrize("mutate, hint", [
    (dict(shape=[1, 4, 4, 1]), "shape"),
    (dict(dtype="f64le"), "dtype"),
    (dict(data_b64="!!not base64!!"), "base64"),
    (dict(data_b64=base64.b64encode(b"\x00" * 12).decode()), "bytes"),
])
def test_malformed_payload_is_rejected(stub_url, mutate, hint):
    resp = _classify(stub_url, GOLDEN_REQUEST, **mutate)
    assert resp.status_code == 400
    assert hint in resp.json()["error"]


def test_non_json_body_is_rejected(stub_url):
    resp = requests.post(stub_url + "/classify", data=b"{nope", timeout=5)
    assert resp.status_code == 400


def test_missing_field_is_rejected(stub_url):
    payload = json.loads(GOLDEN_REQUEST)
    del payload["data_b64"]
    resp = requests.post(stub_url + "/classify",
                         data=canonical_json(payload), timeout=5)
    assert resp.status_code == 400
    assert "data_b64" in resp.json()["error"]


def test_out_of_range_values_are_rejected(stub_url):
    video = np.full((2, 4, 4, 1), 1.5, dtype=np.float32)
    resp = requests.post(stub_url + "/classify",
                         data=_request_payload(video), timeout=5)
    assert resp.status_code == 400
    assert "[0, 1]" in resp.json()["error"]


def test_unknown_endpoint_is_404(stub_url):
    assert requests.get(stub_url + "/nope", timeout=5).status_code == 404
    assert requests.post(stub_url + "/nope", data=b"{}",
                         timeout=5).status_code == 404


def _broken_model(predict) -> ServedModel:
    return ServedModel("broken", (2, 4, 4, 1), ("a", "b"), "none", predict)


@pytest.mark.parametrize("predict, hint", [
    (lambda v: (_ for _ in ()).throw(RuntimeError("exploded")), "exploded"),
    (lambda v: np.array([0.9, 0.6]), "sum"),
    (lambda v: np.array([np.nan, 1.0]), "non-finite"),
    (lambda v: np.array([1.0]), "expected 2"),
])
def test_model_failure_is_500_never_partial(predict, hint):
    server, thread, url = _start(_broken_model(predict))
    try:
        resp = requests.post(url + "/classify", data=GOLDEN_REQUEST, timeout=5)
        assert resp.status_code == 500
        body = resp.json()  # complete JSON error, not a truncated response
        assert body["error"].startswith("inference failure")
        assert hint in body["error"]
    finally:
        server.shutdown()
        thread.join(timeout=5)


def test_resolve_model_stub_and_dotted_factory(tmp_path, monkeypatch):
    assert resolve_model("stub").model_id == "stub"
    (tmp_path / "fakemod.py").write_text(
        "from victim_server import stub_model\n\n\n"
        "def factory():\n"
        "    return stub_model()\n")
    monkeypatch.syspath_prepend(str(tmp_path))
    assert resolve_model("fakemod:factory").model_id == "stub"
    with pytest.raises(ValueError, match="cannot load"):
        resolve_model("fakemod:missing")
    with pytest.raises(ValueError, match="unknown model id"):
        resolve_model("nope")


def test_cli_rejects_unknown_model():
    from victim_server.__main__ import main
    assert main(["--model", "nope", "--port", "0"]) == 2
