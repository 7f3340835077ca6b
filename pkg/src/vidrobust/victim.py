"""Victim classifiers behind a query-counted boundary.

A VictimHandle exposes classify(video) -> probability vector and counts
every successful classification. Built-in victims are trained with the
tensor substrate on the synthetic dataset; a remote client speaks the
wire protocol documented in serve-side terms below.
"""

from __future__ import annotations

import base64
import time

import numpy as np
import requests

from . import nn
from .checkpoint import (
    entries_to_params,
    load_checkpoint,
    params_to_entries,
    save_checkpoint,
)
from .errors import (
    RemoteProtocolError,
    RemoteTransportError,
    ShapeMismatchError,
    TrainingFailureError,
)
from .video import LabeledVideo, canonical_json, check_video

ARCHITECTURES = ("toy-avg", "toy-3d")

PROBS_SUM_TOL = 1e-4


def softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class VictimHandle:
    """Query-counted classification boundary."""

    def __init__(self, num_classes: int, input_shape: tuple[int, ...] | None):
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape) if input_shape else None
        self.query_count = 0

    def classify(self, video: np.ndarray) -> np.ndarray:
        check_video(video)
        if self.input_shape is not None and tuple(video.shape) != self.input_shape:
            raise ShapeMismatchError(
                "victim expects %r, got %r" % (self.input_shape, video.shape))
        probs = self._classify(video)
        self.query_count += 1
        return probs

    def _classify(self, video: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def label(self, video: np.ndarray) -> int:
        return int(np.argmax(self.classify(video)))


class CallableVictim(VictimHandle):
    """Wrap any video -> probs function; handy for stub scenarios."""

    def __init__(self, fn, num_classes: int, input_shape=None):
        super().__init__(num_classes, input_shape)
        self._fn = fn

    def _classify(self, video):
        return np.asarray(self._fn(video), dtype=np.float64)


# -- built-in architectures ----------------------------------------------


def _build_params(arch: str, num_classes: int, seed: int) -> nn.ParamSet:
    ps = nn.ParamSet(seed)
    if arch == "toy-avg":
        ps.uniform("conv1.w", (5, 5, 1, 24), fan_in=25)
        ps.zeros("conv1.b", (24,))
        ps.uniform("conv2.w", (3, 3, 24, 32), fan_in=216)
        ps.zeros("conv2.b", (32,))
        ps.uniform("conv3.w", (3, 3, 32, 32), fan_in=288)
        ps.zeros("conv3.b", (32,))
    elif arch == "toy-3d":
        ps.uniform("conv1.w", (3, 3, 3, 1, 12), fan_in=27)
        ps.zeros("conv1.b", (12,))
        ps.uniform("conv2.w", (3, 3, 3, 12, 24), fan_in=324)
        ps.zeros("conv2.b", (24,))
        ps.uniform("conv3.w", (3, 3, 24, 32), fan_in=216)
        ps.zeros("conv3.b", (32,))
    else:
        raise ValueError("unknown architecture %r; expected one of %r"
                         % (arch, ARCHITECTURES))
    nn.add_dense_params(ps, "fc1", 64, 64)
    nn.add_dense_params(ps, "fc2", 64, num_classes)
    return ps


def _global_max(x: nn.Tensor) -> nn.Tensor:
    """(N, H, W, C) -> (N, C) max pool via pairwise-maximum tree."""
    n, h, w, c = x.shape
    flat = nn.reshape(x, (n, h * w, c))
    d = h * w
    while d > 1:
        half = d // 2
        m = nn.maximum(flat[:, :half, :], flat[:, half:2 * half, :])
        if d % 2:
            m = nn.concat([m, flat[:, 2 * half:d, :]], axis=1)
            d = half + 1
        else:
            d = half
        flat = m
    return nn.reshape(flat, (n, c))


def _pooled_head(ps: nn.ParamSet, x: nn.Tensor) -> nn.Tensor:
    """Mean and max pooled conv features through the dense classifier."""
    mean_pool = nn.tmean(nn.tmean(x, axis=2), axis=1)
    pooled = nn.concat([mean_pool, _global_max(x)], axis=1)
    hidden = nn.relu(nn.dense(pooled, ps["fc1.w"], ps["fc1.b"]))
    return nn.dense(hidden, ps["fc2.w"], ps["fc2.b"])


def _forward_logits(arch: str, ps: nn.ParamSet, videos: nn.Tensor) -> nn.Tensor:
    """Batched logits for (N, M, H, W, C) input (C folded to gray upstream).

    Pixel values are centered before the convolutions; without that the
    shared positive background level swamps the between-sample signal.
    """
    if arch == "toy-avg":
        x = (nn.tmean(videos, axis=1) - 0.5) * 2.0  # (N, H, W, 1)
        x = nn.relu(nn.conv2d(x, ps["conv1.w"], ps["conv1.b"], stride=2, padding="same"))
        x = nn.relu(nn.conv2d(x, ps["conv2.w"], ps["conv2.b"], stride=2, padding="same"))
        x = nn.relu(nn.conv2d(x, ps["conv3.w"], ps["conv3.b"], stride=1, padding="same"))
    else:
        x = (videos - 0.5) * 2.0
        x = nn.relu(nn.conv3d(x, ps["conv1.w"], ps["conv1.b"],
                              stride=(2, 2, 2), padding="same"))
        x = nn.relu(nn.conv3d(x, ps["conv2.w"], ps["conv2.b"],
                              stride=(1, 2, 2), padding="same"))
        x = nn.tmean(x, axis=1)  # (N, H/4, W/4, 24)
        x = nn.relu(nn.conv2d(x, ps["conv3.w"], ps["conv3.b"], stride=1, padding="same"))
    return _pooled_head(ps, x)


def _as_gray_batch(videos: np.ndarray) -> np.ndarray:
    """(N, M, H, W, C) to single-channel float64."""
    videos = np.asarray(videos, dtype=np.float64)
    if videos.shape[-1] == 3:
        luma = np.array([0.299, 0.587, 0.114])
        videos = (videos @ luma)[..., None]
    return videos


class NetworkVictim(VictimHandle):
    """In-process victim backed by a trained parameter set."""

    def __init__(self, arch: str, params: nn.ParamSet, num_classes: int,
                 input_shape, val_accuracy: float = float("nan")):
        super().__init__(num_classes, input_shape)
        self.arch = arch
        self.params = params
        self.val_accuracy = val_accuracy

    def _classify(self, video):
        batch = _as_gray_batch(video[None])
        with nn.no_grad():
            logits = _forward_logits(self.arch, self.params, nn.Tensor(batch))
        return softmax_np(logits.data[0])

    def save(self, path):
        meta = {
            "kind": "victim",
            "arch": self.arch,
            "num_classes": self.num_classes,
            "input_shape": list(self.input_shape),
            "seed": self.params.seed,
            "val_accuracy": self.val_accuracy,
        }
        save_checkpoint(path, params_to_entries(self.params), meta)


def load_victim(path) -> NetworkVictim:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "victim":
        raise ValueError("%s is not a victim checkpoint" % path)
    params = _build_params(meta["arch"], int(meta["num_classes"]), int(meta["seed"]))
    entries_to_params(params, tensors)
    params.freeze()
    return NetworkVictim(meta["arch"], params, int(meta["num_classes"]),
                         tuple(meta["input_shape"]), float(meta["val_accuracy"]))


# -- training ------------------------------------------------------------


def _accuracy(arch: str, ps: nn.ParamSet, videos: np.ndarray,
              labels: np.ndarray, batch: int = 16) -> float:
    hits = 0
    with nn.no_grad():
        for start in range(0, len(videos), batch):
            chunk = videos[start:start + batch]
            logits = _forward_logits(arch, ps, nn.Tensor(chunk)).data
            hits += int((logits.argmax(axis=1) == labels[start:start + batch]).sum())
    return hits / len(videos)


def train_toy_victim(train: list[LabeledVideo], val: list[LabeledVideo],
                     arch: str = "toy-avg", seed: int = 0,
                     max_epochs: int = 60, lr: float = 5e-3,
                     batch_size: int = 16, target_accuracy: float = 0.91,
                     min_accuracy: float = 0.80, label_smoothing: float = 0.1,
                     verbose: bool = False) -> NetworkVictim:
    """Train an in-process victim to at least ``min_accuracy`` on val.

    Stops early once validation accuracy reaches ``target_accuracy``;
    keeps the best-validation parameters seen.  Label smoothing keeps
    the confidences off 1.0 so attacks see a usable gradient landscape,
    as real victims do.
    """
    num_classes = max(s.num_classes for s in train)
    if len(set(s.label for s in train)) < 2:
        raise ValueError("training set must contain at least 2 classes")
    x_train = _as_gray_batch(np.stack([s.video for s in train]))
    y_train = np.array([s.label for s in train])
    x_val = _as_gray_batch(np.stack([s.video for s in val]))
    y_val = np.array([s.label for s in val])
    input_shape = tuple(train[0].video.shape)

    if not 0.0 <= label_smoothing < 1.0:
        raise ValueError("label_smoothing must be in [0, 1)")
    ps = _build_params(arch, num_classes, seed)
    opt = nn.Adam(ps, lr=lr)
    rng = np.random.default_rng(seed)
    onehot = np.eye(num_classes)[y_train]
    if label_smoothing > 0.0:
        onehot = (onehot * (1.0 - label_smoothing)
                  + label_smoothing / num_classes)

    best_acc = 0.0
    best_state = ps.state_arrays()
    for epoch in range(max_epochs):
        if epoch == 40:
            opt.lr *= 0.4
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            logits = _forward_logits(arch, ps, nn.Tensor(x_train[idx]))
            logp = nn.log_softmax(logits, axis=-1)
            loss = -nn.tmean(nn.tsum(logp * nn.Tensor(onehot[idx]), axis=1))
            loss.backward()
            opt.step()
        acc = _accuracy(arch, ps, x_val, y_val)
        if verbose:
            print("epoch %d val accuracy %.3f" % (epoch, acc))
        if acc > best_acc:
            best_acc = acc
            best_state = ps.state_arrays()
        if acc >= target_accuracy:
            break
    ps.load_state_arrays(best_state)
    if best_acc < min_accuracy:
        raise TrainingFailureError(
            "%s reached %.1f%% validation accuracy after %d epochs, below the "
            "%.0f%% floor" % (arch, 100 * best_acc, max_epochs, 100 * min_accuracy))
    ps.freeze()
    return NetworkVictim(arch, ps, num_classes, input_shape, val_accuracy=best_acc)


# -- remote client -------------------------------------------------------


def encode_classify_request(video: np.ndarray) -> bytes:
    """Canonical request body for POST /classify."""
    check_video(video)
    data = np.ascontiguousarray(video, dtype="<f4").tobytes()
    payload = {
        "data_b64": base64.b64encode(data).decode("ascii"),
        "dtype": "f32le",
        "shape": [int(d) for d in video.shape],
    }
    return canonical_json(payload).encode("utf-8")


def validate_probs_response(body: dict, num_classes: int) -> np.ndarray:
    """Check a /classify response; raises RemoteProtocolError on violation."""
    if not isinstance(body, dict) or "probs" not in body or "label" not in body:
        raise RemoteProtocolError("response missing probs/label: %r" % (body,))
    probs = np.asarray(body["probs"], dtype=np.float64)
    if probs.shape != (num_classes,):
        raise RemoteProtocolError(
            "expected %d probabilities, got shape %r" % (num_classes, probs.shape))
    if not np.isfinite(probs).all():
        raise RemoteProtocolError("non-finite probability in response")
    total = float(probs.sum())
    if abs(total - 1.0) > PROBS_SUM_TOL:
        raise RemoteProtocolError("probabilities sum to %.6f, not 1" % total)
    if int(body["label"]) != int(np.argmax(probs)):
        raise RemoteProtocolError(
            "label %r is not argmax of probs" % (body["label"],))
    return probs


class RemoteVictim(VictimHandle):
    """Wire-protocol client; transport retries never advance the counter."""

    def __init__(self, endpoint: str, timeout: float = 10.0,
                 max_retries: int = 3, backoff: float = 0.2):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.session = requests.Session()
        meta = self._request("GET", "/metadata")
        try:
            num_classes = int(meta["num_classes"])
            input_shape = tuple(int(d) for d in meta["input_shape"])
            self.model_id = str(meta["model_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteProtocolError("bad /metadata response: %r" % (meta,)) from exc
        if len(input_shape) != 4:
            raise RemoteProtocolError("input_shape must have 4 dims, got %r"
                                      % (input_shape,))
        super().__init__(num_classes, input_shape)

    def _request(self, method: str, path: str, body: bytes | None = None) -> dict:
        url = self.endpoint + path
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.request(
                    method, url, data=body, timeout=self.timeout,
                    headers={"Content-Type": "application/json"} if body else None)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise RemoteProtocolError(
                    "%s %s returned HTTP %d: %s"
                    % (method, path, resp.status_code, resp.text[:200]))
            try:
                return resp.json()
            except ValueError as exc:
                raise RemoteProtocolError("%s %s returned non-JSON body" %
                                          (method, path)) from exc
        raise RemoteTransportError(
            "%s %s unreachable after %d attempts: %s"
            % (method, url, self.max_retries + 1, last_exc))

    def _classify(self, video):
        body = self._request("POST", "/classify", encode_classify_request(video))
        return validate_probs_response(body, self.num_classes)


def remote_victim(endpoint: str, **kwargs) -> RemoteVictim:
    return RemoteVictim(endpoint, **kwargs)
