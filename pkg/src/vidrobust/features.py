"""Frozen frame-embedding backbone shared by both policies.

A small fixed-seed CNN maps any frame to a 128-d tanh embedding. The
parameters are drawn once from a recorded seed and never trained, so
embeddings are a deterministic function of pixel content alone.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import nn
from .saliency import to_gray

BACKBONE_SEED = 17
EMBED_DIM = 128

_SIDE = 64  # frames are resampled to this square before embedding


@dataclasses.dataclass
class FrameFeatures:
    """Per-frame embeddings e_i and their arithmetic mean g."""

    embeddings: np.ndarray  # (M, 128)
    global_feature: np.ndarray  # (128,)

    @property
    def n_frames(self):
        return self.embeddings.shape[0]

    def state_input(self, frame: int) -> np.ndarray:
        """Per-frame policy input: concat(e_i, g)."""
        return np.concatenate([self.embeddings[frame], self.global_feature])


def _resize_nearest(gray: np.ndarray, side: int) -> np.ndarray:
    h, w = gray.shape
    if (h, w) == (side, side):
        return gray
    rows = np.minimum((np.arange(side) + 0.5) * h / side, h - 1).astype(np.int64)
    cols = np.minimum((np.arange(side) + 0.5) * w / side, w - 1).astype(np.int64)
    return gray[np.ix_(rows, cols)]


class Backbone:
    """Three stride-2 convolutions, 2x2 mean pool, dense head, tanh."""

    def __init__(self, seed: int = BACKBONE_SEED):
        self.seed = seed
        ps = nn.ParamSet(seed)
        ps.uniform("conv1.w", (3, 3, 1, 8), fan_in=9)
        ps.zeros("conv1.b", (8,))
        ps.uniform("conv2.w", (3, 3, 8, 16), fan_in=72)
        ps.zeros("conv2.b", (16,))
        ps.uniform("conv3.w", (3, 3, 16, 32), fan_in=144)
        ps.zeros("conv3.b", (32,))
        nn.add_dense_params(ps, "head", 4 * 4 * 32, EMBED_DIM)
        ps.freeze()
        self.params = ps

    def embed_frame(self, frame: np.ndarray) -> np.ndarray:
        gray = _resize_nearest(to_gray(frame), _SIDE)
        ps = self.params
        with nn.no_grad():
            # centered input keeps the embedding sensitive to content
            # rather than to the shared positive background level
            x = nn.Tensor((gray[:, :, None] - 0.5) * 2.0)
            x = nn.relu(nn.conv2d(x, ps["conv1.w"], ps["conv1.b"], stride=2, padding="same"))
            x = nn.relu(nn.conv2d(x, ps["conv2.w"], ps["conv2.b"], stride=2, padding="same"))
            x = nn.relu(nn.conv2d(x, ps["conv3.w"], ps["conv3.b"], stride=2, padding="same"))
        pooled = x.data.reshape(4, 2, 4, 2, 32).mean(axis=(1, 3))
        flat = pooled.reshape(-1)
        head_w = self.params["head.w"].data
        head_b = self.params["head.b"].data
        return np.tanh(flat @ head_w + head_b)

    def extract_features(self, video: np.ndarray) -> FrameFeatures:
        embeddings = np.stack([self.embed_frame(video[i]) for i in range(video.shape[0])])
        return FrameFeatures(embeddings, embeddings.mean(axis=0))


def extract_features(video: np.ndarray, backbone: Backbone | None = None) -> FrameFeatures:
    if backbone is None:
        backbone = Backbone()
    return backbone.extract_features(video)
