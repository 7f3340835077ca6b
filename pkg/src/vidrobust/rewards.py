"""The five reward terms feeding the two policy updates.

Temporal terms: frame-count closeness to the budget, representativeness
of the selected embeddings, and the confidence drop. Spatial terms:
objectness of the level-1 rectangles, motion saliency of the level-2
rectangles, and the same confidence drop.

All functions are pure; given serialized trajectory inputs they
reproduce identical totals.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .features import FrameFeatures
from .grid import GridSpec, PatchAddress
from .saliency import SaliencyCache


@dataclasses.dataclass(frozen=True)
class RewardBreakdown:
    r1: float
    r2: float
    r3: float
    total: float


def confidence_reward(conf_before: float, conf_after: float) -> float:
    """exp(conf_before - conf_after): above 1 exactly when confidence drops."""
    for name, c in (("conf_before", conf_before), ("conf_after", conf_after)):
        if not 0.0 <= c <= 1.0:
            raise ValueError("%s=%r outside [0, 1]" % (name, c))
    return math.exp(conf_before - conf_after)


def _embeddings_of(features) -> np.ndarray:
    if isinstance(features, FrameFeatures):
        return features.embeddings
    return np.asarray(features, dtype=np.float64)


def temporal_reward(bits: np.ndarray, features, conf_before: float,
                    conf_after: float, budget_l: int,
                    weights=(1.0, 1.0, 1.0)) -> RewardBreakdown:
    """Reward for one temporal action over M frames.

    r1 = exp(-|sum(bits) - L| / M)
    r2 = exp(-(1/M) * sum_j min_{i selected} ||e_i - e_j||)
    r3 = exp(conf_before - conf_after)
    """
    bits = np.asarray(bits)
    embeddings = _embeddings_of(features)
    m = len(bits)
    if embeddings.shape[0] != m:
        raise ValueError("got %d bits for %d frames" % (m, embeddings.shape[0]))
    if not 0 < budget_l < m:
        raise ValueError("budget L=%d must satisfy 0 < L < M=%d" % (budget_l, m))
    selected = np.nonzero(bits)[0]
    if len(selected) == 0:
        raise ValueError("empty frame selection (the sampling guard was bypassed)")

    r1 = math.exp(-abs(int(bits.sum()) - budget_l) / m)
    diffs = embeddings[selected][:, None, :] - embeddings[None, :, :]
    nearest = np.linalg.norm(diffs, axis=2).min(axis=0)  # (M,)
    r2 = math.exp(-float(nearest.sum()) / m)
    r3 = confidence_reward(conf_before, conf_after)
    w1, w2, w3 = weights
    return RewardBreakdown(r1, r2, r3, w1 * r1 + w2 * r2 + w3 * r3)


def spatial_reward(addresses: list[PatchAddress], video: np.ndarray,
                   conf_before: float, conf_after: float, grid: GridSpec,
                   weights=(1.0, 1.0, 1.0),
                   cache: SaliencyCache | None = None) -> RewardBreakdown:
    """Reward for one spatial action (one address per selected frame).

    r1 = sum of objectness at the level-1 rectangles
    r2 = exp(sum of motion saliency at the level-2 rectangles)
    r3 = exp(conf_before - conf_after)
    """
    if cache is None:
        cache = SaliencyCache(video, grid)
    r1 = float(sum(cache.objectness(a.frame, a.l1) for a in addresses))
    s_total = float(sum(cache.saliency_value(a) for a in addresses))
    r2 = math.exp(s_total)
    r3 = confidence_reward(conf_before, conf_after)
    w1, w2, w3 = weights
    return RewardBreakdown(r1, r2, r3, w1 * r1 + w2 * r2 + w3 * r3)
