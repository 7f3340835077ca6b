"""Synthetic moving-shapes video dataset.

Each sample is a textured shape (square, disc, or triangle) sliding
sinusoidally left-right or up-down over a lightly textured static
background. The class id encodes (shape, motion) as shape * 2 + motion,
and generation is fully determined by (dataset seed, sample index).
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import ndimage

from .video import LabeledVideo

SHAPES = ("square", "disc", "triangle")
MOTIONS = ("left-right", "up-down")

_OBJECT_SIZE = 16
# amplitude of the sinusoidal center path; small enough that the time
# average keeps the silhouette readable and frame steps suit optical flow
_SWING = 4


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 6
    frames: int = 16
    height: int = 64
    width: int = 64
    channels: int = 1
    noise_amplitude: float = 0.08
    contrast: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.num_classes <= 6:
            raise ValueError("num_classes must be in [2, 6]")
        if self.frames < 2:
            raise ValueError("frames must be >= 2")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if not 0.05 <= self.contrast <= 0.6:
            raise ValueError("contrast must be in [0.05, 0.6]")
        # half object + full swing + center jitter must fit on both axes
        margin = 2 * (_OBJECT_SIZE // 2 + _SWING + 4)
        if self.height < margin or self.width < margin:
            raise ValueError("resolution too small for the object path")

    @property
    def video_shape(self):
        return (self.frames, self.height, self.width, self.channels)


def class_name(class_id: int) -> str:
    return "%s/%s" % (SHAPES[class_id // 2], MOTIONS[class_id % 2])


def _shape_mask(shape_idx: int, size: int) -> np.ndarray:
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    if shape_idx == 0:  # square
        return np.ones((size, size), dtype=bool)
    if shape_idx == 1:  # disc
        return (yy - c) ** 2 + (xx - c) ** 2 <= (size / 2.0) ** 2
    # triangle, apex at the top
    return np.abs(xx - c) <= (yy + 1) * (size / 2.0) / size


def _smooth_noise(rng: np.random.Generator, shape, sigma: float = 2.5) -> np.ndarray:
    noise = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    std = noise.std()
    return noise / std if std > 0 else noise


def render_sample(spec: SynthSpec, class_id: int,
                  rng: np.random.Generator) -> np.ndarray:
    """One (M, H, W, C) float32 video for the given class."""
    if not 0 <= class_id < spec.num_classes:
        raise ValueError("class id %d outside [0, %d)" % (class_id, spec.num_classes))
    shape_idx, motion_idx = class_id // 2, class_id % 2
    m, h, w = spec.frames, spec.height, spec.width
    size = _OBJECT_SIZE

    background = np.clip(0.4 + spec.noise_amplitude * _smooth_noise(rng, (h, w)), 0.0, 1.0)
    # low contrast keeps the class evidence subtle enough that accumulated
    # patch noise can genuinely erase it
    texture = np.clip(0.4 + spec.contrast
                      + 0.1 * _smooth_noise(rng, (size, size), 1.5), 0.0, 1.0)
    mask = _shape_mask(shape_idx, size)

    phase = rng.uniform(0.0, 2.0 * np.pi)
    half = size // 2
    # the moving axis keeps the full swing inside the frame
    if motion_idx == 0:
        travel_extent, fixed_extent = w, h
    else:
        travel_extent, fixed_extent = h, w
    travel_mid = travel_extent / 2.0 + rng.uniform(-3.0, 3.0)
    fixed_center = int(rng.integers(half, fixed_extent - half + 1))

    video = np.empty((m, h, w), dtype=np.float64)
    for t in range(m):
        frame = background.copy()
        pos = travel_mid + _SWING * np.sin(2.0 * np.pi * t / m + phase)
        cy, cx = (fixed_center, int(round(pos))) if motion_idx == 0 \
            else (int(round(pos)), fixed_center)
        top, left = cy - half, cx - half
        region = frame[top:top + size, left:left + size]
        region[mask] = texture[mask]
        video[t] = frame
    out = video[:, :, :, None].astype(np.float32)
    if spec.channels == 3:
        out = np.repeat(out, 3, axis=3)
    return out


def make_sample(spec: SynthSpec, index: int) -> LabeledVideo:
    """Sample ``index`` of the dataset stream; class ids cycle round-robin."""
    class_id = index % spec.num_classes
    rng = np.random.default_rng([spec.seed, index])
    return LabeledVideo(render_sample(spec, class_id, rng), class_id, spec.num_classes)


def synth_dataset(spec: SynthSpec, n_train: int,
                  n_val: int) -> tuple[list[LabeledVideo], list[LabeledVideo]]:
    """Disjoint train/validation lists, bit-reproducible for a given spec."""
    if n_train < 1 or n_val < 1:
        raise ValueError("need at least one sample per split")
    train = [make_sample(spec, i) for i in range(n_train)]
    val = [make_sample(spec, n_train + i) for i in range(n_val)]
    return train, val
