"""Video data model, .vten binary format, frame-directory ingestion, metrics.

A video is a numpy array of shape (M, H, W, C) with values in [0, 1],
row-major and frame-major. C is 1 (grayscale) or 3 (RGB). Float32 is the
working precision for attacked videos so that file round-trips and ledger
replays can be bit-exact; float64 is accepted everywhere.

.vten layout (all integers little-endian uint32):

    bytes 0..3   magic "VTEN"
    bytes 4..7   format version (currently 1)
    bytes 8..11  rank (4 for videos)
    then         rank dims
    then         dtype code (0 = float32 little-endian)
    then         payload: prod(dims) values, row-major

The declared payload size must equal the file remainder exactly.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    FrameIngestError,
    ShapeMismatchError,
    VtenFormatError,
    VtenMagicError,
    VtenRangeError,
    VtenTruncatedError,
)

def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


VTEN_MAGIC = b"VTEN"
VTEN_VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_TO_CODE = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def check_video(video: np.ndarray) -> np.ndarray:
    """Validate the (M,H,W,C) contract; returns the array unchanged."""
    video = np.asarray(video)
    if video.ndim != 4:
        raise ShapeMismatchError("video must be (M,H,W,C); got shape %s" % (video.shape,))
    m, h, w, c = video.shape
    if m < 1 or h < 1 or w < 1 or c not in (1, 3):
        raise ShapeMismatchError("bad video dimensions %s (C must be 1 or 3)" % (video.shape,))
    if not np.all(np.isfinite(video)):
        raise ValueError("video contains non-finite values")
    if video.min() < 0.0 or video.max() > 1.0:
        bad = int(np.argmax((video < 0.0) | (video > 1.0)))
        raise ValueError("video value %r at flat index %d outside [0, 1]"
                         % (float(video.reshape(-1)[bad]), bad))
    return video


@dataclasses.dataclass
class LabeledVideo:
    """A video plus its ground-truth class."""

    video: np.ndarray
    label: int
    num_classes: int

    def __post_init__(self):
        check_video(self.video)
        if not 0 <= self.label < self.num_classes:
            raise ValueError("label %d outside [0, %d)" % (self.label, self.num_classes))


# -- .vten tensor files --------------------------------------------------


def tensor_to_bytes(array: np.ndarray) -> bytes:
    """Encode any float32/float64 tensor in .vten layout (no range check)."""
    array = np.ascontiguousarray(array)
    code = DTYPE_TO_CODE.get(array.dtype)
    if code is None:
        raise VtenFormatError("unsupported dtype %s" % array.dtype)
    parts = [
        VTEN_MAGIC,
        struct.pack("<II", VTEN_VERSION, array.ndim),
        struct.pack("<%dI" % array.ndim, *array.shape),
        struct.pack("<I", code),
        array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes(),
    ]
    return b"".join(parts)


def tensor_from_bytes(blob: bytes, name: str = "buffer") -> np.ndarray:
    """Decode a .vten tensor of any rank (no range check)."""
    if len(blob) < 4 or blob[:4] != VTEN_MAGIC:
        raise VtenMagicError("%s: bad magic %r" % (name, blob[:4]))
    if len(blob) < 12:
        raise VtenTruncatedError("%s: header truncated" % name)
    version, rank = struct.unpack_from("<II", blob, 4)
    if version != VTEN_VERSION:
        raise VtenFormatError("%s: unsupported version %d" % (name, version))
    if rank < 1 or rank > 8:
        raise VtenFormatError("%s: unsupported rank %d" % (name, rank))
    need = 12 + 4 * rank + 4
    if len(blob) < need:
        raise VtenTruncatedError("%s: header truncated" % name)
    dims = struct.unpack_from("<%dI" % rank, blob, 12)
    (code,) = struct.unpack_from("<I", blob, 12 + 4 * rank)
    dtype = DTYPE_CODES.get(code)
    if dtype is None:
        raise VtenFormatError("%s: unknown dtype code %d" % (name, code))
    payload = blob[need:]
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(payload) != expected:
        raise VtenTruncatedError(
            "%s: payload is %d bytes, header declares %d" % (name, len(payload), expected))
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def write_tensor(array: np.ndarray, path) -> None:
    """Write any float32/float64 tensor in .vten layout (no range check)."""
    Path(path).write_bytes(tensor_to_bytes(array))


def read_tensor(path) -> np.ndarray:
    """Read a .vten tensor of any rank (no range check)."""
    return tensor_from_bytes(Path(path).read_bytes(), str(path))


def write_vten(video: np.ndarray, path) -> None:
    """Write a video as .vten, stored as float32."""
    video = check_video(video)
    write_tensor(np.asarray(video, dtype=np.float32), path)


def read_vten(path) -> np.ndarray:
    """Read a video .vten; validates rank 4 and the [0, 1] value range."""
    arr = read_tensor(path)
    if arr.ndim != 4:
        raise VtenFormatError("%s: video requires rank 4, got %d" % (path, arr.ndim))
    if not np.all(np.isfinite(arr)):
        raise VtenRangeError("%s: non-finite value in payload" % path)
    bad_mask = (arr < 0.0) | (arr > 1.0)
    if bad_mask.any():
        idx = int(np.argmax(bad_mask.reshape(-1)))
        raise VtenRangeError(
            "%s: value %r at flat index %d outside [0, 1]"
            % (path, float(arr.reshape(-1)[idx]), idx))
    return arr


# -- frame directories ---------------------------------------------------

_FRAME_SUFFIXES = (".png", ".bmp", ".jpg", ".jpeg")


def ingest_frame_dir(path) -> np.ndarray:
    """Load a directory of image frames, lexicographic order, as one video.

    8-bit channel values map to [0, 1] via v / 255 (255 becomes exactly 1.0).
    """
    path = Path(path)
    names = sorted(p.name for p in path.iterdir()
                   if p.suffix.lower() in _FRAME_SUFFIXES)
    if not names:
        raise FrameIngestError("%s: no image frames found" % path)
    frames = []
    shape = None
    for name in names:
        try:
            with Image.open(path / name) as img:
                arr = np.asarray(img)
        except Exception as e:  # Pillow raises various things for corrupt files
            raise FrameIngestError("%s: unreadable frame %s (%s)" % (path, name, e)) from e
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.shape[2] == 4:
            arr = arr[:, :, :3]
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise FrameIngestError(
                "%s: frame %s has shape %s, expected %s" % (path, name, arr.shape, shape))
        frames.append(arr.astype(np.float32) / 255.0)
    return np.stack(frames)


def write_frame_dir(video: np.ndarray, path, prefix: str = "frame") -> None:
    """Dump each frame as an 8-bit PNG named ``{prefix}_0000.png`` etc."""
    video = check_video(video)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(video):
        arr = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
        Image.fromarray(arr).save(path / ("%s_%04d.png" % (prefix, i)))


def write_diff_dir(clean: np.ndarray, adv: np.ndarray, path, prefix: str = "diff") -> None:
    """Dump |adv - clean| per frame, stretched to full 8-bit range for visibility."""
    if clean.shape != adv.shape:
        raise ShapeMismatchError("shape mismatch %s vs %s" % (clean.shape, adv.shape))
    diff = np.abs(np.asarray(adv, dtype=np.float64) - np.asarray(clean, dtype=np.float64))
    peak = diff.max()
    if peak > 0:
        diff = diff / peak
    write_frame_dir(diff, path, prefix=prefix)


# -- perturbation metrics ------------------------------------------------


def map_metric(clean: np.ndarray, adv: np.ndarray) -> float:
    """Mean absolute perturbation on the 0-255 pixel scale."""
    return 255.0 * map_metric_unit(clean, adv)


def map_metric_unit(clean: np.ndarray, adv: np.ndarray) -> float:
    """Mean absolute perturbation on the [0, 1] value scale."""
    clean = np.asarray(clean)
    adv = np.asarray(adv)
    if clean.shape != adv.shape:
        raise ShapeMismatchError("shape mismatch %s vs %s" % (clean.shape, adv.shape))
    return float(np.mean(np.abs(adv.astype(np.float64) - clean.astype(np.float64))))
