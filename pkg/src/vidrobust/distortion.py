"""Patch distortion filters and the replayable perturbation ledger.

Every applied distortion is recorded as a PerturbationRecord carrying the
seed of its stochastic component, so replaying a ledger over the clean
video reproduces the adversarial video bit-identically (float32 mode).
Records never touch pixels outside their addressed level-2 rectangle.
"""

from __future__ import annotations

import dataclasses
import io
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import GridIndexError, LedgerError
from .grid import GridSpec, PatchAddress, address_rect


# -- distortion kinds ----------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GaussianBlur:
    """In-patch blur; padding uses edge values from inside the patch only."""

    kernel_size: int = 5
    sigma: float = 1.0

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    tag = "gb"

    def params(self):
        return (self.kernel_size, self.sigma)


@dataclasses.dataclass(frozen=True)
class DeadPixels:
    """Set a seeded random fraction of patch pixels to a fill value."""

    fill: float = 0.0
    fraction: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.fill <= 1.0:
            raise ValueError("fill must be in [0, 1]")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")

    tag = "dp"

    def params(self):
        return (self.fill, self.fraction)


@dataclasses.dataclass(frozen=True)
class GaussianNoise:
    """Add seeded zero-mean noise of fixed variance, then clamp."""

    variance: float = 0.005

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be > 0")

    tag = "gn"

    def params(self):
        return (self.variance,)


DistortionKind = GaussianBlur | DeadPixels | GaussianNoise

_KIND_BY_TAG = {"gb": GaussianBlur, "dp": DeadPixels, "gn": GaussianNoise}


def make_distortion(tag: str, *params) -> DistortionKind:
    cls = _KIND_BY_TAG.get(tag)
    if cls is None:
        raise ValueError("unknown distortion tag %r" % tag)
    return cls(*params)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian kernel (sums to 1)."""
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    k1 = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    k2 = np.outer(k1, k1)
    return k2 / k2.sum()


# -- records and ledger --------------------------------------------------


@dataclasses.dataclass
class PerturbationRecord:
    address: PatchAddress
    kind: DistortionKind
    seed: int
    iteration: int
    conf_before: float = float("nan")
    conf_after: float = float("nan")


@dataclasses.dataclass
class PerturbationLedger:
    """Ordered, replayable distortion history over one clean video."""

    grid: GridSpec
    records: list[PerturbationRecord] = dataclasses.field(default_factory=list)

    def append(self, record: PerturbationRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def rectangles(self, video_shape) -> list[tuple[int, int, int, int, int]]:
        """(frame, top, left, height, width) for every record."""
        out = []
        for rec in self.records:
            top, left, h, w = address_rect(self.grid, video_shape, rec.address)
            out.append((rec.address.frame, top, left, h, w))
        return out


# -- application and replay ----------------------------------------------


def _apply_inplace(video: np.ndarray, record: PerturbationRecord,
                   grid: GridSpec) -> None:
    top, left, h, w = address_rect(grid, video.shape, record.address)
    patch = video[record.address.frame, top:top + h, left:left + w, :]
    patch64 = patch.astype(np.float64)
    kind = record.kind
    if isinstance(kind, GaussianBlur):
        kernel = gaussian_kernel(kind.kernel_size, kind.sigma)
        blurred = np.empty_like(patch64)
        for ch in range(patch64.shape[2]):
            # mode="nearest" clamps to the patch edge, so no outside pixel leaks in
            blurred[:, :, ch] = ndimage.correlate(patch64[:, :, ch], kernel, mode="nearest")
        new = blurred
    elif isinstance(kind, DeadPixels):
        rng = np.random.default_rng(record.seed)
        n_pix = h * w
        n_dead = max(1, int(round(kind.fraction * n_pix)))
        chosen = rng.choice(n_pix, size=n_dead, replace=False)
        new = patch64.copy()
        rows, cols = np.unravel_index(chosen, (h, w))
        new[rows, cols, :] = kind.fill
    elif isinstance(kind, GaussianNoise):
        rng = np.random.default_rng(record.seed)
        noise = rng.normal(0.0, np.sqrt(kind.variance), size=patch64.shape)
        new = patch64 + noise
    else:
        raise TypeError("unknown distortion kind %r" % (kind,))
    new = np.clip(new, 0.0, 1.0)
    video[record.address.frame, top:top + h, left:left + w, :] = new.astype(video.dtype)


def apply_distortion(video: np.ndarray, record: PerturbationRecord,
                     grid: GridSpec) -> np.ndarray:
    """Return a copy of ``video`` with one record applied to its patch.

    Only pixels inside the addressed level-2 rectangle change; the result
    is clamped to [0, 1]; the record's seed fully determines any noise.
    """
    out = video.copy()
    _apply_inplace(out, record, grid)
    return out


def replay(clean: np.ndarray, ledger: PerturbationLedger,
           skip: Iterable[int] = ()) -> np.ndarray:
    """Apply all non-skipped records in original order over the clean video."""
    skip_set = set(int(i) for i in skip)
    for i in skip_set:
        if not 0 <= i < len(ledger.records):
            raise LedgerError("skip index %d outside ledger of length %d"
                              % (i, len(ledger.records)))
    video = clean.copy()
    for i, rec in enumerate(ledger.records):
        if i in skip_set:
            continue
        _apply_inplace(video, rec, ledger.grid)
    return video


def replay_into(current: np.ndarray, clean: np.ndarray,
                ledger: PerturbationLedger, address: PatchAddress,
                skip: Iterable[int] = ()) -> None:
    """Rewrite one address's rectangle of ``current`` to match
    ``replay(clean, ledger, skip)``, touching nothing else.

    Valid because level-2 rectangles of distinct addresses never overlap:
    only records at ``address`` can influence its pixels.  Lets a caller
    evaluate many single-record removals without replaying whole ledgers.
    """
    skip_set = set(int(i) for i in skip)
    for i in skip_set:
        if not 0 <= i < len(ledger.records):
            raise LedgerError("skip index %d outside ledger of length %d"
                              % (i, len(ledger.records)))
    top, left, h, w = address_rect(ledger.grid, clean.shape, address)
    f = address.frame
    current[f, top:top + h, left:left + w, :] = \
        clean[f, top:top + h, left:left + w, :]
    for i, rec in enumerate(ledger.records):
        if i in skip_set or rec.address != address:
            continue
        _apply_inplace(current, rec, ledger.grid)


# -- line-delimited serialization ----------------------------------------
#
# One record per line:
#   iteration frame l1 l2 kind params seed conf_before conf_after
# params is a comma-joined list. A header comment line carries the grid.


def dumps_ledger(ledger: PerturbationLedger) -> str:
    buf = io.StringIO()
    buf.write("# vidrobust-ledger v1 grid=%s\n" % ledger.grid)
    for rec in ledger.records:
        params = ",".join(repr(p) for p in rec.kind.params())
        buf.write("%d %d %d %d %s %s %d %r %r\n" % (
            rec.iteration, rec.address.frame, rec.address.l1, rec.address.l2,
            rec.kind.tag, params, rec.seed, rec.conf_before, rec.conf_after))
    return buf.getvalue()


def loads_ledger(text: str) -> PerturbationLedger:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# vidrobust-ledger v1 grid="):
        raise LedgerError("missing ledger header line")
    grid = GridSpec.parse(lines[0].split("grid=", 1)[1])
    ledger = PerturbationLedger(grid=grid)
    for ln in lines[1:]:
        if ln.startswith("#"):
            continue
        fields = ln.split()
        if len(fields) != 9:
            raise LedgerError("bad ledger line %r" % ln)
        it, frame, l1, l2 = (int(v) for v in fields[:4])
        tag = fields[4]
        params = tuple(float(v) for v in fields[5].split(",")) if fields[5] else ()
        if tag == "gb":
            kind = GaussianBlur(int(params[0]), params[1])
        else:
            kind = make_distortion(tag, *params)
        ledger.append(PerturbationRecord(
            address=PatchAddress(frame, l1, l2),
            kind=kind,
            seed=int(fields[6]),
            iteration=it,
            conf_before=float(fields[7]),
            conf_after=float(fields[8]),
        ))
    return ledger


def save_ledger(ledger: PerturbationLedger, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_ledger(ledger))


def load_ledger(path) -> PerturbationLedger:
    with open(path) as fh:
        return loads_ledger(fh.read())
