"""Two-level non-overlapping patch grids over video frames.

Level 1 divides a frame into ``l1_rows x l1_cols`` coarse patches; each
coarse patch is further divided into ``l2_rows x l2_cols`` fine patches.
Patch indices are row-major. When a dimension is not divisible by the
grid count, the last row/column of patches absorbs the remainder.
"""

from __future__ import annotations

import dataclasses

from .errors import GridIndexError


@dataclasses.dataclass(frozen=True)
class GridSpec:
    l1_rows: int = 4
    l1_cols: int = 4
    l2_rows: int = 2
    l2_cols: int = 2

    def __post_init__(self):
        for field in dataclasses.fields(self):
            if getattr(self, field.name) < 1:
                raise ValueError("%s must be >= 1" % field.name)

    @property
    def d1(self) -> int:
        return self.l1_rows * self.l1_cols

    @property
    def d2(self) -> int:
        return self.l2_rows * self.l2_cols

    def __str__(self):
        return "%dx%d:%dx%d" % (self.l1_rows, self.l1_cols, self.l2_rows, self.l2_cols)

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse 'R1xC1:R2xC2' (e.g. '4x4:2x2')."""
        try:
            l1, l2 = text.strip().split(":")
            r1, c1 = (int(v) for v in l1.split("x"))
            r2, c2 = (int(v) for v in l2.split("x"))
        except ValueError as e:
            raise ValueError("bad grid spec %r; expected R1xC1:R2xC2" % text) from e
        return cls(r1, c1, r2, c2)


@dataclasses.dataclass(frozen=True)
class PatchAddress:
    """One perturbable region: (frame, level-1 patch, level-2 sub-patch)."""

    frame: int
    l1: int
    l2: int


def _split(extent: int, count: int, index: int) -> tuple[int, int]:
    """Offset and length of segment ``index`` when ``extent`` is cut into
    ``count`` parts; the last part absorbs any remainder."""
    base = extent // count
    start = index * base
    length = base if index < count - 1 else extent - base * (count - 1)
    return start, length


def patch_rect(spec: GridSpec, height: int, width: int,
               l1: int, l2: int | None = None) -> tuple[int, int, int, int]:
    """Pixel rectangle (top, left, height, width) of a level-1 patch, or of
    the level-2 sub-patch within it when ``l2`` is given."""
    if not 0 <= l1 < spec.d1:
        raise GridIndexError("l1 index %d outside [0, %d)" % (l1, spec.d1))
    if height < spec.l1_rows * spec.l2_rows or width < spec.l1_cols * spec.l2_cols:
        raise GridIndexError(
            "frame %dx%d too small for grid %s" % (height, width, spec))
    r1, c1 = divmod(l1, spec.l1_cols)
    top, h = _split(height, spec.l1_rows, r1)
    left, w = _split(width, spec.l1_cols, c1)
    if l2 is None:
        return top, left, h, w
    if not 0 <= l2 < spec.d2:
        raise GridIndexError("l2 index %d outside [0, %d)" % (l2, spec.d2))
    r2, c2 = divmod(l2, spec.l2_cols)
    top2, h2 = _split(h, spec.l2_rows, r2)
    left2, w2 = _split(w, spec.l2_cols, c2)
    return top + top2, left + left2, h2, w2


def address_rect(spec: GridSpec, video_shape, address: PatchAddress) -> tuple[int, int, int, int]:
    """Rectangle of an address, validating the frame index too."""
    m, height, width = video_shape[0], video_shape[1], video_shape[2]
    if not 0 <= address.frame < m:
        raise GridIndexError("frame index %d outside [0, %d)" % (address.frame, m))
    return patch_rect(spec, height, width, address.l1, address.l2)
