import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidrobust.errors import GridIndexError
from vidrobust.grid import GridSpec, PatchAddress, address_rect, patch_rect


def test_default_grid_counts():
    g = GridSpec()
    assert (g.l1_rows, g.l1_cols, g.l2_rows, g.l2_cols) == (4, 4, 2, 2)
    assert g.d1 == 16 and g.d2 == 4


def test_parse_round_trip():
    g = GridSpec.parse("3x5:2x4")
    assert g == GridSpec(3, 5, 2, 4)
    assert str(g) == "3x5:2x4"
    assert GridSpec.parse(str(g)) == g


@pytest.mark.parametrize("text", ["", "4x4", "4x4:2", "ax4:2x2", "4x4:2x2:1x1"])
def test_parse_rejects_malformed(text):
    with pytest.raises(ValueError):
        GridSpec.parse(text)


def test_spec_rejects_nonpositive():
    with pytest.raises(ValueError):
        GridSpec(0, 4, 2, 2)


def test_even_division_rects():
    g = GridSpec(4, 4, 2, 2)
    assert patch_rect(g, 64, 64, 0) == (0, 0, 16, 16)
    assert patch_rect(g, 64, 64, 5) == (16, 16, 16, 16)
    assert patch_rect(g, 64, 64, 15) == (48, 48, 16, 16)
    assert patch_rect(g, 64, 64, 5, 3) == (24, 24, 8, 8)


def test_last_patch_absorbs_remainder():
    g = GridSpec(3, 3, 1, 1)
    # 10 = 3+3+4
    assert patch_rect(g, 10, 10, 0) == (0, 0, 3, 3)
    assert patch_rect(g, 10, 10, 8) == (6, 6, 4, 4)


def test_index_bounds():
    g = GridSpec()
    with pytest.raises(GridIndexError):
        patch_rect(g, 64, 64, 16)
    with pytest.raises(GridIndexError):
        patch_rect(g, 64, 64, -1)
    with pytest.raises(GridIndexError):
        patch_rect(g, 64, 64, 0, 4)


def test_frame_too_small():
    with pytest.raises(GridIndexError):
        patch_rect(GridSpec(4, 4, 2, 2), 7, 64, 0)


def test_address_rect_validates_frame():
    g = GridSpec()
    shape = (4, 64, 64, 1)
    assert address_rect(g, shape, PatchAddress(3, 0, 0)) == (0, 0, 8, 8)
    with pytest.raises(GridIndexError):
        address_rect(g, shape, PatchAddress(4, 0, 0))


@given(
    r1=st.integers(1, 4), c1=st.integers(1, 4),
    r2=st.integers(1, 3), c2=st.integers(1, 3),
    height=st.integers(12, 40), width=st.integers(12, 40),
)
@settings(max_examples=60, deadline=None)
def test_level2_rects_tile_every_frame(r1, c1, r2, c2, height, width):
    # the level-2 rectangles partition the frame: full cover, no overlap
    g = GridSpec(r1, c1, r2, c2)
    cover = np.zeros((height, width), dtype=int)
    for l1 in range(g.d1):
        for l2 in range(g.d2):
            top, left, h, w = patch_rect(g, height, width, l1, l2)
            assert h >= 1 and w >= 1
            cover[top:top + h, left:left + w] += 1
    assert (cover == 1).all()


@given(
    r1=st.integers(1, 4), c1=st.integers(1, 4),
    r2=st.integers(1, 3), c2=st.integers(1, 3),
    height=st.integers(12, 40), width=st.integers(12, 40),
)
@settings(max_examples=60, deadline=None)
def test_level2_rects_nest_inside_level1(r1, c1, r2, c2, height, width):
    g = GridSpec(r1, c1, r2, c2)
    for l1 in range(g.d1):
        top1, left1, h1, w1 = patch_rect(g, height, width, l1)
        for l2 in range(g.d2):
            top, left, h, w = patch_rect(g, height, width, l1, l2)
            assert top1 <= top and top + h <= top1 + h1
            assert left1 <= left and left + w <= left1 + w1
