"""Query-free spatial signals: edge-group objectness and motion saliency.

Edge groups come from Sobel gradients thresholded by Otsu's method and
linked into 8-connected components whose member orientations stay within
pi/4 of each neighbor. Motion saliency maps Lucas-Kanade flow magnitude
through tanh into [0, 1].
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatchError
from .grid import GridSpec, PatchAddress, address_rect, patch_rect

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)

LK_WINDOW = 5
LK_MIN_EIGENVALUE = 1e-4

ORIENTATION_SPLIT = np.pi / 4.0


def to_gray(frame: np.ndarray) -> np.ndarray:
    """(H, W, C) or (H, W) frame to float64 (H, W) luma."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        return frame
    if frame.ndim == 3 and frame.shape[2] == 1:
        return frame[:, :, 0]
    if frame.ndim == 3 and frame.shape[2] == 3:
        return frame @ LUMA_WEIGHTS
    raise ShapeMismatchError("expected (H, W) or (H, W, {1|3}) frame, got %r"
                             % (frame.shape,))


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Threshold maximizing between-class variance of a histogram split."""
    values = np.asarray(values, dtype=np.float64).ravel()
    vmax = float(values.max()) if values.size else 0.0
    if vmax <= 0.0:
        return 0.0
    hist, edges = np.histogram(values, bins=bins, range=(0.0, vmax))
    p = hist.astype(np.float64) / values.size
    centers = 0.5 * (edges[:-1] + edges[1:])
    omega = np.cumsum(p)
    mu = np.cumsum(p * centers)
    mu_total = mu[-1]
    denom = omega * (1.0 - omega)
    sigma_b = np.full(bins, -1.0)
    ok = denom > 0
    sigma_b[ok] = (mu_total * omega[ok] - mu[ok]) ** 2 / denom[ok]
    if not ok.any():
        return 0.0
    return float(centers[int(np.argmax(sigma_b))])


# -- edge groups ---------------------------------------------------------


@dataclasses.dataclass
class EdgeGroup:
    rows: np.ndarray
    cols: np.ndarray
    u: float  # summed edge magnitude of member pixels

    def __len__(self):
        return len(self.rows)


@dataclasses.dataclass
class EdgeGroupSet:
    magnitude: np.ndarray  # (H, W)
    orientation: np.ndarray  # (H, W), in [0, pi)
    labels: np.ndarray  # (H, W) int, -1 for non-edge pixels
    groups: list[EdgeGroup]

    @property
    def shape(self):
        return self.magnitude.shape


def _orientation_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Circular distance between orientations on the period-pi circle."""
    d = np.abs(a - b)
    return np.minimum(d, np.pi - d)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]


def edge_groups(frame: np.ndarray) -> EdgeGroupSet:
    """Orientation-coherent edge components of one frame.

    Edge pixels are those whose Sobel magnitude exceed the Otsu threshold.
    Two 8-adjacent edge pixels join the same group only if their gradient
    orientations differ by at most pi/4 (modulo pi).
    """
    gray = to_gray(frame)
    gx = ndimage.sobel(gray, axis=1, mode="reflect")
    gy = ndimage.sobel(gray, axis=0, mode="reflect")
    magnitude = np.hypot(gx, gy)
    orientation = np.mod(np.arctan2(gy, gx), np.pi)
    threshold = otsu_threshold(magnitude)
    mask = magnitude > threshold

    h, w = gray.shape
    labels = np.full((h, w), -1, dtype=np.int64)
    rows, cols = np.nonzero(mask)
    n = len(rows)
    if n == 0:
        return EdgeGroupSet(magnitude, orientation, labels, [])

    index = np.full((h, w), -1, dtype=np.int64)
    index[rows, cols] = np.arange(n)
    uf = _UnionFind(n)
    # forward half of the 8-neighborhood; the reverse pairs are redundant
    for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
        r2 = rows + dr
        c2 = cols + dc
        ok = (r2 >= 0) & (r2 < h) & (c2 >= 0) & (c2 < w)
        ok[ok] &= mask[r2[ok], c2[ok]]
        a = np.nonzero(ok)[0]
        if len(a) == 0:
            continue
        gap = _orientation_gap(orientation[rows[a], cols[a]],
                               orientation[r2[a], c2[a]])
        for i in a[gap <= ORIENTATION_SPLIT]:
            uf.union(int(i), int(index[rows[i] + dr, cols[i] + dc]))

    roots = np.array([uf.find(int(i)) for i in range(n)])
    group_ids = {}
    for root in roots:
        if root not in group_ids:
            group_ids[root] = len(group_ids)
    groups: list[EdgeGroup] = []
    for root, gid in group_ids.items():
        member = roots == root
        gr, gc = rows[member], cols[member]
        labels[gr, gc] = gid
        groups.append(EdgeGroup(gr, gc, float(magnitude[gr, gc].sum())))
    return EdgeGroupSet(magnitude, orientation, labels, groups)


def objectness_score(groups: EdgeGroupSet, rect: tuple[int, int, int, int]) -> float:
    """Boundary-penalized edge mass of a rectangle.

    rect is (top, left, height, width). Each group contributes its summed
    magnitude weighted by the fraction of its pixels inside the rectangle,
    and the total is normalized by 2(w + h)^2.
    """
    top, left, h, w = (int(v) for v in rect)
    if h <= 0 or w <= 0:
        raise ValueError("empty rectangle %r" % (rect,))
    total = 0.0
    for group in groups.groups:
        inside = ((group.rows >= top) & (group.rows < top + h)
                  & (group.cols >= left) & (group.cols < left + w))
        n_in = int(inside.sum())
        if n_in == 0:
            continue
        omega = n_in / len(group)
        total += omega * group.u
    return total / (2.0 * (w + h) ** 2)


# -- optical flow --------------------------------------------------------


@dataclasses.dataclass
class FlowField:
    """Per-pixel displacement of content from the previous to next patch.

    flow[..., 0] is horizontal (along columns), flow[..., 1] vertical
    (along rows); invalid pixels carry zero flow.
    """

    flow: np.ndarray  # (H, W, 2)
    valid: np.ndarray  # (H, W) bool

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.flow[:, :, 0], self.flow[:, :, 1])


def _window_sum(a: np.ndarray) -> np.ndarray:
    return ndimage.uniform_filter(a, size=LK_WINDOW, mode="constant") * (LK_WINDOW ** 2)


def lk_flow(prev: np.ndarray, nxt: np.ndarray) -> FlowField:
    """Single-step Lucas-Kanade flow over a 5x5 window.

    Pixels whose structure tensor has smaller eigenvalue below 1e-4 are
    flagged invalid with zero flow; patches smaller than the window are
    invalid everywhere.
    """
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.shape != nxt.shape:
        raise ShapeMismatchError("patch shapes differ: %r vs %r"
                                 % (prev.shape, nxt.shape))
    if prev.ndim != 2:
        raise ShapeMismatchError("expected 2-D grayscale patches, got %r"
                                 % (prev.shape,))
    h, w = prev.shape
    flow = np.zeros((h, w, 2))
    if h < LK_WINDOW or w < LK_WINDOW:
        return FlowField(flow, np.zeros((h, w), dtype=bool))

    # symmetric gradients reduce bias on translations of smooth texture
    ix = 0.5 * (np.gradient(prev, axis=1) + np.gradient(nxt, axis=1))
    iy = 0.5 * (np.gradient(prev, axis=0) + np.gradient(nxt, axis=0))
    it = nxt - prev

    sxx = _window_sum(ix * ix)
    sxy = _window_sum(ix * iy)
    syy = _window_sum(iy * iy)
    bx = _window_sum(ix * it)
    by = _window_sum(iy * it)

    trace = sxx + syy
    root = np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy)
    lambda_min = 0.5 * (trace - root)
    valid = lambda_min >= LK_MIN_EIGENVALUE

    det = sxx * syy - sxy * sxy
    with np.errstate(divide="ignore", invalid="ignore"):
        vx = (-syy * bx + sxy * by) / det
        vy = (sxy * bx - sxx * by) / det
    flow[:, :, 0] = np.where(valid, vx, 0.0)
    flow[:, :, 1] = np.where(valid, vy, 0.0)
    return FlowField(flow, valid)


def patch_saliency(flow: FlowField) -> float:
    """tanh of the mean flow magnitude over valid pixels, in [0, 1]."""
    if not flow.valid.any():
        return 0.0
    mean_mag = float(flow.magnitude()[flow.valid].mean())
    return float(np.tanh(mean_mag))


def _address_saliency(video: np.ndarray, addr: PatchAddress,
                      grid: GridSpec) -> float:
    """Motion saliency of one addressed level-2 rectangle.

    The address's frame pairs with its successor (the last frame pairs
    with its predecessor); flow is computed inside the rectangle only.
    """
    n_frames = video.shape[0]
    if n_frames < 2:
        return 0.0
    top, left, h, w = address_rect(grid, video.shape, addr)
    a = addr.frame
    b = a + 1 if a + 1 < n_frames else a - 1
    prev = to_gray(video[min(a, b), top:top + h, left:left + w, :])
    nxt = to_gray(video[max(a, b), top:top + h, left:left + w, :])
    return patch_saliency(lk_flow(prev, nxt))


def motion_saliency(video: np.ndarray, addresses: list[PatchAddress],
                    grid: GridSpec) -> tuple[np.ndarray, float]:
    """Per-address saliency values s and the reward exp(sum of s)."""
    values = np.array([_address_saliency(video, a, grid) for a in addresses])
    r2 = float(np.exp(values.sum()))
    return values, r2


class SaliencyCache:
    """Lazy per-video memo of edge groups, objectness, and saliency.

    Keyed by grid cell, so one clean video never pays for the same
    frame's edge analysis or the same patch's flow twice.
    """

    def __init__(self, video: np.ndarray, grid: GridSpec):
        self.video = np.asarray(video)
        self.grid = grid
        self._groups: dict[int, EdgeGroupSet] = {}
        self._objectness: dict[tuple[int, int], float] = {}
        self._saliency: dict[tuple[int, int, int], float] = {}

    def groups(self, frame: int) -> EdgeGroupSet:
        if frame not in self._groups:
            self._groups[frame] = edge_groups(self.video[frame])
        return self._groups[frame]

    def objectness(self, frame: int, l1: int) -> float:
        key = (frame, l1)
        if key not in self._objectness:
            rect = patch_rect(self.grid, self.video.shape[1], self.video.shape[2], l1)
            self._objectness[key] = objectness_score(self.groups(frame), rect)
        return self._objectness[key]

    def saliency_value(self, addr: PatchAddress) -> float:
        key = (addr.frame, addr.l1, addr.l2)
        if key not in self._saliency:
            self._saliency[key] = _address_saliency(self.video, addr, self.grid)
        return self._saliency[key]


# -- debug rendering -----------------------------------------------------


def render_edge_map(groups: EdgeGroupSet) -> np.ndarray:
    """Edge magnitude of grouped pixels as an 8-bit grayscale image."""
    img = np.zeros(groups.shape)
    edge = groups.labels >= 0
    if edge.any():
        peak = groups.magnitude[edge].max()
        if peak > 0:
            img[edge] = groups.magnitude[edge] / peak
    return (img * 255.0).round().astype(np.uint8)


def render_group_labels(groups: EdgeGroupSet, seed: int = 0) -> np.ndarray:
    """Each group in a distinct random color on black, 8-bit RGB."""
    h, w = groups.shape
    img = np.zeros((h, w, 3), dtype=np.uint8)
    rng = np.random.default_rng(seed)
    for group in groups.groups:
        color = rng.integers(64, 256, size=3, dtype=np.int64)
        img[group.rows, group.cols] = color.astype(np.uint8)
    return img


def render_flow(flow: FlowField) -> np.ndarray:
    """Flow as 8-bit RGB: direction in red/green, validity in blue."""
    h, w = flow.valid.shape
    img = np.zeros((h, w, 3), dtype=np.uint8)
    mag = flow.magnitude()
    peak = mag.max() if mag.size else 0.0
    scale = 1.0 / peak if peak > 0 else 0.0
    img[:, :, 0] = np.clip((flow.flow[:, :, 0] * scale * 0.5 + 0.5) * 255, 0, 255)
    img[:, :, 1] = np.clip((flow.flow[:, :, 1] * scale * 0.5 + 0.5) * 255, 0, 255)
    img[:, :, 2] = np.where(flow.valid, 255, 0)
    return img
