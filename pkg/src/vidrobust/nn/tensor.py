"""Reverse-mode autograd over dense numpy arrays.

Small by design: only the operations the policy networks, the feature
backbone, and the toy victims need. Graphs are built eagerly; calling
``backward()`` on a scalar accumulates gradients into every reachable
tensor created with ``requires_grad=True``. Float64 is the default so
finite-difference checks are meaningful; float32 works for throughput.
"""

from __future__ import annotations

import contextlib
from typing import Sequence

import numpy as np

from ..errors import ShapeMismatchError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy array plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._backward = None

    # -- bookkeeping ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar; got shape %s" % (self.shape,))
        # iterative topological sort; LSTM graphs get deep
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self):
        return "Tensor(shape=%s, requires_grad=%s)" % (self.shape, self.requires_grad)

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


# -- elementwise binary ops ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    exponent = float(exponent)
    data = a.data ** exponent

    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return _make(data, (a,), backward)


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = np.maximum(a.data, b.data)

    def backward(g):
        # ties route the gradient to the first operand
        take_a = a.data >= b.data
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(take_a, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(take_a, 0.0, g), b.shape))

    return _make(data, (a, b), backward)


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = np.minimum(a.data, b.data)

    def backward(g):
        take_a = a.data <= b.data
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(take_a, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(take_a, 0.0, g), b.shape))

    return _make(data, (a, b), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    return minimum(maximum(a, lo), hi)


# -- elementwise unary ops ----------------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _make(data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _make(data, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - data * data))

    return _make(data, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * data * (1.0 - data))

    return _make(data, (a,), backward)


def logsigmoid(a) -> Tensor:
    """log(sigmoid(a)), computed without overflow."""
    a = as_tensor(a)
    x = a.data
    data = np.where(x > 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))

    def backward(g):
        a._accumulate(g * _sigmoid(-x))

    return _make(data, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        a._accumulate(g * (a.data > 0))

    return _make(data, (a,), backward)


# -- reductions and shape ops -------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy() if np.ndim(g) == 0 else np.full(a.shape, g))
        else:
            g2 = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g2, a.shape).copy())

    return _make(data, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.shape[ax]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(data, (a,), backward)


def getitem(a, idx) -> Tensor:
    """Basic indexing only (ints/slices); backward scatters the gradient."""
    a = as_tensor(a)
    data = a.data[idx]

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[idx] += g

    return _make(data, (a,), backward)


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, stop)
                p._accumulate(g[tuple(sl)])

    return _make(data, tuple(parts), backward)


def stack(parts: Sequence) -> Tensor:
    """Stack same-shape tensors (scalars included) along a new first axis."""
    return concat([reshape(p, (1,) + as_tensor(p).shape) for p in parts], axis=0)


# -- linear algebra -----------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeMismatchError("matmul supports 1-D/2-D operands; got %s @ %s" % (a.shape, b.shape))
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatchError("matmul inner dimensions differ: %s @ %s" % (a.shape, b.shape))
    data = a.data @ b.data

    def backward(g):
        ad, bd = a.data, b.data
        ga = g
        if a.requires_grad:
            if a.ndim == 1 and b.ndim == 1:
                a._accumulate(ga * bd)
            elif a.ndim == 1:
                a._accumulate(bd @ ga if b.ndim == 2 else ga * bd)
            elif b.ndim == 1:
                a._accumulate(np.outer(ga, bd))
            else:
                a._accumulate(ga @ bd.T)
        if b.requires_grad:
            if a.ndim == 1 and b.ndim == 1:
                b._accumulate(ga * ad)
            elif b.ndim == 1:
                b._accumulate(ad.T @ ga)
            elif a.ndim == 1:
                b._accumulate(np.outer(ad, ga))
            else:
                b._accumulate(ad.T @ ga)

    return _make(data, (a, b), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    data = z - lse
    sm = np.exp(data)

    def backward(g):
        a._accumulate(g - sm * g.sum(axis=axis, keepdims=True))

    return _make(data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    return exp(log_softmax(a, axis=axis))


# -- convolutions --------------------------------------------------------


def _conv2d_geometry(H, W, kh, kw, stride, padding):
    if padding == "valid":
        if kh > H or kw > W:
            raise ShapeMismatchError(
                "kernel (%d,%d) larger than input (%d,%d)" % (kh, kw, H, W))
        Ho = (H - kh) // stride + 1
        Wo = (W - kw) // stride + 1
        pads = (0, 0, 0, 0)
    elif padding == "same":
        Ho = -(-H // stride)
        Wo = -(-W // stride)
        ph = max((Ho - 1) * stride + kh - H, 0)
        pw = max((Wo - 1) * stride + kw - W, 0)
        pads = (ph // 2, ph - ph // 2, pw // 2, pw - pw // 2)
        if kh > H + ph or kw > W + pw:
            raise ShapeMismatchError(
                "kernel (%d,%d) larger than padded input" % (kh, kw))
    else:
        raise ValueError("padding must be 'valid' or 'same'")
    return Ho, Wo, pads


def conv2d(x, w, b=None, stride: int = 1, padding: str = "valid") -> Tensor:
    """2-D convolution (cross-correlation): x (N,H,W,Cin) or (H,W,Cin), w (kh,kw,Cin,Cout)."""
    x, w = as_tensor(x), as_tensor(w)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4:
        raise ShapeMismatchError("conv2d expects (N,H,W,Cin) input and (kh,kw,Cin,Cout) kernel")
    N, H, W, Cin = xd.shape
    kh, kw, kcin, Cout = w.shape
    if kcin != Cin:
        raise ShapeMismatchError("input channels %d != kernel channels %d" % (Cin, kcin))
    if stride < 1:
        raise ValueError("stride must be >= 1")
    Ho, Wo, (pt, pb, pl, pr) = _conv2d_geometry(H, W, kh, kw, stride, padding)
    xp = np.pad(xd, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if any((pt, pb, pl, pr)) else xd
    cols = np.empty((N, Ho, Wo, kh, kw, Cin), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + Ho * stride:stride, j:j + Wo * stride:stride, :]
    cols2 = cols.reshape(N * Ho * Wo, kh * kw * Cin)
    wmat = w.data.reshape(kh * kw * Cin, Cout)
    out = (cols2 @ wmat).reshape(N, Ho, Wo, Cout)
    bt = as_tensor(b) if b is not None else None
    if bt is not None:
        out = out + bt.data
    if squeeze:
        out = out[0]

    def backward(g):
        gd = g[None] if squeeze else g
        gflat = gd.reshape(N * Ho * Wo, Cout)
        if w.requires_grad:
            w._accumulate((cols2.T @ gflat).reshape(w.shape))
        if bt is not None and bt.requires_grad:
            bt._accumulate(gflat.sum(axis=0))
        if x.requires_grad:
            dcols = (gflat @ wmat.T).reshape(N, Ho, Wo, kh, kw, Cin)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + Ho * stride:stride, j:j + Wo * stride:stride, :] += dcols[:, :, :, i, j, :]
            dx = dxp[:, pt:pt + H, pl:pl + W, :]
            x._accumulate(dx[0] if squeeze else dx)

    parents = (x, w) if bt is None else (x, w, bt)
    return _make(out, parents, backward)


def conv3d(x, w, b=None, stride=(1, 1, 1), padding: str = "valid") -> Tensor:
    """3-D convolution: x (N,T,H,W,Cin) or (T,H,W,Cin), w (kt,kh,kw,Cin,Cout)."""
    x, w = as_tensor(x), as_tensor(w)
    squeeze = x.ndim == 4
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 5 or w.ndim != 5:
        raise ShapeMismatchError("conv3d expects (N,T,H,W,Cin) input and (kt,kh,kw,Cin,Cout) kernel")
    N, T, H, W, Cin = xd.shape
    kt, kh, kw, kcin, Cout = w.shape
    if kcin != Cin:
        raise ShapeMismatchError("input channels %d != kernel channels %d" % (Cin, kcin))
    st, sh, sw = stride

    def geom(n, k, s):
        if padding == "valid":
            if k > n:
                raise ShapeMismatchError("kernel %d larger than input %d" % (k, n))
            return (n - k) // s + 1, (0, 0)
        no = -(-n // s)
        p = max((no - 1) * s + k - n, 0)
        return no, (p // 2, p - p // 2)

    To, (pt0, pt1) = geom(T, kt, st)
    Ho, (ph0, ph1) = geom(H, kh, sh)
    Wo, (pw0, pw1) = geom(W, kw, sw)
    xp = np.pad(xd, ((0, 0), (pt0, pt1), (ph0, ph1), (pw0, pw1), (0, 0))) \
        if any((pt0, pt1, ph0, ph1, pw0, pw1)) else xd
    cols = np.empty((N, To, Ho, Wo, kt, kh, kw, Cin), dtype=xd.dtype)
    for a in range(kt):
        for i in range(kh):
            for j in range(kw):
                cols[:, :, :, :, a, i, j, :] = xp[:, a:a + To * st:st, i:i + Ho * sh:sh, j:j + Wo * sw:sw, :]
    cols2 = cols.reshape(N * To * Ho * Wo, kt * kh * kw * Cin)
    wmat = w.data.reshape(kt * kh * kw * Cin, Cout)
    out = (cols2 @ wmat).reshape(N, To, Ho, Wo, Cout)
    bt = as_tensor(b) if b is not None else None
    if bt is not None:
        out = out + bt.data
    if squeeze:
        out = out[0]

    def backward(g):
        gd = g[None] if squeeze else g
        gflat = gd.reshape(N * To * Ho * Wo, Cout)
        if w.requires_grad:
            w._accumulate((cols2.T @ gflat).reshape(w.shape))
        if bt is not None and bt.requires_grad:
            bt._accumulate(gflat.sum(axis=0))
        if x.requires_grad:
            dcols = (gflat @ wmat.T).reshape(N, To, Ho, Wo, kt, kh, kw, Cin)
            dxp = np.zeros_like(xp)
            for a in range(kt):
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, a:a + To * st:st, i:i + Ho * sh:sh, j:j + Wo * sw:sw, :] += \
                            dcols[:, :, :, :, a, i, j, :]
            dx = dxp[:, pt0:pt0 + T, ph0:ph0 + H, pw0:pw0 + W, :]
            x._accumulate(dx[0] if squeeze else dx)

    parents = (x, w) if bt is None else (x, w, bt)
    return _make(out, parents, backward)
