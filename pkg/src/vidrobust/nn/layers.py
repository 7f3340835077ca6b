"""Layer-level building blocks on top of the autograd tensor."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .params import ParamSet
from .tensor import Tensor, as_tensor, matmul, sigmoid, tanh


def dense(x, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map x @ W + b; x is (in,) or (n, in), W is (in, out)."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeMismatchError(
            "dense input %s incompatible with weight %s" % (x.shape, weight.shape))
    out = matmul(x, weight)
    if bias is not None:
        out = out + bias
    return out


def add_dense_params(ps: ParamSet, prefix: str, n_in: int, n_out: int):
    ps.uniform(prefix + ".w", (n_in, n_out), fan_in=n_in)
    ps.zeros(prefix + ".b", (n_out,))


def add_lstm_params(ps: ParamSet, prefix: str, n_in: int, n_hidden: int):
    # gate order: input, forget, cell, output
    ps.uniform(prefix + ".wx", (n_in, 4 * n_hidden), fan_in=n_in)
    ps.uniform(prefix + ".wh", (n_hidden, 4 * n_hidden), fan_in=n_hidden)
    ps.zeros(prefix + ".b", (4 * n_hidden,))


def _gate_update(gates: Tensor, c: Tensor, n_hidden: int):
    i = sigmoid(gates[..., 0 * n_hidden:1 * n_hidden])
    f = sigmoid(gates[..., 1 * n_hidden:2 * n_hidden])
    g = tanh(gates[..., 2 * n_hidden:3 * n_hidden])
    o = sigmoid(gates[..., 3 * n_hidden:4 * n_hidden])
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    return h_new, c_new


def lstm_step(x, h, c, wx: Tensor, wh: Tensor, b: Tensor):
    """One gated-recurrent update. x (in,), h/c (hidden,); returns (h', c')."""
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    n_hidden = wh.shape[0]
    if x.shape[-1] != wx.shape[0] or h.shape[-1] != n_hidden or c.shape[-1] != n_hidden:
        raise ShapeMismatchError(
            "lstm_step shapes x=%s h=%s c=%s vs wx=%s wh=%s"
            % (x.shape, h.shape, c.shape, wx.shape, wh.shape))
    gates = matmul(x, wx) + matmul(h, wh) + b
    return _gate_update(gates, c, n_hidden)


def lstm_scan(xs, wx: Tensor, wh: Tensor, b: Tensor, h0=None, c0=None):
    """Run lstm_step over a sequence of inputs; returns the list of hidden states.

    Constant input sequences get their input projections batched into a
    single matrix product up front; the math is unchanged.
    """
    n_hidden = wh.shape[0]
    h = as_tensor(np.zeros(n_hidden)) if h0 is None else as_tensor(h0)
    c = as_tensor(np.zeros(n_hidden)) if c0 is None else as_tensor(c0)
    xs = list(xs)
    if not xs:
        return []
    hs = []
    if all(not (isinstance(x, Tensor) and x.requires_grad) for x in xs):
        x_mat = np.stack([np.asarray(x.data if isinstance(x, Tensor) else x)
                          for x in xs])
        xw = matmul(as_tensor(x_mat), wx)
        for t in range(len(xs)):
            gates = xw[t] + matmul(h, wh) + b
            h, c = _gate_update(gates, c, n_hidden)
            hs.append(h)
        return hs
    for x in xs:
        h, c = lstm_step(x, h, c, wx, wh, b)
        hs.append(h)
    return hs
