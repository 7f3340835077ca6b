"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .params import ParamSet
from .tensor import Tensor


def _as_tensor_list(params) -> list[Tensor]:
    if isinstance(params, ParamSet):
        return params.tensors()
    if isinstance(params, Tensor):
        return [params]
    return list(params)


def grad_check(loss_fn, params, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must be a pure scalar function of the tensors in ``params``
    (64-bit). Relative error uses an absolute floor of 1, so coordinates
    with tiny gradients are compared absolutely.
    """
    tensors = _as_tensor_list(params)
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(loss_fn().data)
            flat[i] = orig - step
            f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            ai = a.reshape(-1)[i]
            err = abs(ai - numeric) / max(1.0, abs(ai), abs(numeric))
            if err > worst:
                worst = err
    for t in tensors:
        t.grad = None
    return worst
