"""Named parameter collections with seeded, reproducible initialization."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParamSet:
    """Ordered, named collection of trainable tensors.

    Creation order is part of the contract: rebuilding a network with the
    same seed and the same sequence of ``uniform``/``zeros`` calls yields
    bit-identical parameter values.
    """

    def __init__(self, seed: int, dtype=np.float64):
        self.seed = int(seed)
        self.dtype = dtype
        self._rng = np.random.default_rng(self.seed)
        self._params: dict[str, Tensor] = {}

    def uniform(self, name: str, shape, fan_in: int | None = None) -> Tensor:
        """Add a parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        if name in self._params:
            raise ValueError("duplicate parameter name %r" % name)
        if fan_in is None:
            fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else int(shape[0])
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        data = self._rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def zeros(self, name: str, shape) -> Tensor:
        if name in self._params:
            raise ValueError("duplicate parameter name %r" % name)
        t = Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def freeze(self):
        """Mark every parameter as non-trainable (no gradient tracking)."""
        for t in self._params.values():
            t.requires_grad = False
        return self

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for name, t in self._params.items():
            src = arrays[name]
            if src.shape != t.data.shape:
                raise ValueError("shape mismatch for %r: %s vs %s" % (name, src.shape, t.data.shape))
            t.data = src.astype(t.data.dtype).copy()
