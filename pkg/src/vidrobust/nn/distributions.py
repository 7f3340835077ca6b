"""Seed-deterministic sampling heads for the policy networks."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, exp, log_softmax, logsigmoid, sigmoid, tsum


class Categorical:
    """Categorical distribution over a 1-D logit vector."""

    def __init__(self, logits):
        self.logits = as_tensor(logits)
        if self.logits.ndim != 1:
            self.logits = self.logits.reshape((-1,))
        self._logp = log_softmax(self.logits)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self._logp.data)

    def sample(self, rng: np.random.Generator) -> int:
        # inverse-CDF keeps draws reproducible for a given generator state
        u = rng.random()
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return int(np.searchsorted(cdf, u, side="right"))

    def log_prob(self, k: int) -> Tensor:
        return self._logp[int(k)]

    def entropy(self) -> Tensor:
        return -tsum(exp(self._logp) * self._logp)


class Bernoulli:
    """Two-outcome head over a scalar logit; outcome 1 has p = sigmoid(logit)."""

    def __init__(self, logit):
        self.logit = as_tensor(logit)
        if self.logit.size != 1:
            raise ValueError("bernoulli head expects a scalar logit")
        if self.logit.ndim != 0:
            self.logit = self.logit.reshape(())

    @property
    def p(self) -> float:
        return float(sigmoid(self.logit).data)

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.random() < self.p)

    def log_prob(self, bit: int) -> Tensor:
        return logsigmoid(self.logit) if bit else logsigmoid(-self.logit)

    def entropy(self) -> Tensor:
        p = sigmoid(self.logit)
        return -(p * logsigmoid(self.logit) + (1.0 - p) * logsigmoid(-self.logit))
