"""Actor-critic policies that pick focus frames and focus patches.

The temporal policy scans every frame and emits one keep/skip bit per
frame; the spatial policy scans only the kept frames and emits a coarse
plus a fine patch index for each.  Both run their recurrence from a zero
hidden state on every call, so selections depend only on the clean-video
features and the current parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import VtenFormatError
from .features import EMBED_DIM, Backbone, FrameFeatures
from .grid import GridSpec, PatchAddress
from .nn import (
    Adam,
    ParamSet,
    Tensor,
    add_dense_params,
    add_lstm_params,
    dense,
    exp,
    log_softmax,
    logsigmoid,
    lstm_scan,
    no_grad,
    reshape,
    sigmoid,
    stack,
    tsum,
)
from .checkpoint import (
    adam_to_entries,
    entries_to_adam,
    entries_to_params,
    params_to_entries,
    load_checkpoint,
    save_checkpoint,
)

POLICY_HIDDEN = 64


@dataclass(frozen=True)
class TemporalAction:
    """Per-frame selection bits plus the sampling-time log-prob and value."""

    bits: tuple[int, ...]
    log_prob: float
    value: float
    forced: bool = False

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(i for i, bit in enumerate(self.bits) if bit)

    @property
    def count(self) -> int:
        return sum(self.bits)


@dataclass(frozen=True)
class SpatialAction:
    """One patch address per selected frame plus log-prob and value."""

    addresses: tuple[PatchAddress, ...]
    log_prob: float
    value: float

    @property
    def frames(self) -> tuple[int, ...]:
        return tuple(a.frame for a in self.addresses)


def _state_sequence(features: FrameFeatures, frames) -> list[np.ndarray]:
    return [features.state_input(i) for i in frames]


def _sample_categorical_row(log_probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from one row of log-probabilities."""
    cdf = np.cumsum(np.exp(log_probs))
    cdf[-1] = 1.0
    return int(np.searchsorted(cdf, rng.random(), side="right"))


class TemporalPolicy:
    """Recurrent trunk with a per-frame keep/skip head and a value head."""

    def __init__(self, state_dim: int, hidden: int = POLICY_HIDDEN, seed: int = 0):
        ps = ParamSet(seed)
        add_lstm_params(ps, "lstm", state_dim, hidden)
        add_dense_params(ps, "head", hidden, 1)
        add_dense_params(ps, "value", hidden, 1)
        self.params = ps
        self.state_dim = state_dim
        self.hidden = hidden

    def _scan(self, states):
        p = self.params
        return lstm_scan(states, p["lstm.wx"], p["lstm.wh"], p["lstm.b"])

    def _head_logits(self, hidden) -> Tensor:
        h = stack(hidden)
        return reshape(dense(h, self.params["head.w"], self.params["head.b"]), (-1,))

    def _value(self, h) -> Tensor:
        return reshape(dense(h, self.params["value.w"], self.params["value.b"]), ())

    @staticmethod
    def _log_prob_terms(logits: Tensor, bits: np.ndarray) -> Tensor:
        return logsigmoid(logits) * bits + logsigmoid(-logits) * (1.0 - bits)

    def select_frames(self, features: FrameFeatures, rng: np.random.Generator) -> TemporalAction:
        """Sample one bit per frame; an all-zero draw is repaired by forcing
        the highest-probability frame on, with the log-prob recomputed for
        the bits actually returned."""
        states = _state_sequence(features, range(features.n_frames))
        with no_grad():
            hidden = self._scan(states)
            logits = self._head_logits(hidden)
            probs = sigmoid(logits).data
            value = float(self._value(hidden[-1]).data)
        bits = rng.random(len(states)) < probs
        forced = False
        if not bits.any():
            bits[int(np.argmax(probs))] = True
            forced = True
        bit_vec = bits.astype(np.float64)
        with no_grad():
            log_prob = float(tsum(self._log_prob_terms(logits, bit_vec)).data)
        return TemporalAction(tuple(int(b) for b in bits), log_prob, value, forced)

    def evaluate(self, features: FrameFeatures, bits) -> tuple[Tensor, Tensor, Tensor]:
        """Differentiable (log-prob, value, entropy) of an already-taken action."""
        if len(bits) != features.n_frames:
            raise ValueError(
                "expected %d bits, got %d" % (features.n_frames, len(bits)))
        states = _state_sequence(features, range(features.n_frames))
        hidden = self._scan(states)
        logits = self._head_logits(hidden)
        bit_vec = np.asarray(bits, dtype=np.float64)
        log_prob = tsum(self._log_prob_terms(logits, bit_vec))
        p = sigmoid(logits)
        entropy = -tsum(p * logsigmoid(logits) + (1.0 - p) * logsigmoid(-logits))
        return log_prob, self._value(hidden[-1]), entropy


class SpatialPolicy:
    """Recurrent trunk with coarse/fine patch heads and a value head."""

    def __init__(self, state_dim: int, grid: GridSpec,
                 hidden: int = POLICY_HIDDEN, seed: int = 0):
        ps = ParamSet(seed)
        add_lstm_params(ps, "lstm", state_dim, hidden)
        add_dense_params(ps, "head_l1", hidden, grid.d1)
        add_dense_params(ps, "head_l2", hidden, grid.d2)
        add_dense_params(ps, "value", hidden, 1)
        self.params = ps
        self.state_dim = state_dim
        self.hidden = hidden
        self.grid = grid

    def _scan(self, states):
        p = self.params
        return lstm_scan(states, p["lstm.wx"], p["lstm.wh"], p["lstm.b"])

    def _level_log_probs(self, hidden_mat: Tensor, name: str) -> Tensor:
        return log_softmax(
            dense(hidden_mat, self.params[name + ".w"], self.params[name + ".b"]),
            axis=-1)

    def _value(self, h) -> Tensor:
        return reshape(dense(h, self.params["value.w"], self.params["value.b"]), ())

    def select_patches(self, features: FrameFeatures, frames,
                       rng: np.random.Generator) -> SpatialAction:
        """Sample a coarse then a fine patch index for each selected frame.

        Scanning the selected frames in order lets later picks depend on
        earlier ones through the recurrent state.
        """
        frames = tuple(int(f) for f in frames)
        if not frames:
            raise ValueError("no frames selected")
        states = _state_sequence(features, frames)
        with no_grad():
            hidden = self._scan(states)
            h = stack(hidden)
            log_p1 = self._level_log_probs(h, "head_l1").data
            log_p2 = self._level_log_probs(h, "head_l2").data
            value = float(self._value(hidden[-1]).data)
        addresses = []
        log_prob = 0.0
        for k, frame in enumerate(frames):
            l1 = _sample_categorical_row(log_p1[k], rng)
            l2 = _sample_categorical_row(log_p2[k], rng)
            log_prob += float(log_p1[k, l1]) + float(log_p2[k, l2])
            addresses.append(PatchAddress(frame, l1, l2))
        return SpatialAction(tuple(addresses), log_prob, value)

    def evaluate(self, features: FrameFeatures, addresses) -> tuple[Tensor, Tensor, Tensor]:
        """Differentiable (log-prob, value, entropy) of an already-taken action."""
        addresses = tuple(addresses)
        if not addresses:
            raise ValueError("no addresses to evaluate")
        states = _state_sequence(features, [a.frame for a in addresses])
        hidden = self._scan(states)
        h = stack(hidden)
        log_p1 = self._level_log_probs(h, "head_l1")
        log_p2 = self._level_log_probs(h, "head_l2")
        pick_l1 = np.eye(self.grid.d1)[[a.l1 for a in addresses]]
        pick_l2 = np.eye(self.grid.d2)[[a.l2 for a in addresses]]
        log_prob = tsum(log_p1 * pick_l1) + tsum(log_p2 * pick_l2)
        entropy = -(tsum(exp(log_p1) * log_p1) + tsum(exp(log_p2) * log_p2))
        return log_prob, self._value(hidden[-1]), entropy


class PolicyBundle:
    """Both policies plus the shared frozen feature backbone.

    The backbone never receives gradients; only the two policy parameter
    sets are trained and checkpointed.
    """

    def __init__(self, grid: GridSpec | None = None, seed: int = 0,
                 backbone: Backbone | None = None, hidden: int = POLICY_HIDDEN):
        self.grid = grid if grid is not None else GridSpec()
        self.seed = seed
        self.backbone = backbone if backbone is not None else Backbone()
        state_dim = 2 * EMBED_DIM
        self.temporal = TemporalPolicy(state_dim, hidden=hidden, seed=seed)
        self.spatial = SpatialPolicy(state_dim, self.grid, hidden=hidden, seed=seed + 1)

    def make_optimizers(self, lr: float = 3e-3) -> tuple[Adam, Adam]:
        return Adam(self.temporal.params, lr=lr), Adam(self.spatial.params, lr=lr)

    def save(self, path, temporal_opt: Adam | None = None,
             spatial_opt: Adam | None = None, extra_meta: dict | None = None) -> None:
        tensors = {}
        tensors.update(params_to_entries(self.temporal.params, "temporal.param."))
        tensors.update(params_to_entries(self.spatial.params, "spatial.param."))
        has_opt = temporal_opt is not None and spatial_opt is not None
        if has_opt:
            tensors.update(adam_to_entries(temporal_opt, "temporal.adam."))
            tensors.update(adam_to_entries(spatial_opt, "spatial.adam."))
        meta = {
            "kind": "policy-bundle",
            "grid": str(self.grid),
            "seed": self.seed,
            "hidden": self.temporal.hidden,
            "backbone_seed": self.backbone.seed,
            "has_optimizer": has_opt,
        }
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path, temporal_opt: Adam | None = None,
             spatial_opt: Adam | None = None) -> tuple["PolicyBundle", dict]:
        tensors, meta = load_checkpoint(path)
        if meta.get("kind") != "policy-bundle":
            raise VtenFormatError("%s is not a policy checkpoint (kind=%r)"
                                  % (path, meta.get("kind")))
        bundle = cls(grid=GridSpec.parse(meta["grid"]), seed=int(meta["seed"]),
                     backbone=Backbone(seed=int(meta["backbone_seed"])),
                     hidden=int(meta["hidden"]))
        entries_to_params(bundle.temporal.params, tensors, "temporal.param.")
        entries_to_params(bundle.spatial.params, tensors, "spatial.param.")
        if temporal_opt is not None and spatial_opt is not None:
            if not meta.get("has_optimizer"):
                raise VtenFormatError("%s has no optimizer state" % path)
            entries_to_adam(temporal_opt, tensors, "temporal.adam.")
            entries_to_adam(spatial_opt, tensors, "spatial.adam.")
        return bundle, meta
