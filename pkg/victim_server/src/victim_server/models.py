"""Served models: metadata plus a pure predict function.

The server performs any model-specific preprocessing inside ``predict``,
so clients always send raw [0, 1] float32 tensors of ``input_shape``.
"""

import dataclasses
import importlib
from typing import Callable

import numpy as np

STUB_PROBS = (0.6, 0.25, 0.15)  # the stub's fixed distribution


@dataclasses.dataclass(frozen=True)
class ServedModel:
    """One classifier behind the wire: constant metadata, pure inference."""

    model_id: str
    input_shape: tuple[int, int, int, int]  # (M, H, W, C)
    class_names: tuple[str, ...]
    preprocessing: str
    predict: Callable[[np.ndarray], np.ndarray]  # [0,1] video -> probs

    def __post_init__(self):
        if len(self.input_shape) != 4:
            raise ValueError("input_shape must be (M, H, W, C), got %r"
                             % (self.input_shape,))
        if not self.class_names:
            raise ValueError("class_names must be non-empty")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def metadata(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "input_shape": [int(d) for d in self.input_shape],
            "model_id": self.model_id,
        }


def stub_model() -> ServedModel:
    """3-class model returning STUB_PROBS for every input; protocol fixture."""
    fixed = np.array(STUB_PROBS, dtype=np.float64)
    return ServedModel(
        model_id="stub",
        input_shape=(2, 4, 4, 1),
        class_names=("class-0", "class-1", "class-2"),
        preprocessing="none (inputs already in [0, 1])",
        predict=lambda video: fixed.copy(),
    )


def resolve_model(model_id: str) -> ServedModel:
    """Map a CLI model id to a ServedModel.

    "stub" is built in; anything containing a colon is treated as
    "module:factory" where factory() returns a ServedModel.
    """
    if model_id == "stub":
        return stub_model()
    if ":" in model_id:
        module_name, _, attr = model_id.partition(":")
        try:
            factory = getattr(importlib.import_module(module_name), attr)
        except (ImportError, AttributeError) as exc:
            raise ValueError("cannot load model factory %r: %s"
                             % (model_id, exc)) from exc
        model = factory()
        if not isinstance(model, ServedModel):
            raise ValueError("%r returned %r, not a ServedModel"
                             % (model_id, type(model).__name__))
        return model
    raise ValueError("unknown model id %r (try \"stub\" or \"module:factory\")"
                     % model_id)
