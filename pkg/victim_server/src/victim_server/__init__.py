"""HTTP bridge exposing video classifiers behind the classify wire protocol.

Any model that can map a raw [0, 1] float32 video to a probability
vector can be served; the engine on the other end of the wire needs no
knowledge of the model's framework or preprocessing.
"""

from .models import ServedModel, resolve_model, stub_model
from .server import make_server, serve

__all__ = [
    "ServedModel",
    "make_server",
    "resolve_model",
    "serve",
    "stub_model",
]
