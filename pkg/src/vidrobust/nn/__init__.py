"""Dense-tensor substrate with reverse-mode gradients for small networks."""

from .distributions import Bernoulli, Categorical
from .gradcheck import grad_check
from .layers import add_dense_params, add_lstm_params, dense, lstm_scan, lstm_step
from .optim import Adam
from .params import ParamSet
from .tensor import (
    Tensor,
    as_tensor,
    clip,
    concat,
    conv2d,
    conv3d,
    exp,
    log,
    log_softmax,
    logsigmoid,
    matmul,
    maximum,
    minimum,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    tanh,
    tmean,
    tsum,
)

__all__ = [
    "Adam",
    "Bernoulli",
    "Categorical",
    "ParamSet",
    "Tensor",
    "add_dense_params",
    "add_lstm_params",
    "as_tensor",
    "clip",
    "concat",
    "conv2d",
    "conv3d",
    "dense",
    "exp",
    "grad_check",
    "log",
    "log_softmax",
    "logsigmoid",
    "lstm_scan",
    "lstm_step",
    "matmul",
    "maximum",
    "minimum",
    "no_grad",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "stack",
    "tanh",
    "tmean",
    "tsum",
]
