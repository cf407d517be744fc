"""
Minimal tensor engine: masked convolution, pooling, heads, losses and their gradients
"""

from .counter import OpCounter
from .gradcheck import GradCheckReport, fd_gradient_check
from .ops import MaskedConvKernel, conv2d_masked, global_avg_pool, softmax_cross_entropy
from .rng import Rng
from .tensor import Parameter, Precision, Tensor, backward, no_grad

__all__ = [
    "OpCounter",
    "GradCheckReport",
    "fd_gradient_check",
    "MaskedConvKernel",
    "conv2d_masked",
    "global_avg_pool",
    "softmax_cross_entropy",
    "Rng",
    "Parameter",
    "Precision",
    "Tensor",
    "backward",
    "no_grad",
]
