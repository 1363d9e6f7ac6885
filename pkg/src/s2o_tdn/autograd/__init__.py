from .tensor import Tensor, concat, no_grad, is_grad_enabled
from .functional import (
    activation,
    conv2d,
    count_macs,
    instance_norm,
    leaky_relu,
    relu,
    tanh,
    upsample_nearest2,
)
from .nn import Act, Conv2d, Downsample, InstanceNorm2d, Module, ModuleList, Parameter, Sequential, Upsample, resample
from .gradcheck import GradCheckReport, grad_check, grad_check_params

__all__ = [
    "Tensor", "concat", "no_grad", "is_grad_enabled",
    "activation", "conv2d", "count_macs", "instance_norm", "leaky_relu", "relu", "tanh", "upsample_nearest2",
    "Act", "Conv2d", "Downsample", "InstanceNorm2d", "Module", "ModuleList", "Parameter", "Sequential", "Upsample", "resample",
    "GradCheckReport", "grad_check", "grad_check_params",
]
