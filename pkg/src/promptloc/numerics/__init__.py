from .autograd import Tensor, as_tensor, backward, default_dtype, no_record, precision, record
from .ops import softmax, softmax_array
from .optim import AdamW, OptimizerState, adamw_step

__all__ = [
    "AdamW",
    "OptimizerState",
    "Tensor",
    "adamw_step",
    "as_tensor",
    "backward",
    "default_dtype",
    "no_record",
    "precision",
    "record",
    "softmax",
    "softmax_array",
]
