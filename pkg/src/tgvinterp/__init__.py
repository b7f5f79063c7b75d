"""Second-order TGV denoising with learnable interpolation-filter discretizations."""

__version__ = "0.1.0"

from .grid import CoefficientField, Image, Offset, StaggeredField, znorm, znorm_dual
from .interp import FilterBank, handcrafted_bank, identity_bank, random_bank
from .solver import SaddleState, StepSizes, pd_solve, precondition, tgv_value
from .piggyback import AdjointState, filter_gradients, piggyback_solve
from .train import TrainConfig, bilevel_train

__all__ = [
    "AdjointState",
    "CoefficientField",
    "FilterBank",
    "Image",
    "Offset",
    "SaddleState",
    "StaggeredField",
    "StepSizes",
    "TrainConfig",
    "bilevel_train",
    "filter_gradients",
    "handcrafted_bank",
    "identity_bank",
    "pd_solve",
    "piggyback_solve",
    "precondition",
    "random_bank",
    "tgv_value",
    "znorm",
    "znorm_dual",
]
