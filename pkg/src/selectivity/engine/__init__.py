from .fd import finite_difference_gradient
from .ops import GateMode, softmax
from .tape import ComputationTape

__all__ = ["ComputationTape", "GateMode", "finite_difference_gradient", "softmax"]
