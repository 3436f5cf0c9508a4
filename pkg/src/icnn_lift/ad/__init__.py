"""Reverse-mode autodiff over float64 arrays with forward-over-reverse HVPs."""

from .dual import DualArray
from . import fn
from .tape import NumericalError, Tape, Tensor, grad, hvp, value_and_grad

__all__ = ["fn", "DualArray", "NumericalError", "Tape", "Tensor", "grad", "hvp", "value_and_grad"]
