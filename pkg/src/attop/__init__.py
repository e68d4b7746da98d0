"""Accuracy-at-the-top training: thresholds as order statistics, chain-rule
gradients, and the delayed-sample minibatch trainer."""

from .backend import NAME as BACKEND
from .errors import AttopError, ValidationError, NumericError

__all__ = ["BACKEND", "AttopError", "ValidationError", "NumericError"]
__version__ = "0.1.0"
