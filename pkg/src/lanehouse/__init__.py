"""Rent-prediction workbench for Shanghai lane houses.

Classical regressors (least squares, ridge, lasso, CART, random forest), a
few-shot LLM prompting pipeline, and the evaluation harness that compares
them on a shared train/test split.
"""

from ._accel import get_backend, set_backend, use_backend

__version__ = "0.1.0"

__all__ = ["get_backend", "set_backend", "use_backend", "__version__"]
