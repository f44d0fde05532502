"""Quantifier-free satisfiability backends behind a single contract."""

from .query import QFQuery, Verdict, BackendError, UnsupportedTheory, check_model
from .embedded import EmbeddedBackend

__all__ = [
    "QFQuery",
    "Verdict",
    "BackendError",
    "UnsupportedTheory",
    "check_model",
    "EmbeddedBackend",
]
