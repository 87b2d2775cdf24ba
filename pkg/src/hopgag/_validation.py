"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""
import math

import numpy as np
from sklearn.utils.validation import validate_data

from .errors import DomainError, InvalidInputError


def check_vector(x, name="x", min_length=1):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if arr.shape[0] < min_length:
        raise InvalidInputError(f"{name} must have length >= {min_length}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_matrix(a, name="matrix"):
    if hasattr(a, "toarray"):
        raise InvalidInputError(f"{name}: sparse input is not supported, pass a dense array")
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_alpha(alpha):
    try:
        alpha = float(alpha)
    except (TypeError, ValueError):
        raise DomainError(f"alpha must be a real number, got {alpha!r}") from None
    if not (1.0 <= alpha <= 2.0):
        raise DomainError(f"alpha must lie in [1, 2], got {alpha}")
    return alpha


def check_positive(value, name):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidInputError(f"{name} must be a real number, got {value!r}") from None
    if not (value > 0) or math.isnan(value):
        raise InvalidInputError(f"{name} must be positive, got {value}")
    return value


def check_same_length(a, b, names=("a", "b")):
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError(
            f"dimension mismatch: {names[0]} has length {a.shape[0]}, "
            f"{names[1]} has length {b.shape[0]}"
        )


def validate_estimator_input(estimator, X, reset):
    """``sklearn`` input validation for estimators, re-raised as :class:`InvalidInputError`."""
    try:
        return validate_data(estimator, X, reset=reset, dtype=np.float64)
    except InvalidInputError:
        raise
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from exc
