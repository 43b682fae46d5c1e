"""Input validation helpers built on sklearn's checkers."""

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .exceptions import ConfigError, InputValidationError


def check_matrix(X, name="X", min_samples=1):
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                        ensure_min_samples=min_samples)
    except ValueError as exc:
        raise InputValidationError(f"{name}: {exc}") from None
    return X


def check_labeled(X, y, min_samples=2):
    try:
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True, ensure_all_finite=True,
                         ensure_min_samples=min_samples)
    except ValueError as exc:
        raise InputValidationError(str(exc)) from None
    return X, y.astype(np.float64)


def check_same_width(n_features, X, name="X"):
    if X.shape[1] != n_features:
        raise InputValidationError(
            f"{name} has {X.shape[1]} features, expected {n_features}"
        )


def check_lambda(lam):
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ConfigError(f"lambda must be a finite non-negative number, got {lam}")
    return lam


def check_positive_int(value, name):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
