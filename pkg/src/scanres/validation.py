"""Input validation helpers used by the estimator-style APIs."""

import numpy as np

from .errors import InvalidFeature, SingleClassError


def as_float_matrix(X, name="X"):
    """Coerce X to a 2D float64 array, rejecting non-finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidFeature(f"{name} must be 2D, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise InvalidFeature(f"{name} must be non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidFeature(f"{name} contains non-finite values")
    return X


def as_float_vector(x, name="x"):
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise InvalidFeature(f"{name} contains non-finite values")
    return x


def as_signed_labels(y, n=None):
    """Coerce labels to a +1/-1 int array (accepts Label enums, strings, ints)."""
    from .learn import Label  # local import to avoid a cycle

    out = np.empty(len(y), dtype=np.int64)
    for i, v in enumerate(y):
        if isinstance(v, Label):
            out[i] = 1 if v is Label.ACCEPTABLE else -1
        elif isinstance(v, str):
            out[i] = 1 if v == Label.ACCEPTABLE.value else -1
        else:
            out[i] = 1 if int(v) >= 0 else -1
    if n is not None and len(out) != n:
        raise InvalidFeature(f"expected {n} labels, got {len(out)}")
    return out


def check_both_classes(y_signed):
    if not (np.any(y_signed > 0) and np.any(y_signed < 0)):
        raise SingleClassError("training data must contain both classes")


def check_mask(mask, n_features):
    """Validate a boolean feature mask; None means all features selected."""
    if mask is None:
        return np.ones(n_features, dtype=bool)
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.shape[0] != n_features:
        raise InvalidFeature(
            f"feature mask length {mask.shape[0]} != feature count {n_features}"
        )
    if not mask.any():
        raise InvalidFeature("feature mask selects no features")
    return mask
