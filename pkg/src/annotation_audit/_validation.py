"""Input validation helpers shared by the estimators and metrics."""

import numpy as np
from sklearn.utils.validation import check_consistent_length, column_or_1d

from .exceptions import ValidationError


def check_binary(values, name="y", allow_nan=False):
    """Return ``values`` as a 1-d float array whose entries are 0 or 1.

    With ``allow_nan`` the array may carry NaN for missing entries.
    """
    arr = column_or_1d(np.asarray(values, dtype=float), warn=False)
    finite = ~np.isnan(arr)
    if not allow_nan and not finite.all():
        raise ValidationError(f"{name} contains missing values")
    if not np.isin(arr[finite], (0.0, 1.0)).all():
        raise ValidationError(f"{name} must be binary (0/1)")
    return arr


def check_paired(*arrays):
    check_consistent_length(*arrays)
    return arrays


def check_probabilities(pi, name="pi", strictly_positive=True):
    arr = column_or_1d(np.asarray(pi, dtype=float), warn=False)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} must be finite")
    low_ok = (arr > 0).all() if strictly_positive else (arr >= 0).all()
    if not low_ok or (arr > 1).any():
        bound = "(0, 1]" if strictly_positive else "[0, 1]"
        raise ValidationError(f"{name} must lie in {bound}")
    return arr


def check_alpha(alpha):
    if not 0.0 < float(alpha) < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    return float(alpha)
