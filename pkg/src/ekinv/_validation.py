"""Input checks shared by the estimators."""
import numpy as np
from sklearn.utils.validation import check_array

from .errors import DimensionMismatch


def check_ensemble(X, dim: int, min_members: int = 1) -> np.ndarray:
    """Members as rows: shape (J, dim), finite floats."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_members)
    if X.shape[1] != dim:
        raise DimensionMismatch(f"expected {dim} coefficients per member, got {X.shape[1]}")
    return X


def check_vector(y, size: int, name: str = "y") -> np.ndarray:
    y = check_array(np.asarray(y, dtype=np.float64).reshape(1, -1), dtype=np.float64).ravel()
    if y.size != size:
        raise DimensionMismatch(f"{name} has length {y.size}, expected {size}")
    return y
