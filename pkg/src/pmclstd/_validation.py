"""Small input-validation helpers shared across the package."""

import numpy as np


def as_float_vector(x, name="x"):
    """Coerce to a 1-D float array, rejecting anything of another shape."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D array, got shape {arr.shape}")
    return arr


def as_float_matrix(x, name="x"):
    """Coerce to a 2-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    return arr


def check_same_shape(a, b, name_a="a", name_b="b"):
    if a.shape != b.shape:
        raise ValueError(
            f"{name_a} and {name_b} must have the same shape, "
            f"got {a.shape} and {b.shape}"
        )


def check_finite(arr, name="array"):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
