"""Input validation helpers shared by the kernels and estimators."""

import numbers

import numpy as np


def check_grid(a, name="grid", dtype=np.float64, allow_nan=False, ndim=2):
    """Return ``a`` as a C-contiguous array of ``ndim`` dimensions.

    Raises ValueError on wrong dimensionality or non-finite values.
    """
    arr = np.ascontiguousarray(a, dtype=dtype)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not allow_nan and np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_same_shape(*arrays, names=None):
    shapes = [np.shape(a) for a in arrays]
    if len(set(shapes)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise ValueError(f"shape mismatch between {label}: {shapes}")
    return shapes[0]


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"cannot build a Generator from {seed!r}")


def interior_mask(shape, width=1):
    """Boolean mask that is False on a border of ``width`` pixels."""
    mask = np.zeros(shape, dtype=bool)
    mask[width:shape[0] - width, width:shape[1] - width] = True
    return mask
