"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""
import numpy as np

from .exceptions import ArgumentError


def check_points(x, dim=None):
    """Coerce ``x`` to a 2-D float array of shape ``(n_points, dim)``.

    Returns the array and a flag telling whether a single point was given,
    so callers can hand back a scalar in that case.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ArgumentError(f"expected a point or a batch of points, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ArgumentError(f"points have dimension {arr.shape[1]}, expected {dim}")
    return arr, single


def check_vector(z, dim, name="z"):
    arr = np.asarray(z, dtype=float)
    if arr.shape != (dim,):
        raise ArgumentError(f"{name} must have shape ({dim},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} has non-finite entries")
    return arr


def check_positive(value, name):
    if not value > 0:
        raise ArgumentError(f"{name} must be positive, got {value}")
    return float(value)


def maybe_scalar(values, single):
    """Return ``values[0]`` as a Python float when a single point was given."""
    if single:
        return float(values[0])
    return values
