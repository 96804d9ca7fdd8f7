"""Input validation helpers shared by the estimators and functions."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_positive(value, name, allow_inf=False):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    if not value > 0 or (not allow_inf and not np.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_positions(positions, n_ions=None):
    """Return positions as a float array of shape (n_ions, 3)."""
    X = check_array(np.asarray(positions, dtype=float).reshape(-1, 3), ensure_min_samples=1)
    if n_ions is not None and X.shape[0] != n_ions:
        raise ValueError(f"expected {n_ions} ion positions, got {X.shape[0]}")
    return X


def check_square_symmetric(M, name="matrix", rtol=1e-12):
    M = check_array(M, ensure_min_samples=1, ensure_min_features=1)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.T).max() > rtol * scale:
        raise ValueError(f"{name} is not symmetric")
    return M


def check_spins(spins, n=None):
    s = np.asarray(spins)
    if s.ndim not in (1, 2):
        raise ValueError("spins must be a vector or a 2-D array of configurations")
    if not np.all(np.isin(s, (-1, 1))):
        raise ValueError("spins must contain only -1 and +1")
    if n is not None and s.shape[-1] != n:
        raise ValueError(f"spin configuration has length {s.shape[-1]}, expected {n}")
    return s.astype(float)


def check_vector3(v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be a finite 3-vector, got {v!r}")
    return v
