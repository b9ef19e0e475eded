"""Argument checks shared by the public functions and estimators."""

from __future__ import annotations

import numbers

import numpy as np


def check_count(value, name: str, minimum: int = 1) -> int:
    """Return ``value`` as an int, raising if it is not an integer >= ``minimum``."""
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, numbers.Real) and float(value).is_integer():
            value = int(value)
        else:
            raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_eta(eta, name: str = "eta") -> float:
    """Quantum efficiency must lie in (0, 1]."""
    eta = float(eta)
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"{name} must lie in (0, 1], got {eta}")
    return eta


def check_positive(value, name: str) -> float:
    value = float(value)
    if not (value > 0.0 and np.isfinite(value)):
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_random_state(seed) -> np.random.Generator:
    """Turn None, an int or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a Generator from {seed!r}")


def check_statistics(X) -> np.ndarray:
    """Validate a 1-D array of per-run statistics; NaN marks a discarded run."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 1:
        raise ValueError(f"expected a 1-D array of run statistics, got shape {X.shape}")
    if np.isinf(X).any():
        raise ValueError("run statistics must be finite or NaN")
    return X
