"""Small input-validation helpers used across the public API."""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError, ContractError


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise ArgumentError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_non_negative_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 0:
        raise ArgumentError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def check_probability(value, name: str, *, allow_one: bool = False) -> float:
    v = float(value)
    hi_ok = v <= 1.0 if allow_one else v < 1.0
    if not np.isfinite(v) or v < 0.0 or not hi_ok:
        bound = "[0, 1]" if allow_one else "[0, 1)"
        raise ArgumentError(f"{name} must lie in {bound}, got {value!r}")
    return v


def check_open_unit(value, name: str) -> float:
    v = float(value)
    if not np.isfinite(v) or not 0.0 < v < 1.0:
        raise ArgumentError(f"{name} must lie in (0, 1), got {value!r}")
    return v


def check_positive(value, name: str) -> float:
    v = float(value)
    if not np.isfinite(v) or v <= 0.0:
        raise ArgumentError(f"{name} must be positive, got {value!r}")
    return v


def check_identifier(value, name: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise ArgumentError(f"{name} must be a non-empty string, got {value!r}")
    return value.strip()


def check_fractions(fractions) -> tuple[float, float, float]:
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ArgumentError(f"fractions must be three positive numbers summing to 1, got {fractions!r}")
    return fr


def as_pair_array(pairs, name: str = "pairs") -> np.ndarray:
    """Coerce a sequence of index pairs to an (m, 2) int64 array."""
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ContractError(f"{name} must have shape (m, 2), got {arr.shape}")
    return arr


def check_fitted(estimator, attribute: str = "params_") -> None:
    if not hasattr(estimator, attribute):
        raise ContractError(
            f"{type(estimator).__name__} is not fitted; call fit() before using this method"
        )
