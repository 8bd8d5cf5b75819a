"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_float_array(values, name: str = "values") -> np.ndarray:
    """Coerce to a contiguous 1-D float64 array, rejecting non-finite entries."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be strictly positive, got {value}")
    return value


def check_non_negative(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value


def check_uniform_sampling(t: np.ndarray, rel_tol: float = 1e-6) -> float:
    """Return the sample period of a strictly increasing, uniform time axis.

    Raises ValueError when timestamps are not strictly increasing or the
    period varies by more than ``rel_tol`` relative to the median period.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.size < 2:
        raise ValueError("need at least two samples to determine a period")
    dt = np.diff(t)
    if np.any(dt <= 0.0):
        raise ValueError("timestamps must be strictly increasing")
    period = float(np.median(dt))
    if np.max(np.abs(dt - period)) > rel_tol * period:
        raise ValueError("sampling period is not uniform")
    return period


def check_same_grid(profiles, names=None) -> None:
    """Require equal spacing, equal length and aligned offsets."""
    profiles = list(profiles)
    if not profiles:
        return
    ref = profiles[0]
    names = names or [f"profile[{i}]" for i in range(len(profiles))]
    for name, p in zip(names[1:], profiles[1:]):
        if abs(p.spacing - ref.spacing) > 1e-12 * ref.spacing:
            raise ValueError(f"{name}: spacing {p.spacing} != {ref.spacing}")
        if len(p.values) != len(ref.values):
            raise ValueError(
                f"{name}: length {len(p.values)} != {len(ref.values)}"
            )
        if abs(p.start_offset - ref.start_offset) > 1e-9:
            raise ValueError(
                f"{name}: start offset {p.start_offset} != {ref.start_offset}"
            )
