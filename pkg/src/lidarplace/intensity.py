"""Per-scan intensity normalisation into [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyError, ParameterError

DEFAULT_BINS = 256


@dataclass(frozen=True)
class IntensityHistogram:
    edges: np.ndarray        # L + 1 bin edges over [min, max]
    counts: np.ndarray       # h(i)
    cumulative: np.ndarray   # C(i), running count

    @property
    def bin_count(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.cumulative[-1])

    @property
    def c_min(self) -> int:
        """Smallest nonzero cumulative count."""
        return int(self.cumulative[self.cumulative > 0][0])


def _as_values(intensity) -> np.ndarray:
    v = np.asarray(intensity, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise EmptyError("intensity list is empty")
    if not np.isfinite(v).all():
        raise DataError(f"non-finite intensity at index {int(np.flatnonzero(~np.isfinite(v))[0])}")
    return v


def bin_indices(values: np.ndarray, bins: int) -> np.ndarray:
    """Equal-width bin index over ``[min, max]``; the top edge belongs to the last bin."""
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(len(values), dtype=np.int64)
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def histogram(intensity, bins: int = DEFAULT_BINS) -> IntensityHistogram:
    v = _as_values(intensity)
    if bins < 2:
        raise ParameterError(f"bin count must be >= 2, got {bins}")
    counts = np.bincount(bin_indices(v, bins), minlength=bins)
    return IntensityHistogram(np.linspace(v.min(), v.max(), bins + 1), counts, np.cumsum(counts))


def equalize(intensity, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Histogram-equalise ``intensity`` and return values in [0, 1].

    Each value maps through its bin's cumulative count ``C`` as
    ``(C - C_min) / (N - C_min)``. A single occupied bin (``C_min == N``)
    yields all ones.
    """
    v = _as_values(intensity)
    if bins < 2:
        raise ParameterError(f"bin count must be >= 2, got {bins}")
    idx = bin_indices(v, bins)
    cum = np.cumsum(np.bincount(idx, minlength=bins))
    n = cum[-1]
    c_min = cum[cum > 0][0]
    if c_min == n:
        return np.ones(len(v))
    return (cum[idx] - c_min) / (n - c_min)


def scale_to_unit(intensity) -> np.ndarray:
    """Min-max scaling; a constant list maps to all zeros."""
    v = _as_values(intensity)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros(len(v))
    return (v - lo) / (hi - lo)


def normalize(intensity, method: str, bins: int = DEFAULT_BINS):
    if method == "equalize":
        return equalize(intensity, bins)
    if method == "minmax":
        return scale_to_unit(intensity)
    if method == "none":
        return np.asarray(intensity, dtype=np.float64)
    raise ParameterError(f"unknown intensity method {method!r}")
