"""Turning reconstructed gray images into binary fragment patterns."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .core import BinarizeError, ConfigError
from .ghost import block_means

__all__ = [
    "two_means_threshold",
    "top_m_mask",
    "binarize_smooth",
    "binarize_sort",
    "SmoothingBinarizer",
    "SortingBinarizer",
]


def two_means_threshold(values, max_iter: int = 100) -> float:
    """Midpoint between the centers of a 1-D two-cluster k-means.

    Centers start at the minimum and maximum, so the result is
    deterministic.  Raises :class:`BinarizeError` if all values are equal.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        raise BinarizeError("insufficient contrast: all pixel-unit means are equal")
    for _ in range(max_iter):
        mid = lo + (hi - lo) / 2
        high = v > mid
        new_lo, new_hi = float(v[~high].mean()), float(v[high].mean())
        if new_lo == lo and new_hi == hi:
            break
        lo, hi = new_lo, new_hi
    return lo + (hi - lo) / 2


def top_m_mask(scores, m: int) -> np.ndarray:
    """Mark the ``m`` largest entries; ties go to the lowest row-major index."""
    s = np.asarray(scores)
    flat = s.ravel()
    if m < 0 or m > flat.size:
        raise ConfigError(f"bright count {m} outside 0..{flat.size}")
    order = np.argsort(-flat, kind="stable")
    mask = np.zeros(flat.size, dtype=np.uint8)
    mask[order[:m]] = 1
    return mask.reshape(s.shape)


def binarize_smooth(image, nu: int) -> np.ndarray:
    """Pool to pixel-units, then threshold between the two k-means clusters."""
    means = block_means(image, nu)
    threshold = two_means_threshold(means)
    return (means > threshold).astype(np.uint8)


def binarize_sort(image, nu: int, bright_count: int) -> np.ndarray:
    """Light the ``bright_count`` pixel-units with the largest block means."""
    means = block_means(image, nu)
    bright_count = int(bright_count)
    if not 0 <= bright_count <= means.size:
        raise ConfigError(f"bright count {bright_count} outside 0..{means.size}")
    return top_m_mask(means, bright_count)


class _Binarizer(TransformerMixin, BaseEstimator):
    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = check_array(X, ensure_2d=False, allow_nd=True, dtype=np.float64)
        if X.ndim == 2:
            return self._binarize(X)
        if X.ndim != 3:
            raise ConfigError("expected one image or a stack of images")
        return np.stack([self._binarize(img) for img in X])


class SmoothingBinarizer(_Binarizer):
    """Block-mean pooling followed by a two-cluster threshold."""

    def __init__(self, upsample: int = 1):
        self.upsample = upsample

    def _binarize(self, image):
        return binarize_smooth(image, self.upsample)


class SortingBinarizer(_Binarizer):
    """Keep the ``bright_count`` brightest pixel-units."""

    def __init__(self, upsample: int = 1, bright_count: int = 0):
        self.upsample = upsample
        self.bright_count = bright_count

    def _binarize(self, image):
        return binarize_sort(image, self.upsample, self.bright_count)
