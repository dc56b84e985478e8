"""Computational ghost imaging: bucket measurements and the second-order
correlation reconstruction, plus pixel-unit pooling.

Summation order is fixed so results are bit-reproducible: the reconstruction
centers the buckets, then reduces over measurements with numpy's pairwise
summation along a contiguous axis, in fixed-size pixel chunks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import ConfigError, ProtocolError, SpeckleSet, check_buckets, check_pattern, check_upsample

__all__ = [
    "MeasurementConfig",
    "upsample",
    "downsample_vote",
    "measure",
    "reconstruct_dg2",
    "block_means",
    "block_sums",
    "prefix_unit_scores",
    "center_weighted_profile",
    "GhostImagingReconstructor",
]

_CHUNK = 1024


@dataclass(frozen=True)
class MeasurementConfig:
    """Forward-model settings.

    ``noise_sigma`` is the standard deviation of additive Gaussian detector
    noise as a fraction of the mean noiseless bucket value.  ``source_profile``
    is the illumination intensity at measurement resolution (``None`` means a
    flat field of ones).
    """

    N: int
    nu: int = 1
    noise_sigma: float = 0.0
    source_profile: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"N must be an integer >= 2, got {self.N}")
        check_upsample(self.nu)
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.source_profile is not None:
            prof = np.asarray(self.source_profile, dtype=np.float64)
            if prof.ndim != 2 or not np.isfinite(prof).all() or (prof <= 0).any():
                raise ConfigError("source profile must be a 2-D grid of positive reals")
            object.__setattr__(self, "source_profile", prof)


def upsample(pattern, nu: int) -> np.ndarray:
    """Replicate every pixel-unit into a ``nu`` x ``nu`` block."""
    pat = check_pattern(pattern)
    nu = check_upsample(nu)
    return np.kron(pat, np.ones((nu, nu), dtype=np.uint8))


def downsample_vote(grid, nu: int) -> np.ndarray:
    """Majority vote per block; exact inverse of :func:`upsample`."""
    means = block_means(np.asarray(grid, dtype=np.float64), nu)
    return (means > 0.5).astype(np.uint8)


def _check_blocks(shape, nu):
    nu = check_upsample(nu)
    if len(shape) < 2 or shape[-2] % nu or shape[-1] % nu:
        raise ConfigError(f"image shape {tuple(shape)} is not divisible by nu={nu}")
    return nu


def block_sums(grid, nu: int) -> np.ndarray:
    """Sum over each ``nu`` x ``nu`` block of the trailing two axes."""
    arr = np.asarray(grid)
    nu = _check_blocks(arr.shape, nu)
    rows, cols = arr.shape[-2:]
    lead = arr.shape[:-2]
    blocks = arr.reshape(*lead, rows // nu, nu, cols // nu, nu)
    return blocks.sum(axis=(-3, -1))


def block_means(image, nu: int) -> np.ndarray:
    """Arithmetic mean of each ``nu`` x ``nu`` block."""
    img = np.asarray(image, dtype=np.float64)
    nu = _check_blocks(img.shape, nu)
    return block_sums(img, nu) / (nu * nu)


def measure(obj, speckles: SpeckleSet, cfg: MeasurementConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Bucket values ``S_i = sum(source * I_i * T) + noise``, clamped at zero."""
    obj = np.asarray(obj, dtype=np.float64)
    if obj.shape != speckles.shape:
        raise ConfigError(f"object shape {obj.shape} does not match speckle shape {speckles.shape}")
    if speckles.count != cfg.N:
        raise ConfigError(f"config expects N={cfg.N} speckles, got {speckles.count}")
    weight = obj if cfg.source_profile is None else obj * _profile_for(cfg.source_profile, obj.shape)
    w = weight.ravel()
    support = np.flatnonzero(w)
    flat = speckles.flat()
    if support.size == 0:
        signal = np.zeros(speckles.count)
    elif np.array_equal(w[support], np.ones(support.size)):
        # 0-1 weights: exact integer popcounts
        signal = flat[:, support].sum(axis=1, dtype=np.int64).astype(np.float64)
    else:
        signal = (flat[:, support] * w[support]).sum(axis=1)
    if cfg.noise_sigma > 0:
        if rng is None:
            raise ConfigError("noisy measurement requires a seeded generator")
        scale = cfg.noise_sigma * signal.mean()
        signal = np.maximum(signal + rng.normal(0.0, 1.0, signal.size) * scale, 0.0)
    return signal


def _profile_for(profile: np.ndarray, shape) -> np.ndarray:
    if profile.shape != tuple(shape):
        raise ConfigError(f"source profile shape {profile.shape} does not match {tuple(shape)}")
    return profile


def center_weighted_profile(shape, strength: float = 1.0) -> np.ndarray:
    """Gaussian illumination peaked at the grid center, normalized to mean 1.

    ``strength`` is the inverse width: 0 gives a flat field.
    """
    rows, cols = shape
    r, c = np.indices((rows, cols), dtype=np.float64)
    rr = (r - (rows - 1) / 2) / (rows / 2)
    cc = (c - (cols - 1) / 2) / (cols / 2)
    prof = np.exp(-float(strength) * (rr**2 + cc**2))
    return prof / prof.mean()


def reconstruct_dg2(buckets, speckles: SpeckleSet) -> np.ndarray:
    """``<S I> - <S><I>`` per pixel, at the speckle resolution."""
    s = check_buckets(buckets)
    if s.size != speckles.count:
        raise ProtocolError(f"bucket sequence has {s.size} values but {speckles.count} speckles are shared")
    if s.size < 2:
        raise ConfigError("reconstruction needs at least two measurements")
    rows, cols = speckles.shape
    if (s == s[0]).all():
        return np.zeros((rows, cols))
    centered = s - s.sum() / s.size
    pix = speckles.pixel_major()
    out = np.empty(pix.shape[0])
    for start in range(0, pix.shape[0], _CHUNK):
        stop = start + _CHUNK
        out[start:stop] = (pix[start:stop] * centered).sum(axis=1)
    return (out / s.size).reshape(rows, cols)


def prefix_unit_scores(buckets, unit_counts, lengths) -> np.ndarray:
    """Pixel-unit correlation scores for every prefix length in ``lengths``.

    ``unit_counts[i, u]`` is the number of lit pixels of speckle ``i`` inside
    pixel-unit ``u``.  Row ``k`` of the result equals
    ``block_means(reconstruct_dg2(buckets[:n], speckles.head(n)), nu)`` for
    ``n = lengths[k]``, scaled by the positive factor ``n**2 * nu**2``, so it
    ranks units identically.  Integer inputs are handled in exact integer
    arithmetic.
    """
    s = np.asarray(buckets)
    counts = np.asarray(unit_counts)
    lengths = np.asarray(lengths, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != s.size:
        raise ConfigError("unit_counts must have one row per bucket value")
    if lengths.size and (lengths.min() < 1 or lengths.max() > s.size):
        raise ConfigError("prefix lengths out of range")
    integral = np.array_equal(s, np.round(s)) and s.max(initial=0) < 2**31
    dtype = np.int64 if integral else np.float64
    s = s.astype(dtype)
    counts = counts.astype(dtype)
    cum_sc = np.cumsum(s[:, None] * counts, axis=0)
    cum_s = np.cumsum(s)
    cum_c = np.cumsum(counts, axis=0)
    idx = lengths - 1
    n = lengths.astype(dtype)[:, None]
    return n * cum_sc[idx] - cum_s[idx][:, None] * cum_c[idx]


class GhostImagingReconstructor(TransformerMixin, BaseEstimator):
    """Correlation reconstruction as a transformer.

    ``fit`` takes the shared speckle set (a :class:`SpeckleSet` or an array of
    shape ``(N, rows, cols)``); ``transform`` maps bucket sequences of shape
    ``(n_sequences, N)`` to gray images of shape ``(n_sequences, rows, cols)``.
    With ``pool=True`` the output is pooled to pixel-units of size
    ``upsample``.
    """

    def __init__(self, upsample: int = 1, pool: bool = False):
        self.upsample = upsample
        self.pool = pool

    def fit(self, X, y=None):
        speckles = X if isinstance(X, SpeckleSet) else SpeckleSet(np.asarray(X))
        _check_blocks(speckles.shape, self.upsample)
        self.speckles_ = speckles
        self.n_measurements_ = speckles.count
        self.image_shape_ = speckles.shape
        return self

    def transform(self, X):
        check_is_fitted(self, "speckles_")
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        single = X.ndim == 1
        rows = X[None, :] if single else X
        images = np.stack([reconstruct_dg2(r, self.speckles_) for r in rows])
        if self.pool:
            images = block_means(images, self.upsample)
        return images[0] if single else images
