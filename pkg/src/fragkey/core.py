"""Shared types, errors, seeded randomness and input validation.

Conventions used everywhere in the package:

* A pattern is a 2-D ``numpy.uint8`` array of shape ``(rows, cols)`` whose
  cells are ``1`` (bright) or ``0`` (dark).
* All randomness comes from numpy's ``PCG64`` bit generator seeded through
  ``SeedSequence``.  Speckle bits are taken straight from the raw 64-bit
  PCG64 output, so they are reproducible across platforms and numpy
  releases.  Independent sub-streams are derived from a master seed plus a
  string label (see :func:`derive_rng`).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FragkeyError",
    "FormatError",
    "ConfigError",
    "SplitError",
    "ProtocolError",
    "BinarizeError",
    "ExtractionError",
    "seeded_rng",
    "derive_seed",
    "derive_rng",
    "check_pattern",
    "check_int_pattern",
    "check_buckets",
    "check_upsample",
    "SpeckleSet",
    "make_speckles",
]


class FragkeyError(Exception):
    """Base class of every error raised by this package."""


class FormatError(FragkeyError, ValueError):
    """A serialized payload could not be parsed."""


class ConfigError(FragkeyError, ValueError):
    """Invalid parameters or mismatched dimensions."""


class SplitError(FragkeyError, ValueError):
    """A parent pattern cannot be split among the requested users."""


class ProtocolError(FragkeyError):
    """A protocol message violates the expected structure."""


class BinarizeError(FragkeyError):
    """A reconstruction has too little contrast to binarize."""


class ExtractionError(FragkeyError):
    """Key extraction was attempted from an inconsistent session state."""


_SEED_MASK = (1 << 64) - 1


def seeded_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for a 64-bit seed (zero is a valid seed)."""
    return np.random.Generator(np.random.PCG64(int(seed) & _SEED_MASK))


def derive_seed(seed: int, *labels: str | int) -> int:
    """Derive a 64-bit child seed from ``seed`` and a path of labels."""
    key = [int(seed) & _SEED_MASK]
    for label in labels:
        if isinstance(label, str):
            key.append(zlib.crc32(label.encode("utf-8")))
        else:
            key.append(int(label) & _SEED_MASK)
    state = np.random.SeedSequence(key).generate_state(1, np.uint64)
    return int(state[0])


def derive_rng(seed: int, *labels: str | int) -> np.random.Generator:
    return seeded_rng(derive_seed(seed, *labels))


def check_pattern(pattern, name: str = "pattern") -> np.ndarray:
    """Validate a binary pattern and return it as a ``uint8`` array."""
    arr = np.asarray(pattern)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ConfigError(f"{name} must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ConfigError(f"{name} cells must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


def check_int_pattern(pattern, name: str = "pattern") -> np.ndarray:
    arr = np.asarray(pattern)
    if arr.ndim != 2 or arr.size == 0:
        raise ConfigError(f"{name} must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.array_equal(arr, np.round(arr)):
            raise ConfigError(f"{name} cells must be integers")
    if (arr < 0).any():
        raise ConfigError(f"{name} cells must be non-negative")
    return arr.astype(np.int64, copy=False)


def check_buckets(values, name: str = "buckets") -> np.ndarray:
    """Validate a bucket sequence: 1-D, non-empty, finite, non-negative."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ConfigError(f"{name} must be a non-empty 1-D sequence")
    if not np.isfinite(arr).all():
        raise ConfigError(f"{name} must be finite")
    if (arr < 0).any():
        raise ConfigError(f"{name} must be non-negative")
    return arr


def check_upsample(nu) -> int:
    if isinstance(nu, bool) or int(nu) != nu or nu < 1:
        raise ConfigError(f"upsample factor must be a positive integer, got {nu!r}")
    return int(nu)


@dataclass(frozen=True, eq=False)
class SpeckleSet:
    """The shared illumination key: ``count`` random 0-1 matrices.

    ``matrices`` has shape ``(count, rows, cols)``.  A set built by
    :func:`make_speckles` is fully described by ``(seed, count, shape,
    probability)``, which is what travels over the private channel.
    """

    matrices: np.ndarray
    seed: int | None = None
    probability: float = 0.5

    def __post_init__(self):
        m = np.asarray(self.matrices)
        if m.ndim != 3 or min(m.shape) < 1:
            raise ConfigError(f"speckle matrices must have shape (N, rows, cols), got {m.shape}")
        if m.dtype != np.uint8:
            if not np.isin(m, (0, 1)).all():
                raise ConfigError("speckle matrices must be 0-1 valued")
            m = m.astype(np.uint8)
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @property
    def count(self) -> int:
        return self.matrices.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrices.shape[1], self.matrices.shape[2]

    def flat(self) -> np.ndarray:
        """Matrices as a ``(count, rows*cols)`` view."""
        return self.matrices.reshape(self.count, -1)

    def pixel_major(self) -> np.ndarray:
        """Contiguous ``(rows*cols, count)`` copy, built once and cached."""
        cached = self.__dict__.get("_pixel_major")
        if cached is None:
            cached = np.ascontiguousarray(self.flat().T)
            cached.setflags(write=False)
            object.__setattr__(self, "_pixel_major", cached)
        return cached

    def head(self, n: int) -> SpeckleSet:
        """The first ``n`` matrices (identical to regenerating with count n)."""
        return SpeckleSet(self.matrices[:n], self.seed, self.probability)

    def descriptor(self) -> dict:
        return {
            "seed": self.seed,
            "count": self.count,
            "shape": list(self.shape),
            "probability": self.probability,
        }


def make_speckles(count: int, shape: tuple[int, int], seed: int, probability: float = 0.5) -> SpeckleSet:
    """Generate i.i.d. Bernoulli speckle matrices.

    With ``probability == 0.5`` every matrix consumes ``ceil(rows*cols/64)``
    raw PCG64 words and its pixels are the little-endian bits of those
    words, so the first ``n`` matrices never depend on ``count``.
    """
    count = int(count)
    rows, cols = (int(s) for s in shape)
    if count < 1 or rows < 1 or cols < 1:
        raise ConfigError(f"invalid speckle set size {count} x {rows} x {cols}")
    if not 0.0 < probability < 1.0:
        raise ConfigError(f"speckle probability must lie in (0, 1), got {probability}")
    pixels = rows * cols
    rng = seeded_rng(seed)
    if probability == 0.5:
        words = -(-pixels // 64)
        raw = rng.bit_generator.random_raw(count * words).astype("<u8", copy=False)
        bits = np.unpackbits(raw.view(np.uint8), bitorder="little")
        mats = bits.reshape(count, words * 64)[:, :pixels]
    else:
        mats = (rng.random((count, pixels)) < probability).astype(np.uint8)
    return SpeckleSet(mats.reshape(count, rows, cols), seed=int(seed), probability=float(probability))
