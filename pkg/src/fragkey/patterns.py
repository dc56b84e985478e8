"""Regular parent patterns, disjoint fragment splitting and key libraries."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import ConfigError, SplitError, check_pattern

__all__ = [
    "SHAPES",
    "DEFAULT_ALPHABET",
    "parse_ratio",
    "bright_count_for_ratio",
    "make_regular_pattern",
    "FragmentSet",
    "split_fragments",
    "make_key_library",
]

SHAPES = ("rhombus", "rectangle", "cross", "checker")
DEFAULT_ALPHABET = string.ascii_uppercase


def parse_ratio(ratio) -> tuple[int, int]:
    """Parse a ``"dark:bright"`` ratio such as ``"13:3"``."""
    if isinstance(ratio, str):
        try:
            dark, bright = (int(x) for x in ratio.split(":"))
        except ValueError as exc:
            raise ConfigError(f"ratio must look like 'dark:bright', got {ratio!r}") from exc
    else:
        dark, bright = (int(x) for x in ratio)
    if dark < 0 or bright < 0 or dark + bright == 0:
        raise ConfigError(f"invalid dark:bright ratio {dark}:{bright}")
    return dark, bright


def bright_count_for_ratio(cells: int, ratio, min_bright: int = 1) -> int:
    """``max(min_bright, round_half_up(cells * bright / (dark + bright)))``."""
    dark, bright = parse_ratio(ratio)
    if bright == 0:
        raise ConfigError("a ratio with no bright part yields an empty pattern")
    exact = Fraction(cells * bright, dark + bright)
    count = max(int(min_bright), math.floor(exact + Fraction(1, 2)))
    if count > cells:
        raise ConfigError(f"{count} bright cells do not fit in {cells}")
    return count


def _centered(rows: int, cols: int):
    r, c = np.indices((rows, cols), dtype=np.float64)
    # normalized so that the grid border sits at distance 1 on either axis
    return np.abs(r - (rows - 1) / 2) / (rows / 2), np.abs(c - (cols - 1) / 2) / (cols / 2)


def _priority(shape: str, rows: int, cols: int):
    """Per-cell fill keys; cells light up in ascending key order."""
    dr, dc = _centered(rows, cols)
    # (|dr|, |dc|) identifies the orbit of a cell under horizontal+vertical flips
    if shape == "rhombus":
        keys = [dr + dc]
    elif shape == "rectangle":
        keys = [np.maximum(dr, dc)]
    elif shape == "cross":
        keys = [np.minimum(dr, dc), np.maximum(dr, dc)]
    elif shape == "checker":
        parity = np.indices((rows, cols)).sum(axis=0) % 2
        keys = [parity.astype(np.float64), dr + dc]
    else:
        raise ConfigError(f"unknown shape {shape!r}; choose from {SHAPES}")
    return [np.round(k, 9) for k in keys] + [np.round(dr, 9), np.round(dc, 9)]


def _default_count(shape: str, rows: int, cols: int) -> int:
    dr, dc = _centered(rows, cols)
    eps = 1e-9
    if shape == "rhombus":
        # the rhombus inscribed in the grid, vertices at the edge midpoints
        return int((dr + dc <= 1 + eps).sum())
    if shape == "rectangle":
        return int((np.maximum(dr, dc) <= 0.5 + eps).sum())
    if shape == "cross":
        return int((np.minimum(dr, dc) <= 0.25 + eps).sum())
    if shape == "checker":
        return (rows * cols + 1) // 2
    raise ConfigError(f"unknown shape {shape!r}; choose from {SHAPES}")


def make_regular_pattern(shape: str, p: int, q: int, ratio=None, min_bright: int = 1) -> np.ndarray:
    """Build a deterministic regular pattern of ``q`` rows by ``p`` columns.

    Without ``ratio`` the shape's natural extent is used (for ``rhombus`` the
    filled diamond inscribed in the grid).  With a ``"dark:bright"`` ratio the
    shape grows from the center until it holds
    ``max(min_bright, round(p*q*bright/(dark+bright)))`` cells; cells of the
    same symmetry orbit are added together, so the result is mirror
    symmetric whenever the count allows it.
    """
    p, q = int(p), int(q)
    if p < 2 or q < 2:
        raise ConfigError(f"patterns must be at least 2x2, got {p}x{q}")
    cells = p * q
    if ratio is None:
        count = max(int(min_bright), _default_count(shape, q, p))
        if count > cells:
            raise ConfigError(f"{count} bright cells do not fit in {cells}")
    else:
        count = bright_count_for_ratio(cells, ratio, min_bright)
    keys = _priority(shape, q, p)
    index = np.arange(cells)
    order = np.lexsort([index] + [k.ravel() for k in reversed(keys)])
    flat = np.zeros(cells, dtype=np.uint8)
    flat[order[:count]] = 1
    return flat.reshape(q, p)


@dataclass(frozen=True, eq=False)
class FragmentSet:
    fragments: tuple
    parent: np.ndarray

    @property
    def t(self) -> int:
        return len(self.fragments)

    def stack(self) -> np.ndarray:
        return np.stack(self.fragments)

    def bright_counts(self) -> list[int]:
        return [int(f.sum()) for f in self.fragments]


def split_fragments(parent, t: int, rng: np.random.Generator, balanced: bool = False) -> FragmentSet:
    """Assign every bright cell of ``parent`` to exactly one of ``t`` users.

    Each user first receives one distinct bright cell, so no fragment is
    empty; the remaining cells go to uniformly random users, or round-robin
    over a shuffled order when ``balanced``.
    """
    parent = check_pattern(parent, "parent")
    t = int(t)
    if t < 1:
        raise SplitError("need at least one user")
    bright = np.flatnonzero(parent.ravel())
    if bright.size < t:
        raise SplitError(f"parent has {bright.size} bright cells, cannot give one to each of {t} users")
    cells = rng.permutation(bright)
    owner = np.empty(cells.size, dtype=np.int64)
    owner[:t] = np.arange(t)
    if balanced:
        owner[t:] = np.arange(t, cells.size) % t
    else:
        owner[t:] = rng.integers(0, t, size=cells.size - t)
    fragments = []
    for user in range(t):
        flat = np.zeros(parent.size, dtype=np.uint8)
        flat[cells[owner == user]] = 1
        frag = flat.reshape(parent.shape)
        frag.setflags(write=False)
        fragments.append(frag)
    parent = parent.copy()
    parent.setflags(write=False)
    return FragmentSet(tuple(fragments), parent)


def make_key_library(p: int, q: int, alphabet=DEFAULT_ALPHABET, rng: np.random.Generator | None = None) -> np.ndarray:
    """A ``q`` x ``p`` grid of symbols drawn independently and uniformly."""
    symbols = list(alphabet)
    if not symbols:
        raise ConfigError("alphabet must not be empty")
    if any(not isinstance(s, str) or len(s) != 1 for s in symbols):
        raise ConfigError("alphabet symbols must be single characters")
    if rng is None:
        raise ConfigError("a seeded generator is required")
    idx = rng.integers(0, len(symbols), size=(int(q), int(p)))
    return np.array(symbols, dtype="<U1")[idx]
