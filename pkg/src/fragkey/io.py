"""Text formats: plain PBM for patterns, CSV for buckets and gray images,
ASCII PGM previews, and JSON grids for key libraries."""

from __future__ import annotations

import hashlib
import json
import re

import numpy as np

from .core import FormatError, check_buckets, check_pattern

__all__ = [
    "format_number",
    "serialize_pattern",
    "deserialize_pattern",
    "serialize_buckets",
    "deserialize_buckets",
    "serialize_gray_csv",
    "deserialize_gray_csv",
    "serialize_gray_pgm",
    "serialize_library",
    "deserialize_library",
    "digest",
]


def format_number(value: float) -> str:
    """Shortest decimal text that round-trips the double exactly."""
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def digest(payload: str | bytes) -> str:
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def serialize_pattern(pattern) -> str:
    pat = check_pattern(pattern)
    rows, cols = pat.shape
    body = "".join(" ".join(str(int(v)) for v in row) + "\n" for row in pat)
    return f"P1\n{cols} {rows}\n{body}"


_COMMENT = re.compile(r"#[^\n]*")


def deserialize_pattern(text: str | bytes) -> np.ndarray:
    """Parse a plain (P1) PBM.  Comments and free whitespace are accepted."""
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    text = _COMMENT.sub(" ", text)
    parts = text.split(None, 3)
    if len(parts) < 3 or parts[0] != "P1":
        raise FormatError("not a plain PBM (missing P1 header)")
    try:
        cols, rows = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise FormatError("malformed PBM dimensions") from exc
    if cols < 1 or rows < 1:
        raise FormatError(f"invalid PBM dimensions {cols}x{rows}")
    body = re.sub(r"\s+", "", parts[3] if len(parts) > 3 else "")
    if set(body) - {"0", "1"}:
        raise FormatError("PBM raster may contain only 0 and 1")
    if len(body) != rows * cols:
        raise FormatError(f"PBM claims {cols}x{rows} but holds {len(body)} bits")
    bits = np.frombuffer(body.encode("ascii"), dtype=np.uint8) - np.uint8(ord("0"))
    return bits.reshape(rows, cols).astype(np.uint8)


def serialize_buckets(values) -> str:
    arr = check_buckets(values)
    return "".join(format_number(v) + "\n" for v in arr)


def deserialize_buckets(text: str | bytes) -> np.ndarray:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: not a number: {line!r}") from exc
    if not values:
        raise FormatError("bucket file holds no values")
    try:
        return check_buckets(values)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def serialize_gray_csv(image) -> str:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise FormatError("gray image must be 2-D")
    return "".join(",".join(format_number(v) for v in row) + "\n" for row in img)


def deserialize_gray_csv(text: str | bytes) -> np.ndarray:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows = [line for line in text.splitlines() if line.strip()]
    try:
        grid = [[float(v) for v in line.split(",")] for line in rows]
    except ValueError as exc:
        raise FormatError("non-numeric cell in gray CSV") from exc
    if not grid or len({len(r) for r in grid}) != 1:
        raise FormatError("gray CSV must be a non-empty rectangular grid")
    return np.array(grid, dtype=np.float64)


def serialize_gray_pgm(image) -> str:
    """ASCII PGM preview, affinely rescaled to 0..255.  Lossy: use CSV for data."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros(img.shape, dtype=int) if hi == lo else np.rint((img - lo) * 255.0 / (hi - lo)).astype(int)
    rows, cols = img.shape
    body = "".join(" ".join(str(v) for v in row) + "\n" for row in scaled)
    return f"P2\n{cols} {rows}\n255\n{body}"


def serialize_library(library) -> str:
    lib = np.asarray(library)
    return json.dumps([[str(s) for s in row] for row in lib])


def deserialize_library(text: str | bytes) -> np.ndarray:
    try:
        grid = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError("key library is not valid JSON") from exc
    if (
        not isinstance(grid, list)
        or not grid
        or not all(isinstance(row, list) and row for row in grid)
        or len({len(row) for row in grid}) != 1
    ):
        raise FormatError("key library must be a non-empty rectangular JSON grid")
    if not all(isinstance(s, str) and len(s) == 1 for row in grid for s in row):
        raise FormatError("key library cells must be single-character strings")
    return np.array(grid, dtype="<U1")
