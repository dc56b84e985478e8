"""Reading a user's key out of its private library."""

from __future__ import annotations

import numpy as np

from .core import ConfigError, ExtractionError, check_pattern

__all__ = ["key_cells", "server_expected_key", "extract_key"]


def key_cells(fragment, index_dark: bool = False) -> np.ndarray:
    """Row-major flat indices of the cells that carry the key."""
    frag = check_pattern(fragment, "fragment")
    return np.flatnonzero(frag.ravel() == (0 if index_dark else 1))


def server_expected_key(fragment, library, index_dark: bool = False) -> str:
    lib = np.asarray(library)
    frag = check_pattern(fragment, "fragment")
    if lib.shape != frag.shape:
        raise ConfigError(f"library shape {lib.shape} does not match fragment shape {frag.shape}")
    return "".join(lib.ravel()[key_cells(frag, index_dark)])


def extract_key(fsp, own_fragment, library, index_dark: bool = False) -> str:
    """Key held by a user after an authentic session.

    The symbols of ``library`` under the bright cells of ``own_fragment``
    (dark cells with ``index_dark``), read row by row.
    """
    fsp = np.asarray(fsp)
    frag = check_pattern(own_fragment, "fragment")
    if fsp.shape != frag.shape:
        raise ExtractionError(f"FSP shape {fsp.shape} does not match fragment shape {frag.shape}")
    if ((frag == 1) & (fsp < 1)).any():
        raise ExtractionError("fragment has bright cells outside the synthesized pattern")
    return server_expected_key(frag, library, index_dark)
