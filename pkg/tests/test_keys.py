import numpy as np
import pytest

from fragkey.core import ExtractionError, seeded_rng
from fragkey.keys import extract_key, key_cells, server_expected_key
from fragkey.patterns import make_key_library, make_regular_pattern, split_fragments


def test_single_cell_key():
    lib = make_key_library(4, 4, "ABCDEFGH", seeded_rng(0))
    frag = np.zeros((4, 4), dtype=np.uint8)
    frag[2, 3] = 1
    assert extract_key(frag, frag, lib) == lib[2][3]


def test_all_dark_fragment_gives_empty_key():
    lib = make_key_library(3, 3, "XY", seeded_rng(0))
    frag = np.zeros((3, 3), dtype=np.uint8)
    assert server_expected_key(frag, lib) == ""


def test_row_major_order():
    lib = np.array([["A", "B"], ["C", "D"]])
    frag = np.array([[0, 1], [1, 1]])
    assert extract_key(frag, frag, lib) == "BCD"
    assert server_expected_key(frag, lib, index_dark=True) == "A"


def test_subset_violation():
    lib = np.array([["A", "B"], ["C", "D"]])
    with pytest.raises(ExtractionError):
        extract_key(np.array([[1, 0], [0, 0]]), np.array([[1, 1], [0, 0]]), lib)
    with pytest.raises(ExtractionError):
        extract_key(np.zeros((3, 3)), np.array([[1, 1], [0, 0]]), lib)


def test_fragment_keys_tile_parent():
    parent = make_regular_pattern("rhombus", 8, 8)
    fs = split_fragments(parent, 4, seeded_rng(5))
    cells = [set(key_cells(f).tolist()) for f in fs.fragments]
    assert sum(len(c) for c in cells) == int(parent.sum())
    assert set().union(*cells) == set(np.flatnonzero(parent.ravel()).tolist())
    libs = [make_key_library(8, 8, "ABCDEFGHIJKLMNOPQRSTUVWXYZ", seeded_rng(j)) for j in range(4)]
    for f, lib in zip(fs.fragments, libs):
        assert extract_key(parent, f, lib) == server_expected_key(f, lib)
        assert len(server_expected_key(f, lib)) == int(f.sum())
