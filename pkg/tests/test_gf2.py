import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scottrank.gf2 import (
    gf2_rank,
    gf2_row_reduce,
    in_span,
    is_independent,
    matrix_to_words,
    rref_basis,
    span,
    words_to_matrix,
)

from strategies import words


def test_words_and_matrices():
    mat = words_to_matrix([0b011, 0b100], 3)
    assert mat.tolist() == [[1, 1, 0], [0, 0, 1]]
    assert matrix_to_words(mat) == [0b011, 0b100]
    assert words_to_matrix([], 4).shape == (0, 4)


def test_row_reduce():
    result = gf2_row_reduce(np.array([[1, 1, 0], [1, 0, 1], [0, 1, 1]]))
    assert result.rank == 2
    assert result.pivots == (0, 1)
    assert result.matrix[2].tolist() == [0, 0, 0]
    assert gf2_rank(np.zeros((0, 3), dtype=np.uint8)) == 0


def test_rref_basis():
    assert rref_basis([0b11, 0b01], 2) == (0b01, 0b10)
    assert rref_basis([0b11, 0b11], 2) == (0b11,)
    assert rref_basis([], 3) == ()


def test_span_and_independence():
    assert span([0b01, 0b10]) == [0, 1, 2, 3]
    assert span([]) == [0]
    assert in_span(0b11, [0b01, 0b10], 2)
    assert not in_span(0b100, [0b011], 3)
    assert in_span(0, [], 3)
    assert not in_span(1, [], 3)
    assert is_independent([0b01, 0b10], 2)
    assert not is_independent([0b01, 0b10, 0b11], 2)


@pytest.mark.property_based
@given(st.lists(words(4), max_size=5), words(4))
@settings(max_examples=100, deadline=None)
def test_span_membership(ws, w):
    members = set(span(ws))
    assert in_span(w, ws, 4) == (w in members)
    basis = rref_basis(ws, 4)
    assert set(span(basis)) == members
    assert is_independent(basis, 4)
