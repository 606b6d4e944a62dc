"""Linear algebra over the 2-element field.

Vectors of length m are stored as ints (bit i is coordinate i) and converted
to `uint8` rows for elimination.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple
import itertools

import numpy as np


def to_gf2(matrix) -> np.ndarray:
    return np.array(matrix, dtype=np.uint8) % 2


def words_to_matrix(words: Sequence[int], m: int) -> np.ndarray:
    if not words:
        return np.zeros((0, m), dtype=np.uint8)
    return np.array([[(w >> i) & 1 for i in range(m)] for w in words], dtype=np.uint8)


def matrix_to_words(matrix: np.ndarray) -> List[int]:
    return [int(sum(1 << i for i, x in enumerate(row) if x)) for row in to_gf2(matrix)]


@dataclass(frozen=True)
class RowReduceResult:
    matrix: np.ndarray
    rank: int
    pivots: Tuple[int, ...]


def gf2_row_reduce(matrix: np.ndarray) -> RowReduceResult:
    mat = to_gf2(matrix).copy()
    m, n = mat.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        pivot = None
        for r in range(row, m):
            if mat[r, col] == 1:
                pivot = r
                break
        if pivot is None:
            continue
        if pivot != row:
            mat[[row, pivot]] = mat[[pivot, row]]
        for r in range(m):
            if r != row and mat[r, col] == 1:
                mat[r, :] ^= mat[row, :]
        pivots.append(col)
        row += 1
    return RowReduceResult(matrix=mat, rank=len(pivots), pivots=tuple(pivots))


def gf2_rank(matrix: np.ndarray) -> int:
    if matrix.shape[0] == 0:
        return 0
    return gf2_row_reduce(matrix).rank


def rref_basis(words: Sequence[int], m: int) -> Tuple[int, ...]:
    """Reduced-echelon basis of the span of `words`, a canonical form."""
    if not words:
        return ()
    reduced = gf2_row_reduce(words_to_matrix(words, m))
    return tuple(matrix_to_words(reduced.matrix[: reduced.rank]))


def in_span(word: int, basis: Sequence[int], m: int) -> bool:
    if word == 0:
        return True
    if not basis:
        return False
    mat = words_to_matrix(list(basis), m)
    aug = words_to_matrix(list(basis) + [word], m)
    return gf2_rank(mat) == gf2_rank(aug)


def is_independent(words: Sequence[int], m: int) -> bool:
    return gf2_rank(words_to_matrix(list(words), m)) == len(words)


def span(basis: Sequence[int]) -> List[int]:
    """All 2^r vectors of the span, in a fixed order."""
    out = []
    for coeffs in itertools.product((0, 1), repeat=len(basis)):
        v = 0
        for c, b in zip(coeffs, basis):
            if c:
                v ^= b
        out.append(v)
    return sorted(out)
