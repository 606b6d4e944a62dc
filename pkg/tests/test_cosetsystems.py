import pytest
from hypothesis import given, settings
from pydantic import ValidationError

from scottrank.base import FiniteStructure, Signature, isomorphic
from scottrank.configs import Caps
from scottrank.cosetsystems import (
    A_set,
    BitVec,
    CoherentSet,
    Coset,
    F_map,
    FinCosetSystem,
    base_system,
    coherent_pair,
    group_part,
    is_coherent,
    limit,
    pad_f,
    rank_is_stable,
    rnk_coset,
    set_rank_bruteforce,
    singleton_ranks,
    successor,
    tau,
    to_unary_structure,
)
from scottrank.posets import benchmark, build_truncated_model
from scottrank.utils import CapExceeded, InvariantViolation
from scottrank.values import Fin, Infty

from strategies import words


def test_bitvec():
    v = BitVec.parse("0110")
    assert v.word == 0b0110
    assert v.at(1) == 1
    with pytest.raises(IndexError):
        v.at(4)
    w = BitVec.parse("01(1)")
    assert (w.kind, w.length, w.tail) == ("evconst", 1, 1)
    assert str(w) == "0(1)"
    assert w.at(5) == 1
    assert w.truncate(3) == 0b110
    assert str(BitVec.parse("10")) == "10"
    with pytest.raises(ValidationError):
        BitVec(kind="evconst", word=1, length=1, tail=1)
    with pytest.raises(ValidationError):
        BitVec(kind="periodic")
    with pytest.raises(ValueError):
        BitVec.parse("012")


def test_coset_canonical_form():
    c = Coset(m=3, basis=[0b011], offset=0b111)
    assert c.offset == 0b100
    assert c.elements() == [0b100, 0b111]
    assert 0b111 in c
    assert 0b011 not in c
    assert c.size == 2
    assert Coset(m=2, basis=[3], offset=3) == Coset(m=2, basis=[3])
    assert Coset.of(3, [3, 3]).basis == (3,)
    with pytest.raises(ValidationError):
        Coset(m=2, basis=[1, 1])
    with pytest.raises(ValidationError):
        Coset(m=2, offset=4)


def test_coset_operations():
    c = Coset(m=1, offset=1)
    shifted = c.shift(0b10, 2)
    assert shifted.m == 3
    assert shifted.elements() == [0b110]
    assert str(shifted) == "011+<>"
    joined = Coset(m=2).union(Coset(m=2, offset=3))
    assert joined.elements() == [0, 3]
    with pytest.raises(InvariantViolation):
        Coset(m=2, basis=[1]).union(Coset(m=2, offset=2))
    assert Coset(m=2, basis=[1], offset=2).group() == Coset(m=2, basis=[1])


def test_coset_raw_form():
    c = Coset.from_raw(3, {"offset": "001", "basis": ["110"]})
    assert c.offset == 0b100
    assert c.basis == (0b011,)
    assert c.query_dict() == {"offset": "001", "basis": ["110"]}
    assert Coset.from_raw(2, {}) == Coset(m=2)


def test_fin_coset_system():
    C = base_system(2, 1)
    assert C.pairs() == [(0, 0), (1, 0), (2, 0), (3, 1)]
    assert C.contains(3, 1)
    assert not C.contains(3, 0)
    assert not C.contains(4, 0)
    assert FinCosetSystem.from_raw(C.query_dict()) == C
    with pytest.raises(ValidationError):
        FinCosetSystem(n=2, m=1, cosets=[Coset(m=1)] * 3)
    with pytest.raises(ValidationError):
        FinCosetSystem(n=1, m=1, cosets=[Coset(m=1), Coset(m=2)])
    with pytest.raises(ValidationError):
        FinCosetSystem(n=0, m=1, cosets=[Coset(m=1)])
    assert group_part(C).pairs() == [(0, 0), (1, 0), (2, 0), (3, 0)]


def test_coherence():
    assert coherent_pair((0, 0), (1, 1), 2, 1)
    assert not coherent_pair((0, 0), (2, 1), 2, 1)
    assert not coherent_pair((0, 0), (0, 1), 2, 1)
    assert is_coherent([(0, 0), (1, 1), (2, 0)], 2, 1)
    assert CoherentSet.parse(2, 1, ["00,0", "10,1"]).pairs == frozenset({(0, 0), (1, 1)})
    with pytest.raises(ValidationError):
        CoherentSet.parse(2, 1, ["00,0", "01,1"])


def test_singleton_ranks_of_base_system():
    C = base_system(2, 1)
    assert singleton_ranks(C) == {(0, 0): Fin(1), (1, 0): Fin(0), (2, 0): Fin(1), (3, 1): Fin(0)}
    assert rnk_coset(C) == Fin(1)
    assert rnk_coset(C, [(0, 0)]) == Fin(1)
    assert rnk_coset(C, [(0, 0), (3, 1)]) == Fin(0)
    assert rnk_coset(base_system(1, 1)) == Infty
    with pytest.raises(ValueError):
        rnk_coset(C, [(0, 1)])
    with pytest.raises(ValueError):
        rnk_coset(C, [(1, 0), (3, 1)])
    with pytest.raises(CapExceeded):
        singleton_ranks(C, caps=Caps(tuple_space=4))


def test_bruteforce_agrees_on_base_system():
    C = base_system(2, 1)
    ranks = singleton_ranks(C)
    assert set_rank_bruteforce(C) == rnk_coset(C)
    for pair, r in ranks.items():
        assert set_rank_bruteforce(C, [pair]) == r
    assert set_rank_bruteforce(base_system(1, 1)) == Infty


def test_successor_ladder():
    C = base_system(2, 1)
    for expected in (1, 2, 3):
        assert rnk_coset(C) == Fin(expected)
        C = successor(C)
    assert (C.n, C.m) == (8, 7)


def test_bruteforce_on_first_successor():
    D = successor(base_system(2, 1))
    assert set_rank_bruteforce(D) == rnk_coset(D) == Fin(2)
    ranks = singleton_ranks(D)
    for pair, r in ranks.items():
        assert set_rank_bruteforce(D, [pair]) == r
    with pytest.raises(CapExceeded):
        set_rank_bruteforce(D, caps=Caps(tuple_space=2))


@pytest.mark.slow
@pytest.mark.parametrize("times", [2, 3])
def test_successor_ladder_bruteforce(times):
    C = base_system(2, 1)
    for _ in range(times):
        C = successor(C)
    assert set_rank_bruteforce(C) == rnk_coset(C) == Fin(times + 1)


@pytest.mark.slow
def test_bruteforce_pairs_on_second_successor():
    D = successor(successor(base_system(2, 1)))
    ranks = singleton_ranks(D)
    ones = (1 << D.n) - 1
    for f in (ones, ones ^ 0b100, 0b0101):
        for g in D[f].elements():
            assert set_rank_bruteforce(D, [(f, g)]) == ranks[(f, g)]


def test_successor_contains_the_moved_sets():
    C = base_system(2, 1)
    D = successor(C)
    for i in (0, 1):
        assert all(D.contains(f, g) for f, g in A_set(i, C))
        assert all(D.contains(f, g) for f, g in F_map(i, C.pairs(), C.n, C.m))
        assert is_coherent(F_map(i, C.pairs(), C.n, C.m), D.n, D.m) == is_coherent(
            C.pairs(), C.n, C.m
        )
    assert F_map(0, [(0, 0)], 2, 1) == [(0b0011, 0)]
    assert F_map(1, [(1, 1)], 2, 1) == [(0b0101, 0b101)]
    assert len(A_set(0, C)) == 12
    with pytest.raises(ValueError):
        F_map(2, [], 2, 1)
    with pytest.raises(ValueError):
        A_set(2, C)


def test_padding_keeps_rank():
    C = base_system(2, 1)
    padded = pad_f(C)
    assert padded.n == 3
    assert padded[0b101] == C[0b01]
    assert rank_is_stable(C)
    assert rank_is_stable(successor(C))


def test_limit():
    parts = [base_system(2, 2), successor(base_system(2, 2))]
    L = limit(parts)
    assert L.selectors == [0, 3]
    assert L.blocks == [[1, 2], [4, 5, 6, 7]]
    D = L.system
    assert (D.n, D.m) == (8, 8)
    ranks = singleton_ranks(D)
    for (f, g), r in ranks.items():
        assert tau(L, f, g) == r
    assert rnk_coset(D) == Fin(2)
    with pytest.raises(ValueError):
        tau(L, 0, 0)
    assert L.query_dict()["selectors"] == [0, 3]


def test_limit_rejects_bad_components():
    with pytest.raises(ValueError):
        limit([])
    with pytest.raises(ValueError):
        limit([base_system(2, 1)])
    with pytest.raises(ValueError):
        limit([base_system(2, 2), base_system(2, 2)])


def test_unary_structure_is_the_increasing_ladder():
    C = base_system(2, 2)
    M = to_unary_structure(C)
    assert M.universe == 16
    assert len(M.interp["C"]) == 4
    plain = FiniteStructure(
        signature=Signature(relations=[r for r in M.signature.relations if r[0] != "C"]),
        universe=M.universe,
        interp={k: v for k, v in M.interp.items() if k != "C"},
    )
    model = build_truncated_model(benchmark(3), depth=2)
    assert isomorphic(plain, model.structure, caps=Caps(universe=16)) is not None


@pytest.mark.property_based
@given(words(2), words(2), words(2), words(2))
@settings(max_examples=100, deadline=None)
def test_coherence_is_symmetric(f, g, f2, g2):
    assert coherent_pair((f, g), (f2, g2), 2, 2) == coherent_pair((f2, g2), (f, g), 2, 2)
