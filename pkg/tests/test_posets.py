import pytest
from pydantic import ValidationError

from scottrank.base import FiniteStructure, Signature
from scottrank.configs import Caps
from scottrank.posets import (
    AntichainTail,
    ChainTail,
    FinitePoset,
    LadderTail,
    PosetPresentation,
    benchmark,
    benchmark_witness,
    build_truncated_model,
    chain_refinement,
    check_TP_axioms,
    is_nearly_binary_crosscutting,
    nbc_base,
    parse_tails,
    relation_name,
    validate,
)
from scottrank.utils import CapExceeded, classes_of


def chain_abc():
    return FinitePoset(
        elems=["a", "b", "c"], le=[("a", "b"), ("b", "c")], delta={"a": 2, "b": 2, "c": 2}
    )


def test_finite_poset():
    P = chain_abc()
    assert P.leq("a", "c")
    assert not P.leq("c", "a")
    assert P.below("b") == frozenset({"a", "b"})
    assert P.strictly_below("a") == frozenset()
    assert P.downward_closure(["c"]) == ["a", "b", "c"]
    assert P.is_downward_closed(["a", "b"])
    assert not P.is_downward_closed(["b"])
    assert P.maximal() == ["c"]
    assert P.restrict(["a", "c"]).le == [("a", "c")]
    assert P.size() == 8
    assert P.diagnostics() == []


def test_poset_diagnostics():
    P = FinitePoset(elems=["a", "b"], le=[("a", "b"), ("b", "a")], delta={"a": 1})
    errors = P.diagnostics()
    assert any("delta missing for b" in e for e in errors)
    assert any("below 2" in e for e in errors)
    assert any("antisymmetric" in e for e in errors)


def test_tails():
    chain = ChainTail(name="c")
    assert chain.elements(3) == ["c[0]", "c[1]", "c[2]"]
    assert chain.order(3) == [("c[0]", "c[1]"), ("c[1]", "c[2]")]
    ladder = LadderTail(name="l", ladder="increasing")
    assert ladder.elements(2) == ["l.p[0]", "l.q[0]", "l.p[1]", "l.q[1]"]
    assert ("l.p[0]", "l.q[1]") in ladder.order(2)
    assert ("l.p[1]", "l.q[0]") not in ladder.order(2)
    assert LadderTail(name="l").order(2) == [("l.p[0]", "l.q[0]"), ("l.p[1]", "l.q[1]")]
    with pytest.raises(ValidationError):
        LadderTail(ladder="sideways")


def test_parse_tails():
    tails = parse_tails([{"kind": "chain"}, {"kind": "antichain", "delta": 3}])
    assert isinstance(tails[0], ChainTail)
    assert tails[1].delta == 3
    with pytest.raises(ValueError):
        parse_tails([{"kind": "tree"}])
    assert parse_tails([{"kind": "tree"}, {"kind": "chain"}], errors="ignore")[0].kind == "chain"
    with pytest.warns(UserWarning):
        parse_tails([{"kind": "tree"}], errors="warn")


def test_presentation_raw_round_trip():
    raw = {
        "finite": {"elems": ["a"], "delta": {"a": 3}},
        "tails": [{"kind": "antichain", "above": ["a"]}, {"kind": "ladder", "ladder": "increasing"}],
    }
    P = PosetPresentation.from_raw(raw)
    assert [tail.name for tail in P.tails] == ["t0", "t1"]
    again = PosetPresentation.from_raw(P.query_dict())
    assert again.query_dict() == P.query_dict()
    assert validate(P) == []


def test_validate():
    P = PosetPresentation(
        finite=FinitePoset(elems=["a"], delta={"a": 2}),
        tails=[AntichainTail(above=["b"]), ChainTail(delta=1)],
    )
    errors = validate(P)
    assert any("unknown element b" in e for e in errors)
    assert any("t1" in e and "below 2" in e for e in errors)


def test_truncate():
    P = PosetPresentation(
        finite=FinitePoset(elems=["a"], delta={"a": 3}),
        tails=[AntichainTail(above=["a"])],
    )
    poset = P.truncate(2)
    assert poset.elems == ["a", "t0[0]", "t0[1]"]
    assert poset.leq("a", "t0[1]")
    assert poset.delta["t0[0]"] == 2


def test_nearly_binary_crosscutting():
    for i in range(4):
        result = is_nearly_binary_crosscutting(benchmark(i))
        assert not result
        assert result.counter == "t0"
    P = PosetPresentation(
        finite=FinitePoset(elems=["a", "b"], delta={"a": 3, "b": 2}),
        tails=[AntichainTail(above=["a"])],
    )
    result = is_nearly_binary_crosscutting(P)
    assert result
    assert result.witness == ["a"]
    assert is_nearly_binary_crosscutting(PosetPresentation(tails=[AntichainTail()])).witness == []
    assert is_nearly_binary_crosscutting(PosetPresentation()).value


def test_benchmark_witness():
    for i in range(4):
        witness = benchmark_witness(benchmark(i))
        assert witness.index == i
        assert len(witness.sample) >= 3
    assert benchmark_witness(benchmark(1)).delta_prime == 3
    mixed = PosetPresentation(tails=[LadderTail(ladder="increasing"), ChainTail()])
    assert benchmark_witness(mixed).index == 0

    nbc = PosetPresentation(tails=[AntichainTail()])
    with pytest.raises(ValueError):
        benchmark_witness(nbc)
    assert benchmark_witness(nbc, errors="ignore") is None
    with pytest.warns(UserWarning):
        assert benchmark_witness(nbc, errors="warn") is None
    with pytest.raises(ValueError):
        benchmark(4)


@pytest.mark.parametrize("i,depth,size", [(0, 3, 8), (1, 2, 9), (2, 2, 16), (3, 1, 4)])
def test_benchmark_models_satisfy_axioms(i, depth, size):
    model = build_truncated_model(benchmark(i), depth=depth)
    assert model.structure.universe == size
    assert check_TP_axioms(model.structure, model.poset)


def test_truncated_model_relations():
    model = chain_refinement(2)
    assert model.points == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert model.point_id((1, 0)) == 2
    assert model.relation("t0[0]") == relation_name("t0[0]") == "E_t0[0]"
    E0 = model.structure.interp["E_t0[0]"]
    E1 = model.structure.interp["E_t0[1]"]
    assert classes_of(E0, 4) == [(0, 1), (2, 3)]
    assert classes_of(E1, 4) == [(0,), (1,), (2,), (3,)]


def test_build_truncated_model_errors():
    P = chain_abc()
    with pytest.raises(ValueError):
        build_truncated_model(P, ["b"])
    with pytest.raises(ValueError):
        build_truncated_model(P, ["z"])
    assert build_truncated_model(P, ["a"]).structure.universe == 2
    with pytest.raises(CapExceeded):
        build_truncated_model(benchmark(1), depth=8)
    with pytest.raises(CapExceeded):
        build_truncated_model(P, caps=Caps(build=4))


def test_axiom_failures():
    model = chain_refinement(2)
    wrong_delta = model.poset.model_copy(update={"delta": {"t0[0]": 3, "t0[1]": 2}})
    check = check_TP_axioms(model.structure, wrong_delta)
    assert not check
    assert check.axiom == "splitting"
    assert check.element == "t0[0]"

    sig = Signature(relations=[("E_a", 2)])
    broken = FiniteStructure(signature=sig, universe=2, interp={"E_a": [(0, 0)]})
    a_only = FinitePoset(elems=["a"], delta={"a": 2})
    assert check_TP_axioms(broken, a_only).axiom == "equivalence"
    with pytest.raises(ValueError):
        check_TP_axioms(broken, FinitePoset(elems=["b"], delta={"b": 2}))


def test_nbc_base():
    P = PosetPresentation(
        finite=FinitePoset(elems=["a"], delta={"a": 3}),
        tails=[AntichainTail(above=["a"])],
    )
    model = build_truncated_model(P, depth=2)
    assert model.structure.universe == 12
    assert nbc_base(model, ["a"]) == (0, 4, 8)
