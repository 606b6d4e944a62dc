import pytest
from pydantic import ValidationError

from scottrank.configs import Caps
from scottrank.invsystems import (
    AbGroup,
    CbarSystem,
    Homomorphism,
    InvSystem,
    block_orders,
    build_tree_system,
    closure,
    cyclic_composition,
    embed_block_word,
    extend_strong,
    finishing_element,
    is_alpha_strong,
    materialize,
    rank,
    rank_table,
    strongness,
    subtree_name,
    system_rank,
    tree_rank_correspondence,
    zk_stability,
)
from scottrank.posets import FinitePoset
from scottrank.utils import CapExceeded
from scottrank.values import Fin, Infty


def split_system():
    """p < q < r1, q < r2: A_q = Z2 x Z2 receives r1 and r2 on different
    coordinates, and p sums the coordinates of q."""
    index = FinitePoset(
        elems=["p", "q", "r1", "r2"], le=[("p", "q"), ("q", "r1"), ("q", "r2")]
    )
    return InvSystem(
        index=index,
        groups={
            "p": AbGroup(orders=[2]),
            "q": AbGroup(orders=[2, 2]),
            "r1": AbGroup(orders=[2]),
            "r2": AbGroup(orders=[2]),
        },
        maps=[
            Homomorphism(lower="p", upper="q", matrix=[[1, 1]]),
            Homomorphism(lower="q", upper="r1", matrix=[[1], [0]]),
            Homomorphism(lower="q", upper="r2", matrix=[[0], [1]]),
        ],
        require_directed=False,
    )


def z_chain(length):
    names = ["p", "q", "r"][:length]
    return InvSystem(
        index=FinitePoset(elems=names, le=list(zip(names, names[1:]))),
        groups={p: AbGroup(orders=[0]) for p in names},
        maps=[Homomorphism(lower=a, upper=b, matrix=[[2]]) for a, b in zip(names, names[1:])],
    )


def test_ab_groups():
    assert str(AbGroup(orders=[2, 0])) == "C2 x Z"
    assert str(AbGroup()) == "trivial"
    assert AbGroup(orders=[3, 0]).moduli(64) == (3, 64)
    with pytest.raises(ValidationError):
        AbGroup(orders=[-1])


def test_closure():
    assert closure([[1, 1]], (2, 4), 100) == [(0, 0), (0, 2), (1, 1), (1, 3)]
    assert closure([], (2, 2), 100) == [(0, 0)]
    with pytest.raises(CapExceeded):
        closure([[1]], (64,), 10)


def test_composed_maps():
    sys = split_system()
    assert sys.project("p", "r1", (1,), 64) == (1,)
    assert sys.project("p", "q", (1, 1), 64) == (0,)
    assert sys.above("q") == ["r1", "r2"]
    assert sys.diagnostics(64, 100) == []


def test_rank_of_split_system():
    sys = split_system()
    table = rank_table(sys)
    assert table["p"][(1,)] == Fin(1)
    assert table["p"][(0,)] == Infty
    assert table["q"][(1, 0)] == Fin(0)
    assert table["r1"][(1,)] == Infty
    assert rank(sys, "p", [1]) == Fin(1)
    assert system_rank(sys) == Fin(2)
    with pytest.raises(ValueError):
        rank(sys, "s", [0])
    with pytest.raises(ValueError):
        rank(sys, "p", [5])


def test_doubling_chains():
    two = z_chain(2)
    assert rank(two, "p", [1]) == Fin(0)
    assert rank(two, "p", [2]) == Infty
    three = z_chain(3)
    assert rank(three, "p", [2]) == Fin(0)
    assert rank(three, "p", [4]) == Infty
    assert rank(three, "q", [2]) == Infty
    assert zk_stability(three) == []
    assert system_rank(three, caps=Caps(zk=16)) == Fin(1)


def test_invalid_systems():
    index = FinitePoset(elems=["p", "q"], le=[("p", "q")])
    with pytest.raises(ValueError):
        InvSystem(index=index, groups={"p": AbGroup(orders=[2])})
    with pytest.raises(ValueError):
        InvSystem(
            index=index,
            groups={"p": AbGroup(orders=[2]), "q": AbGroup(orders=[2])},
            maps=[Homomorphism(lower="q", upper="p", matrix=[[1]])],
        )
    with pytest.raises(ValueError):
        InvSystem(
            index=index,
            groups={"p": AbGroup(orders=[2]), "q": AbGroup(orders=[2])},
            maps=[Homomorphism(lower="p", upper="q", matrix=[[1, 1]])],
        )
    with pytest.raises(ValueError):
        InvSystem(index=index, groups={"p": AbGroup(orders=[2]), "q": AbGroup(orders=[2])})


def test_diagnostics():
    index = FinitePoset(elems=["p", "q"], le=[("p", "q")])
    ill_defined = InvSystem(
        index=index,
        groups={"p": AbGroup(orders=[2]), "q": AbGroup(orders=[3])},
        maps=[Homomorphism(lower="p", upper="q", matrix=[[1]])],
    )
    assert any("not well defined" in e for e in ill_defined.diagnostics(64, 100))
    with pytest.raises(ValueError):
        rank_table(ill_defined)

    chain = FinitePoset(elems=["p", "q", "r"], le=[("p", "q"), ("q", "r")])
    skewed = InvSystem(
        index=chain,
        groups={p: AbGroup(orders=[2]) for p in "pqr"},
        maps=[
            Homomorphism(lower="p", upper="q", matrix=[[1]]),
            Homomorphism(lower="q", upper="r", matrix=[[1]]),
            Homomorphism(lower="p", upper="r", matrix=[[0]]),
        ],
    )
    assert any("do not commute" in e for e in skewed.diagnostics(64, 100))

    spread = InvSystem(
        index=FinitePoset(elems=["a", "b"]),
        groups={"a": AbGroup(orders=[2]), "b": AbGroup(orders=[2])},
    )
    assert any("common upper bound" in e for e in spread.diagnostics(64, 100))
    assert spread.model_copy(update={"require_directed": False}).diagnostics(64, 100) == []


def test_cbar_system_restrictions():
    sys = CbarSystem(
        index=FinitePoset(elems=["a", "b"], le=[("a", "b")]),
        components=[2, 3],
        supports={"a": [1], "b": [0, 1]},
        generators={"b": [[1, 1]]},
    )
    assert sys.groups["b"].orders == [2, 3]
    assert sys.project("a", "b", (1, 2), 64) == (2,)
    assert rank(sys, "a", [1]) == Infty
    with pytest.raises(ValueError):
        CbarSystem(
            index=FinitePoset(elems=["a", "b"], le=[("a", "b")]),
            components=[2, 3],
            supports={"a": [0], "b": [1]},
        )


def test_tree_system_shape():
    ts = build_tree_system([None, 0, 1])
    assert ts.root == 0
    assert [ts.rank_of(t) for t in ts.nodes] == [2, 1, 0]
    assert ts.succ_plus((0,)) == (0, 1)
    assert ts.subtrees(100) == [(0,), (0, 1), (0, 1, 2)]
    assert len(build_tree_system([None]).elements((0,), 64, 100)) == 1
    assert len(build_tree_system([None, 0, 0]).elements((0,), 64, 100)) == 4
    assert subtree_name((1, 0)) == "{0,1}"
    with pytest.raises(ValidationError):
        build_tree_system([None, 0], order=1)
    with pytest.raises(ValueError):
        build_tree_system([None, None])
    with pytest.raises(ValueError):
        build_tree_system([1, 0])


def test_tree_elements():
    ts = build_tree_system([None, 0, 1])
    f = ts.element((0,), {0: 1, 1: 1}, 64)
    assert f.vector() == (1, 1)
    assert not f.is_zero()
    with pytest.raises(ValueError):
        ts.element((0,), {0: 1}, 64)
    with pytest.raises(ValueError):
        ts.element((0,), {2: 1}, 64)
    with pytest.raises(ValueError):
        ts.element((1,), {}, 64)


def test_strongness_and_extension():
    ts = build_tree_system([None, 0, 1])
    f = ts.element((0,), {0: 1, 1: 1}, 64)
    assert strongness(ts, f) == Fin(1)
    assert strongness(ts, ts.element((0,), {}, 64)) == Infty
    assert is_alpha_strong(ts, (0,), f, Fin(1))
    assert not is_alpha_strong(ts, (0,), f, Fin(2))

    g = extend_strong(ts, (0,), 1, f, Fin(0))
    assert g.u == (0, 1)
    assert g.sigma == {0: 1, 1: 1, 2: 1}
    assert ts.restrict(g, (0,)).sigma == f.sigma
    with pytest.raises(ValueError):
        extend_strong(ts, (0,), 1, f, Fin(1))
    with pytest.raises(ValueError):
        extend_strong(ts, (0,), 2, f, Fin(0))


def test_extension_over_integers():
    ts = build_tree_system([None, 0, 0, 1], order=0)
    f = ts.element((0,), {0: 5, 1: -5}, 64)
    g = extend_strong(ts, (0,), 1, f, Fin(0))
    assert g.sigma[3] == 5
    assert ts.satisfies_sums(g.u, g.sigma, 64)


def test_finishing_element():
    ts = build_tree_system([None, 0, 0, 1])
    f = finishing_element(ts, 1)
    assert f.sigma == {0: 1, 1: 1, 2: 0}
    assert finishing_element(ts, 1, s=2).sigma == {0: 1, 1: 0, 2: 1}
    with pytest.raises(ValueError):
        finishing_element(ts, 1, s=3)
    with pytest.raises(ValueError):
        finishing_element(build_tree_system([None]), 1)


def test_materialize_and_correspondence():
    ts = build_tree_system([None, 0, 1])
    sys = materialize(ts)
    assert sys.index.elems == ["{0}", "{0,1}", "{0,1,2}"]
    assert sys.supports["{0}"] == [0, 1]
    assert sys.diagnostics(64, 100) == []
    f = ts.element((0,), {0: 1, 1: 1}, 64)
    report = tree_rank_correspondence(ts, (0,), f)
    assert report.strongness == Fin(1)
    assert report.rank_below_strongness


def test_block_compositions():
    assert block_orders([2, 3, 0], [[0, 1], [2]]) == [6, 0]
    assert embed_block_word([2, 2], [[0, 1]], [0], [1], 64) == (1, 1)
    B = CbarSystem(
        index=FinitePoset(elems=["J"]),
        components=[2],
        supports={"J": [0]},
        generators={"J": [[1]]},
    )
    composed = cyclic_composition([2, 2], [[0, 1]], B)
    assert composed.elements("J", 64, 100) == [(0, 0), (1, 1)]
    assert composed.supports == {"J": [0, 1]}
    with pytest.raises(ValueError):
        cyclic_composition([2, 2], [[0], [0]], B)
    with pytest.raises(ValueError):
        cyclic_composition([3, 3], [[0, 1]], B)
