import pytest
from pydantic import ValidationError

from scottrank.backforth import is_base
from scottrank.base import linear_order, pure_set
from scottrank.configs import Caps
from scottrank.posets import benchmark, build_truncated_model
from scottrank.products import (
    BorelVerdict,
    GadgetFactor,
    GadgetFamily,
    GadgetFile,
    GadgetMeasurement,
    GadgetSpec,
    ProductSpec,
    borel_verdict,
    build_rank_gadget,
    build_truncated_product,
    construct_base,
    coordinate_relation,
    cyclic_orders,
    gadget_diagnostics,
    gadget_measurements,
    gadget_system,
    is_monotone,
    istar,
    lifted_relation,
    p2_renaming,
    permutation_order,
    product_points,
    pure_sets,
    two_class_factors,
)
from scottrank.utils import CapExceeded
from scottrank.values import Fin, Infty


def swap_gadget(families=None):
    """Both coordinates of pure_sets(3) with g = (1 2) fixing 0."""
    factors = [GadgetFactor(n=n, o=0, g=[0, 2, 1], d=1) for n in range(2)]
    if families is None:
        families = [GadgetFamily(I=[0], generators=[[1]]), GadgetFamily(I=[0, 1])]
    return GadgetSpec(factors=factors, families=families)


def test_product_spec():
    spec = ProductSpec(prefix=[pure_set(3)], tail=[pure_set(2), linear_order(2)])
    assert spec.sizes(5) == [3, 2, 2, 2, 2]
    assert spec.factor(2) == linear_order(2)
    assert spec.factor(4) == linear_order(2)
    again = ProductSpec.from_raw(spec.query_dict())
    assert again == spec
    with pytest.raises(ValidationError):
        ProductSpec(tail=[])
    with pytest.raises(ValidationError):
        ProductSpec(tail=[pure_set(1)])
    with pytest.raises(ValidationError):
        ProductSpec(tail=[pure_set(2).with_constants(["c"], [0])])


def test_truncated_product():
    spec = ProductSpec(tail=[linear_order(2)])
    M = build_truncated_product(spec, 2)
    assert M.universe == 4
    assert product_points(spec, 2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert set(M.signature.relation_names) == {"E_0", "E_1", "<@0", "<@1"}
    assert M.signature.owners == {"<@0": 0, "<@1": 1}
    assert M.interp[coordinate_relation(0)] == frozenset(
        {(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)}
    )
    assert (0, 2) in M.interp[lifted_relation("<", 0)]
    assert (1, 2) in M.interp["<@0"]
    assert (0, 1) not in M.interp["<@0"]
    with pytest.raises(ValueError):
        build_truncated_product(spec, 0)
    with pytest.raises(CapExceeded):
        build_truncated_product(pure_sets(2), 13)


def test_two_class_product_is_the_disjoint_pairs_ladder():
    M = build_truncated_product(two_class_factors(), 2).rename_relations(p2_renaming(2))
    model = build_truncated_model(benchmark(2), depth=2, caps=Caps(universe=16))
    assert M.interp == model.structure.interp


def test_istar_and_verdicts():
    mixed = ProductSpec(prefix=[pure_set(3)], tail=[pure_set(2)])
    star = istar(mixed)
    assert star.prefix == [0]
    assert star.finite
    assert borel_verdict(mixed) == BorelVerdict.BOREL
    assert borel_verdict(pure_sets(3)) == BorelVerdict.NONBOREL
    assert istar(pure_sets(3)).tail_nonfree == [0]
    assert borel_verdict(cyclic_orders(3)) == "Borel"
    assert borel_verdict(two_class_factors()) == BorelVerdict.NONBOREL
    assert borel_verdict(pure_sets(2)) == BorelVerdict.BOREL


def test_construct_base():
    mixed = ProductSpec(prefix=[pure_set(3)], tail=[pure_set(2)])
    base = construct_base(mixed, 2)
    assert base == (0, 3, 5)
    assert construct_base(cyclic_orders(3), 2) == (0,)
    assert construct_base(mixed, 1, verify=False) == (0, 1, 2)
    M = build_truncated_product(mixed, 3)
    assert is_base(M, construct_base(mixed, 3), caps=Caps(universe=12))
    with pytest.raises(ValueError):
        construct_base(pure_sets(3), 2)


def test_permutation_order():
    assert permutation_order([0, 2, 1]) == 2
    assert permutation_order([1, 2, 0, 4, 3]) == 6
    assert permutation_order([0, 1]) == 1
    assert permutation_order([]) == 1


def test_gadget_diagnostics():
    spec = pure_sets(3)
    assert gadget_diagnostics(spec, swap_gadget(), 2) == []

    moved = GadgetSpec(
        factors=[GadgetFactor(n=0, o=0, g=[1, 0, 2], d=1)], families=[GadgetFamily(I=[0])]
    )
    assert any("moves the basepoint" in e for e in gadget_diagnostics(spec, moved, 1))

    identity = GadgetSpec(
        factors=[GadgetFactor(n=0, o=0, g=[0, 1, 2], d=1)], families=[GadgetFamily(I=[0])]
    )
    errors = gadget_diagnostics(spec, identity, 1)
    assert any("identity" in e for e in errors)
    assert any("fixes the displaced point" in e for e in errors)

    four_cycle = GadgetSpec(
        factors=[GadgetFactor(n=0, o=0, g=[0, 2, 3, 4, 1], d=1)], families=[GadgetFamily(I=[0])]
    )
    assert any("not prime" in e for e in gadget_diagnostics(pure_sets(5), four_cycle, 1))

    outside = GadgetSpec(
        factors=[GadgetFactor(n=3, o=0, g=[0, 2, 1], d=1)], families=[GadgetFamily(I=[3])]
    )
    assert any("outside the truncation" in e for e in gadget_diagnostics(spec, outside, 2))

    uncovered = swap_gadget(families=[GadgetFamily(I=[0], generators=[[1]])])
    assert any("cover" in e for e in gadget_diagnostics(spec, uncovered, 2))

    twice = swap_gadget(families=[GadgetFamily(I=[0, 1]), GadgetFamily(I=[1, 0])])
    assert any("repeat" in e for e in gadget_diagnostics(spec, twice, 2))

    with pytest.raises(ValidationError):
        GadgetFamily(I=[])


def test_gadget_system():
    system = gadget_system(swap_gadget())
    assert system.components == [2, 2]
    assert system.index.elems == ["I0", "I1"]
    assert system.index.leq("I0", "I1")


def test_rank_gadget():
    rg = build_rank_gadget(pure_sets(3), swap_gadget(), 2)
    assert rg.points == [(0, 0), (1, 0), (1, 1), (2, 0)]
    assert rg.structure.consts == {"o": 0}
    assert rg.anchors == {"I0": 1, "I1": 2}
    assert rg.translate("I0", (1,)) == 3
    assert rg.translate("I0", (0,)) == 1

    measurements = {(m.family, m.a): m for m in gadget_measurements(rg)}
    assert measurements[("I0", (1,))].rank == Fin(0)
    assert measurements[("I0", (1,))].level == Fin(0)
    assert measurements[("I0", (0,))].rank == Infty
    assert measurements[("I0", (0,))].level == Infty
    assert measurements[("I1", (0, 0))].level == Infty
    assert is_monotone(measurements.values())


def test_rank_gadget_rejects_bad_gadgets():
    moved = GadgetSpec(
        factors=[GadgetFactor(n=0, o=0, g=[1, 0, 2], d=1)], families=[GadgetFamily(I=[0])]
    )
    with pytest.raises(ValueError):
        build_rank_gadget(pure_sets(3), moved, 1)


def test_is_monotone():
    good = [
        GadgetMeasurement("I0", (0,), Infty, Infty),
        GadgetMeasurement("I0", (1,), Fin(0), Fin(0)),
    ]
    assert is_monotone(good)
    bad = [
        GadgetMeasurement("I0", (0,), Fin(1), Fin(0)),
        GadgetMeasurement("I0", (1,), Fin(0), Fin(2)),
    ]
    assert not is_monotone(bad)
    assert is_monotone([GadgetMeasurement("I0", (1,), Fin(0), None), *good])


def test_gadget_file():
    raw = {
        "product": pure_sets(3).query_dict(),
        "gadget": swap_gadget().model_dump(),
        "truncate": 2,
    }
    loaded = GadgetFile.from_raw(raw)
    assert loaded.N == 2
    assert loaded.gadget == swap_gadget()
    assert loaded.spec == pure_sets(3)
