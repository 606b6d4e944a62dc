from typing import List, Dict, Optional, Tuple, Sequence, Any
from dataclasses import dataclass, field
from enum import Enum
import itertools
import logging
import math

from pydantic import BaseModel, field_validator

from scottrank.backforth import bf_level, is_base
from scottrank.base import (
    FiniteStructure,
    Signature,
    automorphism_group,
    cyclic_order,
    equivalence_structure,
    is_free_action,
    pure_set,
)
from scottrank.configs import Caps, use_caps
from scottrank.invsystems import CbarSystem, rank_table
from scottrank.posets import FinitePoset, relation_name
from scottrank.utils import InvariantViolation, check_cap, mixed_radix, mixed_radix_index, product_size
from scottrank.values import Ordinal

log = logging.getLogger(__name__)

Point = Tuple[int, ...]


class ProductSpec(BaseModel):
    """(M_n : n < ω) given by a finite prefix followed by a periodic tail."""

    prefix: List[FiniteStructure] = []
    tail: List[FiniteStructure]

    @field_validator("prefix", "tail")
    @classmethod
    def factors_are_relational_and_big(cls, v):
        for M in v:
            if M.universe < 2:
                raise ValueError(f"Invalid factor of size {M.universe}: factors need at least two elements")
            if M.signature.constants:
                raise ValueError("Factors must be purely relational")
        return v

    @field_validator("tail")
    @classmethod
    def tail_is_nonempty(cls, v):
        if not v:
            raise ValueError("The periodic tail needs at least one factor")
        return v

    def factor(self, n: int) -> FiniteStructure:
        if n < len(self.prefix):
            return self.prefix[n]
        return self.tail[(n - len(self.prefix)) % len(self.tail)]

    def factors(self, N: int) -> List[FiniteStructure]:
        return [self.factor(n) for n in range(N)]

    def sizes(self, N: int) -> List[int]:
        return [M.universe for M in self.factors(N)]

    @classmethod
    def from_raw(cls, data: Dict) -> "ProductSpec":
        return cls(
            prefix=[FiniteStructure.from_raw(M) for M in data.get("prefix", [])],
            tail=[FiniteStructure.from_raw(M) for M in data["tail"]],
        )

    def query_dict(self) -> Dict:
        return {
            "prefix": [M.query_dict() for M in self.prefix],
            "tail": [M.query_dict() for M in self.tail],
        }


def coordinate_relation(n: int) -> str:
    """E_n, equality of the n-th coordinate."""
    return relation_name(str(n))


def lifted_relation(name: str, n: int) -> str:
    return f"{name}@{n}"


def _product_structure(
    factors: Sequence[FiniteStructure], points: Sequence[Point], tuple_cap: int
) -> FiniteStructure:
    """The substructure of ∏ factors on `points`."""
    relations, owners, interp = [], {}, {}
    fibers = []
    for n in range(len(factors)):
        fiber: Dict[int, List[int]] = {}
        for i, f in enumerate(points):
            fiber.setdefault(f[n], []).append(i)
        fibers.append(fiber)
        name = coordinate_relation(n)
        relations.append((name, 2))
        interp[name] = [(a, b) for block in fiber.values() for a in block for b in block]
    for n, M in enumerate(factors):
        fiber = fibers[n]
        for name, arity in M.signature.relations:
            lifted = lifted_relation(name, n)
            relations.append((lifted, arity))
            owners[lifted] = n
            count = sum(product_size(len(fiber.get(x, ())) for x in tup) for tup in M.interp[name])
            check_cap(count, tuple_cap, f"number of tuples of {lifted}")
            interp[lifted] = [
                lifted_tup
                for tup in M.interp[name]
                for lifted_tup in itertools.product(*[fiber.get(x, []) for x in tup])
            ]
    return FiniteStructure(
        signature=Signature(relations=relations, owners=owners),
        universe=len(points),
        interp=interp,
    )


@use_caps
def build_truncated_product(spec: ProductSpec, N: int, *, caps: Caps = None) -> FiniteStructure:
    """∏_{n<N} M_n, points numbered in mixed radix with coordinate 0 most
    significant, with E_n and every R ∈ 𝓛_n lifted to "R@n".

    Raises:
        CapExceeded: when ∏ |M_n| exceeds the build cap.
    """
    if N < 1:
        raise ValueError(f"Invalid truncation {N}")
    sizes = spec.sizes(N)
    check_cap(product_size(sizes), caps.build, "size of the truncated product")
    return _product_structure(spec.factors(N), mixed_radix(sizes), caps.tuple_space)


def product_points(spec: ProductSpec, N: int) -> List[Point]:
    return mixed_radix(spec.sizes(N))


@dataclass
class IStar:
    prefix: List[int]
    tail_free: bool
    tail_nonfree: List[int] = field(default_factory=list)

    @property
    def finite(self) -> bool:
        return self.tail_free


@use_caps
def istar(spec: ProductSpec, *, caps: Caps = None) -> IStar:
    """The non-free prefix indices, and the verdict on one period of the
    tail (tail positions are reported relative to the period)."""
    nonfree = lambda M: not is_free_action(automorphism_group(M, caps=caps))
    prefix = [n for n, M in enumerate(spec.prefix) if nonfree(M)]
    tail_nonfree = [i for i, M in enumerate(spec.tail) if nonfree(M)]
    return IStar(prefix=prefix, tail_free=not tail_nonfree, tail_nonfree=tail_nonfree)


class BorelVerdict(str, Enum):
    BOREL = "Borel"
    NONBOREL = "NonBorel"


@use_caps
def borel_verdict(spec: ProductSpec, *, caps: Caps = None) -> BorelVerdict:
    """Borel iff only finitely many factors act non-freely, i.e. iff the
    tail is free."""
    return BorelVerdict.BOREL if istar(spec, caps=caps).tail_free else BorelVerdict.NONBOREL


@use_caps
def construct_base(spec: ProductSpec, N: int, verify: bool = True, *, caps: Caps = None) -> Tuple[int, ...]:
    """A tuple ā whose projections a_i(n) = min(i, |M_n| - 1) cover M_n
    for every non-free n < N; one element when every factor is free.

    Raises:
        ValueError: if the tail is not free.
        InvariantViolation: if `verify` and ā is not a base of the
            truncated product.
    """
    star = istar(spec, caps=caps)
    if not star.tail_free:
        raise ValueError("The tail acts non-freely; no finite base construction applies")
    sizes = spec.sizes(N)
    covered = [n for n in star.prefix if n < N]
    length = max([sizes[n] for n in covered], default=1)
    base = tuple(
        mixed_radix_index([min(i, size - 1) for size in sizes], sizes) for i in range(length)
    )
    if verify:
        M = build_truncated_product(spec, N, caps=caps)
        if not is_base(M, base, caps=caps.for_builds()):
            raise InvariantViolation(f"{base} is not a base of the truncated product")
    return base


def pure_sets(k: int) -> ProductSpec:
    """Every factor a k-element set: the theory of k-ary crosscutting
    equivalence relations."""
    return ProductSpec(tail=[pure_set(k)])


def cyclic_orders(k: int) -> ProductSpec:
    return ProductSpec(tail=[cyclic_order(k)])


def two_class_factors() -> ProductSpec:
    """Every factor an equivalence relation with two classes of size two."""
    return ProductSpec(tail=[equivalence_structure([[0, 1], [2, 3]])])


def p2_renaming(N: int) -> Dict[str, str]:
    """Rename the truncated product of `two_class_factors()` onto the
    canonical model of the disjoint-pairs ladder: E_n becomes the upper rung
    q[n] and the class relation of factor n the lower rung p[n]."""
    mapping = {}
    for n in range(N):
        mapping[coordinate_relation(n)] = relation_name(f"t0.q[{n}]")
        mapping[lifted_relation("E", n)] = relation_name(f"t0.p[{n}]")
    return mapping


# Rank gadget


class GadgetFactor(BaseModel):
    n: int
    o: int
    g: List[int]
    d: int


class GadgetFamily(BaseModel):
    """I together with generators of A_I ≤ ∏_{n ∈ I} C_n; a generator lists
    exponents of g_n for n in increasing order."""

    I: List[int]
    generators: List[List[int]] = []

    @field_validator("I")
    @classmethod
    def index_set_is_sorted(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError(f"Invalid index set {v}")
        return sorted(v)


class GadgetSpec(BaseModel):
    factors: List[GadgetFactor]
    families: List[GadgetFamily]
    basepoints: Dict[int, int] = {}

    @property
    def selected(self) -> List[int]:
        return sorted(fac.n for fac in self.factors)

    def factor(self, n: int) -> GadgetFactor:
        for fac in self.factors:
            if fac.n == n:
                return fac
        raise KeyError(n)

    def basepoint(self, n: int) -> int:
        if n in self.selected:
            return self.factor(n).o
        return self.basepoints.get(n, 0)


def permutation_order(g: Sequence[int]) -> int:
    seen, lengths = set(), []
    for x in range(len(g)):
        if x in seen:
            continue
        length, y = 0, x
        while y not in seen:
            seen.add(y)
            y = g[y]
            length += 1
        lengths.append(length)
    return math.lcm(*lengths) if lengths else 1


def _is_prime(p: int) -> bool:
    return p >= 2 and all(p % q for q in range(2, math.isqrt(p) + 1))


def _is_automorphism(M: FiniteStructure, g: Sequence[int]) -> bool:
    return all(
        {tuple(g[x] for x in tup) for tup in tuples} == set(tuples)
        for tuples in M.interp.values()
    )


def _power(g: Sequence[int], k: int, x: int) -> int:
    for _ in range(k):
        x = g[x]
    return x


def gadget_diagnostics(spec: ProductSpec, gadget: GadgetSpec, N: int) -> List[str]:
    """Failures of the gadget conditions; empty when the gadget is sound.
    The directedness and restriction conditions on the families are left to
    the inverse system."""
    errors = []
    selected = gadget.selected
    if len(set(selected)) != len(selected):
        errors.append(f"factor indices {selected} repeat")
    for fac in gadget.factors:
        if not 0 <= fac.n < N:
            errors.append(f"factor {fac.n} lies outside the truncation {N}")
            continue
        M = spec.factor(fac.n)
        if sorted(fac.g) != list(M.elements):
            errors.append(f"g_{fac.n} is not a permutation of M_{fac.n}")
            continue
        if not (0 <= fac.o < M.universe and 0 <= fac.d < M.universe):
            errors.append(f"basepoint or displaced point of factor {fac.n} is out of range")
            continue
        if not _is_automorphism(M, fac.g):
            errors.append(f"g_{fac.n} is not an automorphism of M_{fac.n}")
        if fac.g[fac.o] != fac.o:
            errors.append(f"g_{fac.n} moves the basepoint {fac.o}")
        order = permutation_order(fac.g)
        if order == 1:
            errors.append(f"g_{fac.n} is the identity")
        elif not _is_prime(order):
            errors.append(f"g_{fac.n} has order {order}, which is not prime")
        if fac.g[fac.d] == fac.d:
            errors.append(f"g_{fac.n} fixes the displaced point {fac.d}")
    for n, o in gadget.basepoints.items():
        if not 0 <= n < N or not 0 <= o < spec.factor(n).universe:
            errors.append(f"basepoint {o} for coordinate {n} is out of range")
    if errors:
        return errors
    covered = set()
    for family in gadget.families:
        if not set(family.I) <= set(selected):
            errors.append(f"family {family.I} uses unselected coordinates")
        covered |= set(family.I)
    if covered != set(selected):
        errors.append(f"families cover {sorted(covered)}, not the selected {selected}")
    if len({tuple(fam.I) for fam in gadget.families}) != len(gadget.families):
        errors.append("index sets repeat")
    return errors


def family_name(i: int) -> str:
    return f"I{i}"


def gadget_system(gadget: GadgetSpec) -> CbarSystem:
    """𝐀 = (A_I : I ∈ 𝐈) as a system of subgroups of ∏ C_n over the selected
    coordinates, ordered by inclusion, with restriction maps."""
    selected = gadget.selected
    position = {n: i for i, n in enumerate(selected)}
    sets = [set(fam.I) for fam in gadget.families]
    names = [family_name(i) for i in range(len(gadget.families))]
    le = [
        (names[i], names[j])
        for i, j in itertools.permutations(range(len(sets)), 2)
        if sets[i] < sets[j]
    ]
    return CbarSystem(
        index=FinitePoset(elems=names, le=le),
        components=[permutation_order(gadget.factor(n).g) for n in selected],
        supports={names[i]: [position[n] for n in fam.I] for i, fam in enumerate(gadget.families)},
        generators={names[i]: fam.generators for i, fam in enumerate(gadget.families)},
    )


@dataclass
class RankGadget:
    structure: FiniteStructure
    points: List[Point]
    system: CbarSystem
    gadget: GadgetSpec
    anchors: Dict[str, int]

    def translate(self, family: str, a: Sequence[int]) -> int:
        """The id of a + f_I."""
        fam = self.gadget.families[int(family[1:])]
        f = list(self.points[self.anchors[family]])
        for n, k in zip(fam.I, a):
            f[n] = _power(self.gadget.factor(n).g, k, f[n])
        return self.points.index(tuple(f))


@use_caps
def build_rank_gadget(spec: ProductSpec, gadget: GadgetSpec, N: int, *, caps: Caps = None) -> RankGadget:
    """The substructure of ∏_{n<N} M_n on the points supported off the
    selected coordinates together with every A_I + f_I, with ō named by the
    constant "o".

    f_I is d_n on I and o_n elsewhere; a ∈ A_I moves coordinate n ∈ I by
    g_n^{a_n}.

    Raises:
        ValueError: if the gadget conditions fail (fixed basepoint, prime
            order, regular action, families inside the selection) or the
            families do not form a sound inverse system.
    """
    errors = gadget_diagnostics(spec, gadget, N)
    if errors:
        raise ValueError(f"Invalid gadget: {errors[0]}")
    system = gadget_system(gadget)
    problems = system.diagnostics(caps.zk, caps.build)
    if problems:
        raise ValueError(f"Invalid gadget families: {problems[0]}")

    sizes = spec.sizes(N)
    selected = set(gadget.selected)
    o = tuple(gadget.basepoint(n) for n in range(N))
    free_coords = [n for n in range(N) if n not in selected]
    check_cap(product_size(sizes[n] for n in free_coords), caps.build, "number of finitely supported points")
    points = set()
    for values in itertools.product(*[range(sizes[n]) for n in free_coords]):
        f = list(o)
        for n, v in zip(free_coords, values):
            f[n] = v
        points.add(tuple(f))

    anchor_points = {}
    for i, fam in enumerate(gadget.families):
        name = family_name(i)
        f_I = list(o)
        for n in fam.I:
            f_I[n] = gadget.factor(n).d
        anchor_points[name] = tuple(f_I)
        orbit = set()
        for a in system.elements(name, caps.zk, caps.build):
            f = list(f_I)
            for n, k in zip(fam.I, a):
                f[n] = _power(gadget.factor(n).g, k, f[n])
            orbit.add(tuple(f))
        if len(orbit) != len(system.elements(name, caps.zk, caps.build)):
            raise ValueError(f"A_{name} does not act regularly on A_{name} + f_{name}")
        points |= orbit
    points = sorted(points)
    check_cap(len(points), caps.build, "size of the rank gadget")
    structure = _product_structure(spec.factors(N), points, caps.tuple_space)
    structure = structure.with_constants(["o"], [points.index(o)])
    log.debug(f"rank gadget with {len(points)} points over {len(gadget.families)} families")
    return RankGadget(
        structure=structure,
        points=points,
        system=system,
        gadget=gadget,
        anchors={name: points.index(f) for name, f in anchor_points.items()},
    )


@dataclass
class GadgetMeasurement:
    family: str
    a: Tuple[int, ...]
    rank: Ordinal
    level: Optional[Ordinal]


@use_caps
def gadget_measurements(rg: RankGadget, *, caps: Caps = None) -> List[GadgetMeasurement]:
    """For every I and a ∈ A_I: rnk^𝐀(a) next to the back-and-forth level
    of f_I against a + f_I."""
    ranks = rank_table(rg.system, caps=caps)
    N = rg.structure
    out = []
    for family in rg.system.index.elems:
        for a, r in sorted(ranks[family].items()):
            level = bf_level(N, [rg.anchors[family]], N, [rg.translate(family, a)], caps=caps.for_builds())
            out.append(GadgetMeasurement(family=family, a=a, rank=r, level=level))
    return out


def is_monotone(measurements: Sequence[GadgetMeasurement]) -> bool:
    """Larger rank never comes with a smaller level."""
    for x, y in itertools.permutations(measurements, 2):
        if x.rank < y.rank and x.level is not None and y.level is not None and x.level > y.level:
            return False
    return True


@dataclass
class GadgetFile:
    spec: ProductSpec
    gadget: GadgetSpec
    N: int

    @classmethod
    def from_raw(cls, data: Dict[str, Any]) -> "GadgetFile":
        return cls(
            spec=ProductSpec.from_raw(data["product"]),
            gadget=GadgetSpec(**data["gadget"]),
            N=data["truncate"],
        )
