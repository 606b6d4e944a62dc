from typing import List, Dict, Optional, Union, Tuple, Sequence, Any
from dataclasses import dataclass
import itertools
import logging
import warnings

import networkx as nx
from pydantic import BaseModel, PrivateAttr, field_validator

from scottrank.base import FiniteStructure, Signature
from scottrank.configs import Caps, use_caps
from scottrank.utils import check_cap, classes_of, is_equivalence, mixed_radix, product_size, flatten_dict

log = logging.getLogger(__name__)


class FinitePoset(BaseModel):
    """A finite poset with δ: the order is the reflexive-transitive closure
    of `le`."""

    elems: List[str]
    le: List[Tuple[str, str]] = []
    delta: Dict[str, int] = {}

    _below: Dict[str, frozenset] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: Any):
        graph = self.graph()
        self._below = {
            p: frozenset(nx.ancestors(graph, p)) | {p} if p in graph else frozenset({p})
            for p in self.elems
        }

    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.elems)
        graph.add_edges_from((a, b) for a, b in self.le if a != b)
        return graph

    def below(self, p: str) -> frozenset:
        """P_{≤p}."""
        return self._below[p]

    def strictly_below(self, p: str) -> frozenset:
        return self._below[p] - {p}

    def leq(self, p: str, q: str) -> bool:
        return p in self._below[q]

    def is_downward_closed(self, Q: Sequence[str]) -> bool:
        Q = set(Q)
        return all(self._below[q] <= Q for q in Q)

    def downward_closure(self, Q: Sequence[str]) -> List[str]:
        closed = set()
        for q in Q:
            closed |= self._below[q]
        return [p for p in self.elems if p in closed]

    def maximal(self) -> List[str]:
        return [p for p in self.elems if not any(p != q and self.leq(p, q) for q in self.elems)]

    def restrict(self, Q: Sequence[str]) -> "FinitePoset":
        Q = [p for p in self.elems if p in set(Q)]
        return FinitePoset(
            elems=Q,
            le=[(a, b) for a in Q for b in Q if a != b and self.leq(a, b)],
            delta={p: self.delta[p] for p in Q},
        )

    def size(self) -> int:
        return product_size(self.delta[p] for p in self.elems)

    def diagnostics(self) -> List[str]:
        errors = []
        known = set(self.elems)
        if len(known) != len(self.elems):
            errors.append(f"duplicated elements in {self.elems}")
        for a, b in self.le:
            for x in (a, b):
                if x not in known:
                    errors.append(f"order relation mentions unknown element {x}")
        for p in self.elems:
            if p not in self.delta:
                errors.append(f"delta missing for {p}")
            elif self.delta[p] < 2:
                errors.append(f"delta({p}) = {self.delta[p]} is below 2")
        graph = self.graph()
        if not nx.is_directed_acyclic_graph(graph):
            cycle = nx.find_cycle(graph)
            errors.append(f"order is not antisymmetric: cycle through {[a for a, _ in cycle]}")
        return errors


class BaseTail(BaseModel):
    """A schematic infinite block, every element of which lies above the
    finite elements listed in `above`."""

    kind: str
    delta: int = 2
    above: List[str] = []
    name: Optional[str] = None

    def elements(self, depth: int) -> List[str]:
        return [f"{self.name}[{i}]" for i in range(depth)]

    def order(self, depth: int) -> List[Tuple[str, str]]:
        return []

    @property
    def all_maximal(self) -> bool:
        return True

    def query_dict(self):
        return flatten_dict(self.model_dump())


class AntichainTail(BaseTail):
    kind: str = "antichain"


class ChainTail(BaseTail):
    kind: str = "chain"

    def order(self, depth: int) -> List[Tuple[str, str]]:
        elems = self.elements(depth)
        return list(zip(elems, elems[1:]))

    @property
    def all_maximal(self) -> bool:
        return False


class LadderTail(BaseTail):
    kind: str = "ladder"
    ladder: str = "disjoint-pairs"

    @field_validator("ladder")
    @classmethod
    def ladder_kind_is_known(cls, v):
        if v not in ("disjoint-pairs", "increasing"):
            raise ValueError(f"Invalid ladder kind {v}")
        return v

    def lower(self, depth: int) -> List[str]:
        return [f"{self.name}.p[{i}]" for i in range(depth)]

    def upper(self, depth: int) -> List[str]:
        return [f"{self.name}.q[{i}]" for i in range(depth)]

    def elements(self, depth: int) -> List[str]:
        return [x for pair in zip(self.lower(depth), self.upper(depth)) for x in pair]

    def order(self, depth: int) -> List[Tuple[str, str]]:
        ps, qs = self.lower(depth), self.upper(depth)
        if self.ladder == "disjoint-pairs":
            return list(zip(ps, qs))
        return [(ps[n], qs[m]) for n in range(depth) for m in range(depth) if n <= m]

    @property
    def all_maximal(self) -> bool:
        return False


TAILS_MAPPING = {_cls.model_fields["kind"].default: _cls for _cls in BaseTail.__subclasses__()}


def parse_one_tail(data: Dict, errors: str = "strict") -> Optional[BaseTail]:
    if isinstance(data, BaseTail):
        return data
    if data.get("kind") not in TAILS_MAPPING:
        msg = f"Unknown tail kind: {data.get('kind')}"
        if errors == "strict":
            raise ValueError(msg)
        elif errors == "warn":
            warnings.warn(msg)
        return None
    return TAILS_MAPPING[data["kind"]](**data)


def parse_tails(data: List[Dict], errors: str = "strict") -> List[BaseTail]:
    tails = []
    for tail_data in data:
        tail = parse_one_tail(tail_data, errors=errors)
        if tail is not None:
            tails.append(tail)
    return tails


class PosetPresentation(BaseModel):
    """A triple (P, ≤, δ): a finite part plus schematic infinite tails."""

    finite: FinitePoset = FinitePoset(elems=[])
    tails: List[BaseTail] = []

    @field_validator("tails", mode="before")
    @classmethod
    def tails_are_typed(cls, v):
        return parse_tails(v)

    def model_post_init(self, __context: Any):
        for i, tail in enumerate(self.tails):
            if tail.name is None:
                tail.name = f"t{i}"

    @classmethod
    def from_raw(cls, data: Dict, errors: str = "strict") -> "PosetPresentation":
        finite = data.get("finite", {"elems": []})
        return cls(finite=FinitePoset(**finite), tails=parse_tails(data.get("tails", []), errors))

    def query_dict(self) -> Dict:
        return {
            "finite": flatten_dict(self.finite.model_dump()),
            "tails": [tail.query_dict() for tail in self.tails],
        }

    def truncate(self, depth: int) -> FinitePoset:
        """The finite part plus the first `depth` elements (pairs, for
        ladders) of every tail."""
        elems = list(self.finite.elems)
        le = list(self.finite.le)
        delta = dict(self.finite.delta)
        for tail in self.tails:
            new = tail.elements(depth)
            elems += new
            le += tail.order(depth)
            le += [(a, t) for t in new for a in tail.above]
            delta.update({t: tail.delta for t in new})
        return FinitePoset(elems=elems, le=le, delta=delta)


def validate(P: PosetPresentation) -> List[str]:
    """Diagnostics for P; an empty list means P is a valid presentation."""
    errors = P.finite.diagnostics()
    known = set(P.finite.elems)
    for i, tail in enumerate(P.tails):
        if tail.delta < 2:
            errors.append(f"tail {tail.name}: delta = {tail.delta} is below 2")
        for a in tail.above:
            if a not in known:
                errors.append(f"tail {tail.name}: lies above unknown element {a}")
    names = [tail.name for tail in P.tails]
    if len(set(names)) != len(names):
        errors.append(f"duplicated tail names {names}")
    return errors


@dataclass
class NbcResult:
    value: bool
    witness: Optional[List[str]] = None
    counter: Optional[str] = None
    reason: str = ""

    def __bool__(self):
        return self.value


def is_nearly_binary_crosscutting(P: PosetPresentation) -> NbcResult:
    """All but finitely many elements are maximal with δ = 2.

    On success `witness` is the least finite downward-closed Q with P∖Q an
    antichain on which δ is 2; otherwise `counter` names a tail with
    infinitely many non-maximal elements or infinitely many δ > 2.
    """
    for tail in P.tails:
        if not tail.all_maximal:
            return NbcResult(False, counter=tail.name, reason=f"{tail.kind} tail has infinitely many non-maximal elements")
        if tail.delta > 2:
            return NbcResult(False, counter=tail.name, reason=f"{tail.kind} tail has delta {tail.delta} > 2")
    # A truncation of depth 1 already shows which finite elements have
    # something above them.
    poset = P.truncate(1)
    maximal = set(poset.maximal())
    Q = [p for p in P.finite.elems if p not in maximal or P.finite.delta[p] > 2]
    return NbcResult(True, witness=Q, reason="tails are antichains with delta 2")


@dataclass
class BenchmarkWitness:
    index: int
    tail: str
    selection: str
    delta_prime: int
    sample: List[str]


def benchmark_witness(P: PosetPresentation, errors: str = "strict") -> Optional[BenchmarkWitness]:
    """The least benchmark index i < 4 embedding into P, read off the tails.

    Args:
        errors (str, optional):
            What to do when P is nearly binary crosscutting:
                1. "strict": raise a ValueError.
                2. "warn": warn and return None.
                3. "ignore": return None.
            Defaults to "strict".
    """
    for tail in P.tails:
        if isinstance(tail, ChainTail):
            return BenchmarkWitness(0, tail.name, "chain", 2, tail.elements(3))
    for tail in P.tails:
        if tail.delta >= 3:
            if isinstance(tail, LadderTail):
                sample, selection = tail.upper(3), "upper rungs"
            else:
                sample, selection = tail.elements(3), "antichain"
            return BenchmarkWitness(1, tail.name, selection, 3, sample)
    for kind, index in (("disjoint-pairs", 2), ("increasing", 3)):
        for tail in P.tails:
            if isinstance(tail, LadderTail) and tail.ladder == kind:
                return BenchmarkWitness(index, tail.name, kind, 2, tail.elements(3))

    msg = "The presentation is nearly binary crosscutting; no benchmark embeds"
    if errors == "strict":
        raise ValueError(msg)
    elif errors == "warn":
        warnings.warn(msg)
    return None


def benchmark(i: int) -> PosetPresentation:
    tails = {
        0: ChainTail(delta=2),
        1: AntichainTail(delta=3),
        2: LadderTail(delta=2, ladder="disjoint-pairs"),
        3: LadderTail(delta=2, ladder="increasing"),
    }
    if i not in tails:
        raise ValueError(f"Invalid benchmark index {i}")
    return PosetPresentation(tails=[tails[i]])


class TruncatedModel(BaseModel):
    """The canonical structure on a finite downward-closed Q: points are
    functions on Q (in `poset.elems` order), numbered in mixed radix."""

    poset: FinitePoset
    points: List[Tuple[int, ...]]
    structure: FiniteStructure

    def relation(self, q: str) -> str:
        return relation_name(q)

    def point_id(self, point: Sequence[int]) -> int:
        return self.points.index(tuple(point))


def relation_name(q: str) -> str:
    return f"E_{q}"


def agreement_classes(
    points: Sequence[Tuple[int, ...]], positions: Sequence[int]
) -> List[Tuple[int, ...]]:
    """Group point ids by their values at `positions`."""
    groups: Dict[Tuple[int, ...], List[int]] = {}
    for i, f in enumerate(points):
        groups.setdefault(tuple(f[j] for j in positions), []).append(i)
    return [tuple(ids) for ids in groups.values()]


def canonical_relations(poset: FinitePoset, points: Sequence[Tuple[int, ...]]) -> Dict[str, List[Tuple[int, int]]]:
    pos = {p: i for i, p in enumerate(poset.elems)}
    interp = {}
    for q in poset.elems:
        below = sorted(pos[x] for x in poset.below(q))
        interp[relation_name(q)] = [
            (a, b) for block in agreement_classes(points, below) for a in block for b in block
        ]
    return interp


@use_caps
def build_truncated_model(
    P: Union[PosetPresentation, FinitePoset],
    Q: Optional[Sequence[str]] = None,
    depth: int = 2,
    *,
    caps: Caps = None,
) -> TruncatedModel:
    """Build the canonical structure on Q (all of the truncation by default).

    Raises:
        ValueError: if Q is not downward closed or mentions unknown elements.
    """
    poset = P.truncate(depth) if isinstance(P, PosetPresentation) else P
    if Q is None:
        Q = poset.elems
    unknown = set(Q) - set(poset.elems)
    if unknown:
        raise ValueError(f"Elements {sorted(unknown)} are not in the truncation")
    if not poset.is_downward_closed(Q):
        raise ValueError(f"{list(Q)} is not downward closed")
    sub = poset.restrict(Q)
    check_cap(sub.size(), caps.build, "size of the truncated model")
    points = mixed_radix([sub.delta[q] for q in sub.elems])
    structure = FiniteStructure(
        signature=Signature(relations=[(relation_name(q), 2) for q in sub.elems]),
        universe=len(points),
        interp=canonical_relations(sub, points),
    )
    log.debug(f"truncated model on {sub.elems} with {len(points)} points")
    return TruncatedModel(poset=sub, points=points, structure=structure)


def chain_refinement(depth: int, caps: Caps = None) -> TruncatedModel:
    """Nested equivalence relations, each splitting the previous classes in two."""
    return build_truncated_model(benchmark(0), depth=depth, caps=caps)


@dataclass
class AxiomCheck:
    ok: bool
    axiom: Optional[str] = None
    element: Optional[str] = None
    witness: Optional[Tuple] = None

    def __bool__(self):
        return self.ok


def _intersection(rels: List[set], universe: int) -> set:
    out = {(a, b) for a in range(universe) for b in range(universe)}
    for rel in rels:
        out &= rel
    return out


@use_caps
def check_TP_axioms(M: FiniteStructure, poset: FinitePoset, *, caps: Caps = None) -> AxiomCheck:
    """Check the axioms of the theory of Q-indexed refining equivalence
    relations on M and report the first failure."""
    n = M.universe
    rels = {}
    for q in poset.elems:
        name = relation_name(q)
        if name not in M.interp:
            raise ValueError(f"The structure does not interpret {name}")
        rels[q] = set(M.interp[name])

    for q in poset.elems:
        if not is_equivalence(rels[q], n):
            return AxiomCheck(False, "equivalence", q)

    for q in poset.elems:
        lower = _intersection([rels[x] for x in poset.strictly_below(q)], n)
        if not rels[q] <= lower:
            bad = min(rels[q] - lower)
            return AxiomCheck(False, "refinement", q, bad)
        q_classes = classes_of(rels[q], n)
        for block in classes_of(lower, n):
            k = sum(1 for c in q_classes if c[0] in block)
            if k != poset.delta[q]:
                return AxiomCheck(False, "splitting", q, block)

    for size in range(1, len(poset.elems) + 1):
        for Q in itertools.combinations(poset.elems, size):
            if not poset.is_downward_closed(Q):
                continue
            check_cap(n ** len(Q), caps.tuple_space, "number of amalgamation systems")
            for system in itertools.product(range(n), repeat=len(Q)):
                a = dict(zip(Q, system))
                compatible = all(
                    (a[x], a[q]) in rels[x] for q in Q for x in poset.below(q)
                )
                if not compatible:
                    continue
                if not any(all((star, a[q]) in rels[q] for q in Q) for star in range(n)):
                    return AxiomCheck(False, "amalgamation", ",".join(Q), system)
    return AxiomCheck(True)


def nbc_base(model: TruncatedModel, Q: Sequence[str]) -> Tuple[int, ...]:
    """One point of every E_Q-class, namely the least one."""
    pos = {p: i for i, p in enumerate(model.poset.elems)}
    positions = sorted(pos[q] for q in Q)
    return tuple(sorted(block[0] for block in agreement_classes(model.points, positions)))
