from typing import List, Dict, Tuple, Sequence, Iterable, FrozenSet
import logging
import re

import networkx as nx
from pydantic import BaseModel, ConfigDict, PrivateAttr, field_validator, model_validator

from scottrank.base import FiniteStructure, Signature
from scottrank.configs import Caps, use_caps
from scottrank.gf2 import rref_basis, is_independent, span
from scottrank.posets import relation_name
from scottrank.utils import (
    InvariantViolation,
    check_cap,
    bit,
    prefix,
    lcp,
    bits_to_str,
    str_to_bits,
)
from scottrank.values import Ordinal, Fin, Infty

log = logging.getLogger(__name__)

Pair = Tuple[int, int]
Residual = Dict[int, FrozenSet[int]]


class BitVec(BaseModel):
    """An element of 2^ω: a finite word padded by its tail bit.

    `Fin` words have kind "fin" and tail 0; eventually constant words have
    kind "evconst" and must not end in a redundant copy of the tail bit.
    """

    model_config = ConfigDict(frozen=True)

    kind: str = "fin"
    word: int = 0
    length: int = 0
    tail: int = 0

    @field_validator("kind")
    @classmethod
    def kind_is_known(cls, v):
        if v not in ("fin", "evconst"):
            raise ValueError(f"Invalid bit-vector kind {v}")
        return v

    @model_validator(mode="after")
    def normal_form(self):
        if self.word < 0 or self.word >> self.length:
            raise ValueError(f"Word {self.word} does not fit in {self.length} bits")
        if self.tail not in (0, 1):
            raise ValueError(f"Invalid tail bit {self.tail}")
        if self.kind == "evconst" and self.length and bit(self.word, self.length - 1) == self.tail:
            raise ValueError("Eventually constant prefix ends in a redundant tail bit")
        return self

    @classmethod
    def parse(cls, s: str) -> "BitVec":
        """'0110' is a finite word; '01(1)' is 01 followed by ones forever."""
        s = s.strip()
        m = re.fullmatch(r"([01]*)\(([01])\)", s)
        if m is None:
            return cls(kind="fin", word=str_to_bits(s), length=len(s))
        body, tail = m.group(1), int(m.group(2))
        body = body.rstrip(str(tail))
        return cls(kind="evconst", word=str_to_bits(body) if body else 0, length=len(body), tail=tail)

    def at(self, i: int) -> int:
        if i < self.length:
            return bit(self.word, i)
        if self.kind == "fin":
            raise IndexError(f"Position {i} is outside a word of length {self.length}")
        return self.tail

    def truncate(self, n: int) -> int:
        return sum(self.at(i) << i for i in range(n))

    def __str__(self):
        body = bits_to_str(self.word, self.length)
        return body if self.kind == "fin" else f"{body}({self.tail})"


def _pivot(row: int) -> int:
    return (row & -row).bit_length() - 1


def _reduce(word: int, basis: Sequence[int]) -> int:
    for row in basis:
        if bit(word, _pivot(row)):
            word ^= row
    return word


class Coset(BaseModel):
    """offset + span(basis) inside 2^m, stored with a reduced-echelon basis
    and the reduced offset, so equal cosets compare equal."""

    model_config = ConfigDict(frozen=True)

    m: int
    basis: Tuple[int, ...] = ()
    offset: int = 0

    @model_validator(mode="before")
    @classmethod
    def canonical_form(cls, data):
        if not isinstance(data, dict):
            return data
        m = data["m"]
        basis = [int(w) for w in data.get("basis", ())]
        offset = int(data.get("offset", 0))
        for w in (*basis, offset):
            if w < 0 or w >> m:
                raise ValueError(f"Vector {w} does not fit in dimension {m}")
        if not is_independent(basis, m):
            raise ValueError(f"Basis {basis} is not independent")
        basis = rref_basis(basis, m)
        return {"m": m, "basis": basis, "offset": _reduce(offset, basis)}

    @property
    def size(self) -> int:
        return 1 << len(self.basis)

    def __contains__(self, g: int) -> bool:
        return _reduce(g ^ self.offset, self.basis) == 0

    def elements(self) -> List[int]:
        return sorted(self.offset ^ v for v in span(self.basis))

    def group(self) -> "Coset":
        return Coset(m=self.m, basis=self.basis, offset=0)

    def shift(self, head: int, length: int) -> "Coset":
        """head·X: prepend a word of the given length to every element."""
        return Coset(
            m=self.m + length,
            basis=[w << length for w in self.basis],
            offset=head | (self.offset << length),
        )

    def union(self, other: "Coset") -> "Coset":
        """The union of two cosets of the same group, itself a coset.

        Raises:
            InvariantViolation: if the union is not a coset.
        """
        joined = Coset.of(self.m, list(self.basis) + [self.offset ^ other.offset], self.offset)
        if set(joined.elements()) != set(self.elements()) | set(other.elements()):
            raise InvariantViolation(f"{self} and {other} are not cosets of one group")
        return joined

    @classmethod
    def of(cls, m: int, generators: Iterable[int] = (), offset: int = 0) -> "Coset":
        return cls(m=m, basis=rref_basis(list(generators), m), offset=offset)

    @classmethod
    def from_raw(cls, m: int, data: Dict) -> "Coset":
        return cls.of(m, [str_to_bits(s) for s in data.get("basis", [])], str_to_bits(data.get("offset", "0" * m)))

    def query_dict(self) -> Dict:
        return {
            "offset": bits_to_str(self.offset, self.m),
            "basis": [bits_to_str(w, self.m) for w in self.basis],
        }

    def __str__(self):
        return f"{bits_to_str(self.offset, self.m)}+<{','.join(bits_to_str(w, self.m) for w in self.basis)}>"


class FinCosetSystem(BaseModel):
    """C ⊆ 2^n × 2^m with each section C[f] a coset."""

    n: int
    m: int
    cosets: List[Coset]

    @field_validator("n", "m")
    @classmethod
    def dimension_is_positive(cls, v):
        if v < 1:
            raise ValueError(f"Invalid dimension {v}")
        return v

    @model_validator(mode="after")
    def total_on_words(self):
        if len(self.cosets) != 1 << self.n:
            raise ValueError(f"Expected {1 << self.n} cosets, got {len(self.cosets)}")
        for f, coset in enumerate(self.cosets):
            if coset.m != self.m:
                raise ValueError(f"C[{bits_to_str(f, self.n)}] lives in dimension {coset.m}, not {self.m}")
        return self

    def __getitem__(self, f: int) -> Coset:
        return self.cosets[f]

    def contains(self, f: int, g: int) -> bool:
        return 0 <= f < len(self.cosets) and g in self.cosets[f]

    def pairs(self) -> List[Pair]:
        return [(f, g) for f, coset in enumerate(self.cosets) for g in coset.elements()]

    @classmethod
    def from_raw(cls, data: Dict) -> "FinCosetSystem":
        n, m = data["n"], data["m"]
        return cls(n=n, m=m, cosets=[Coset.from_raw(m, c) for c in data["cosets"]])

    def query_dict(self) -> Dict:
        return {"n": self.n, "m": self.m, "cosets": [c.query_dict() for c in self.cosets]}


def coherent_pair(x: Pair, y: Pair, n: int, m: int) -> bool:
    (f, g), (f2, g2) = x, y
    if f == f2:
        return g == g2
    k = min(lcp(f, f2, n), m)
    return prefix(g, k) == prefix(g2, k)


def is_coherent(A: Iterable[Pair], n: int, m: int) -> bool:
    A = list(A)
    return all(coherent_pair(x, y, n, m) for i, x in enumerate(A) for y in A[i + 1 :])


class CoherentSet(BaseModel):
    """A finite set of pairs in which agreement of f-prefixes forces
    agreement of g-prefixes."""

    n: int
    m: int
    pairs: FrozenSet[Pair] = frozenset()

    @model_validator(mode="after")
    def prefixes_agree(self):
        if not is_coherent(self.pairs, self.n, self.m):
            raise ValueError(f"{sorted(self.pairs)} is not coherent")
        return self

    @classmethod
    def parse(cls, n: int, m: int, items: Sequence[str]) -> "CoherentSet":
        """Pairs written as "f,g" bitstrings."""
        pairs = set()
        for item in items:
            f, g = item.split(",")
            pairs.add((BitVec.parse(f).truncate(n), BitVec.parse(g).truncate(m)))
        return cls(n=n, m=m, pairs=frozenset(pairs))


def _check_subset(C: FinCosetSystem, A: Iterable[Pair]) -> List[Pair]:
    A = sorted(set(A))
    for f, g in A:
        if not C.contains(f, g):
            raise ValueError(f"({bits_to_str(f, C.n)}, {bits_to_str(g, C.m)}) is not in C")
    if not is_coherent(A, C.n, C.m):
        raise ValueError(f"{A} is not coherent")
    return A


@use_caps
def singleton_ranks(C: FinCosetSystem, *, caps: Caps = None) -> Dict[Pair, Ordinal]:
    """rnk^C({(f, g)}) for every pair of C.

    (f, g) keeps rank ≥ k+1 while every other f' has a pair of rank ≥ k
    coherent with it.
    """
    pairs = C.pairs()
    check_cap(len(pairs) << C.n, caps.tuple_space, "size of the singleton-rank search")
    alive = set(pairs)
    ranks: Dict[Pair, Ordinal] = {}
    level = 0
    while True:
        prefixes: Dict[int, List[set]] = {}
        for f, g in alive:
            rows = prefixes.setdefault(f, [set() for _ in range(C.m + 1)])
            for k in range(C.m + 1):
                rows[k].add(prefix(g, k))
        new = set()
        for f, g in alive:
            ok = True
            for f2 in range(1 << C.n):
                if f2 == f:
                    continue
                if f2 not in prefixes:
                    ok = False
                    break
                k = min(lcp(f, f2, C.n), C.m)
                if prefix(g, k) not in prefixes[f2][k]:
                    ok = False
                    break
            if ok:
                new.add((f, g))
        for x in alive - new:
            ranks[x] = Fin(level)
        if new == alive:
            break
        alive = new
        level += 1
    for x in alive:
        ranks[x] = Infty
    log.debug(f"singleton ranks of a ({C.n}, {C.m}) system settled after {level} rounds")
    return ranks


@use_caps
def rnk_coset(C: FinCosetSystem, A: Iterable[Pair] = (), *, caps: Caps = None) -> Ordinal:
    """rnk^C(A) for a finite coherent A ⊆ C.

    Nonempty sets take the least rank of their members; rnk^C(∅) is one
    more than min over f of max over g of rnk^C({(f, g)}).

    Raises:
        ValueError: if A is not a coherent subset of C.
    """
    A = _check_subset(C, A)
    ranks = singleton_ranks(C, caps=caps)
    if A:
        return min(ranks[x] for x in A)
    best = min(max(ranks[(f, g)] for g in C[f].elements()) for f in range(1 << C.n))
    return best.successor()


def _after(state: Residual, f: int, g: int, n: int, m: int) -> Residual:
    """Values left for the other words once f is sent to g."""
    rest = {}
    for f2, options in state.items():
        if f2 != f:
            k = min(lcp(f, f2, n), m)
            rest[f2] = frozenset(h for h in options if prefix(h, k) == prefix(g, k))
    return rest


def _components(state: Residual, n: int, m: int) -> List[Residual]:
    """Groups of words whose remaining values can never clash across groups."""
    fixed = {}
    for f, options in state.items():
        heads = [{prefix(h, k) for h in options} for k in range(m + 1)]
        fixed[f] = [next(iter(h)) if len(h) == 1 else None for h in heads]
    graph = nx.Graph()
    graph.add_nodes_from(state)
    words = sorted(state)
    for i, f in enumerate(words):
        for f2 in words[i + 1 :]:
            k = min(lcp(f, f2, n), m)
            if fixed[f][k] is None or fixed[f][k] != fixed[f2][k]:
                graph.add_edge(f, f2)
    return [{f: state[f] for f in sorted(c)} for c in nx.connected_components(graph)]


def _normal_form(group: Residual) -> FrozenSet[Tuple[int, FrozenSet[int]]]:
    """Translate words and values so the least word and its least value are 0̄."""
    x = min(group)
    y = min(group[x])
    return frozenset((f ^ x, frozenset(h ^ y for h in options)) for f, options in group.items())


@use_caps
def set_rank_bruteforce(C: FinCosetSystem, A: Iterable[Pair] = (), *, caps: Caps = None) -> Ordinal:
    """rnk^C(A) straight from the recursion on sets, without using that set
    ranks are minima of singleton ranks.

    The recursion only depends on which values each word outside dom(A)
    may still take. Words whose remaining values cannot clash are played
    separately, and each group is memoized up to translation of words and
    values, which preserves coherence.

    A set missing d words of 2^n that reaches rank d+1 has rank ∞.
    """
    A = _check_subset(C, A)
    taken = {f for f, _ in A}
    start = {
        f: frozenset(g for g in C[f].elements() if all(coherent_pair((f, g), x, C.n, C.m) for x in A))
        for f in range(1 << C.n)
        if f not in taken
    }
    memo: Dict[Tuple[FrozenSet[Tuple[int, FrozenSet[int]]], int], bool] = {}

    def holds(state: Residual, k: int) -> bool:
        if k == 0:
            return True
        if not all(state.values()):
            return False
        return all(group_holds(group, k) for group in _components(state, C.n, C.m))

    def group_holds(group: Residual, k: int) -> bool:
        key = (_normal_form(group), k)
        if key not in memo:
            check_cap(len(memo), caps.tuple_space, "number of memoized set ranks")
            memo[key] = all(
                any(holds(_after(group, f, g, C.n, C.m), k - 1) for g in sorted(options))
                for f, options in group.items()
            )
        return memo[key]

    missing = len(start)
    k = 0
    while k <= missing and holds(start, k + 1):
        k += 1
    log.debug(f"set rank of a ({C.n}, {C.m}) system used {len(memo)} memoized groups")
    return Infty if k > missing else Fin(k)


def base_system(n: int, m: int) -> FinCosetSystem:
    """C[f] = {0̄} unless f = 1̄, where C[f] = {1̄}."""
    ones_f, ones_g = (1 << n) - 1, (1 << m) - 1
    return FinCosetSystem(
        n=n,
        m=m,
        cosets=[Coset(m=m, offset=ones_g if f == ones_f else 0) for f in range(1 << n)],
    )


def group_part(C: FinCosetSystem) -> FinCosetSystem:
    return FinCosetSystem(n=C.n, m=C.m, cosets=[c.group() for c in C.cosets])


def successor(C: FinCosetSystem) -> FinCosetSystem:
    """D[0f] = {0̄} and D[1if] = i0·G[f] ∪ j0·C[f] with j = 1 - i, on
    words of length n+2 and m+2 (position 0 holds the first letter)."""
    n, m = C.n + 2, C.m + 2
    cosets = []
    for word in range(1 << n):
        if bit(word, 0) == 0:
            cosets.append(Coset(m=m))
            continue
        i, f = bit(word, 1), word >> 2
        j = 1 - i
        ours = C[f].group().shift(i, 2)
        theirs = C[f].shift(j, 2)
        cosets.append(ours.union(theirs))
    return FinCosetSystem(n=n, m=m, cosets=cosets)


def F_map(i: int, B: Iterable[Pair], n: int, m: int) -> List[Pair]:
    """F_i(B) = {(1jf, i0g) : (f, g) ∈ B}, j = 1 - i."""
    if i not in (0, 1):
        raise ValueError(f"Invalid bit {i}")
    j = 1 - i
    return sorted((1 | (j << 1) | (f << 2), i | (g << 2)) for f, g in B)


def A_set(i: int, C: FinCosetSystem) -> List[Pair]:
    """The pairs (0f, 0̄) and (1if, i0·0̄) of successor(C)."""
    if i not in (0, 1):
        raise ValueError(f"Invalid bit {i}")
    zeros = [(f << 1, 0) for f in range(1 << (C.n + 1))]
    rungs = [(1 | (i << 1) | (f << 2), i) for f in range(1 << C.n)]
    return sorted(zeros + rungs)


def pad_f(C: FinCosetSystem) -> FinCosetSystem:
    """The same sections over one more f-bit, which they ignore."""
    mask = (1 << C.n) - 1
    return FinCosetSystem(n=C.n + 1, m=C.m, cosets=[C[f & mask] for f in range(1 << (C.n + 1))])


@use_caps
def rank_is_stable(C: FinCosetSystem, *, caps: Caps = None) -> bool:
    return rnk_coset(C, caps=caps) == rnk_coset(pad_f(C), caps=caps)


def _extract(word: int, positions: Sequence[int]) -> int:
    return sum(bit(word, p) << i for i, p in enumerate(positions))


def _place(x: int, positions: Sequence[int]) -> int:
    return sum(bit(x, i) << p for i, p in enumerate(positions))


class LimitSystem(BaseModel):
    """D together with its components and the positions of the selector
    bits and blocks; both f and g use the same layout."""

    system: FinCosetSystem
    components: List[FinCosetSystem]
    selectors: List[int]
    blocks: List[List[int]]

    _block_ranks: Dict[Tuple[int, int], Dict[Pair, Ordinal]] = PrivateAttr(default_factory=dict)

    def split(self, word: int) -> Tuple[List[int], List[int]]:
        return (
            [bit(word, s) for s in self.selectors],
            [_extract(word, block) for block in self.blocks],
        )

    def block_ranks(self, t: int, selector: int, caps: Caps) -> Dict[Pair, Ordinal]:
        """Singleton ranks of C_t (selector 1) or of its group part (selector 0)."""
        key = (t, selector)
        if key not in self._block_ranks:
            C = self.components[t]
            self._block_ranks[key] = singleton_ranks(C if selector else group_part(C), caps=caps)
        return self._block_ranks[key]

    def query_dict(self) -> Dict:
        return {
            "system": self.system.query_dict(),
            "selectors": self.selectors,
            "blocks": self.blocks,
        }


@use_caps
def limit(systems: Sequence[FinCosetSystem], *, caps: Caps = None) -> LimitSystem:
    """Glue components C_0, ..., C_{k-1} of strictly increasing rnk(∅).

    Each component gets a selector bit followed by its block. g lies in
    G[f] when every block is in C_t[f_t] (selector 1) or in its group
    (selector 0); D[f] is the coset of G[f] whose last selector bit is 1,
    standing for the selector sequences that are eventually 1.

    Raises:
        ValueError: if a component is not square or the ranks do not
            strictly increase.
    """
    if not systems:
        raise ValueError("No component systems")
    for C in systems:
        if C.n != C.m:
            raise ValueError(f"Component of dimensions ({C.n}, {C.m}) is not square")
    ranks = [rnk_coset(C, caps=caps) for C in systems]
    if any(a >= b for a, b in zip(ranks, ranks[1:])):
        raise ValueError(f"Component ranks {[str(r) for r in ranks]} are not strictly increasing")

    selectors, blocks, pos = [], [], 0
    for C in systems:
        selectors.append(pos)
        blocks.append(list(range(pos + 1, pos + 1 + C.n)))
        pos += 1 + C.n
    check_cap(1 << pos, caps.build, "number of words of the limit system")

    last = len(systems) - 1
    cosets = []
    for f in range(1 << pos):
        fs = [_extract(f, block) for block in blocks]
        gens, offset = [], 1 << selectors[last]
        for t, C in enumerate(systems):
            coset = C[fs[t]]
            gens += [_place(w, blocks[t]) for w in coset.basis]
            if t < last:
                gens.append((1 << selectors[t]) | _place(coset.offset, blocks[t]))
            else:
                offset |= _place(coset.offset, blocks[t])
        cosets.append(Coset.of(pos, gens, offset))
    D = FinCosetSystem(n=pos, m=pos, cosets=cosets)
    return LimitSystem(system=D, components=list(systems), selectors=selectors, blocks=blocks)


@use_caps
def tau(L: LimitSystem, f: int, g: int, *, caps: Caps = None) -> Ordinal:
    """Least block rank rnk^{C_t^{i}}(f_t, g_t), i the selector of block t.

    Raises:
        ValueError: if (f, g) is not in D.
    """
    if not L.system.contains(f, g):
        raise ValueError(f"({bits_to_str(f, L.system.n)}, {bits_to_str(g, L.system.m)}) is not in D")
    sel, gs = L.split(g)
    _, fs = L.split(f)
    return min(L.block_ranks(t, sel[t], caps)[(fs[t], gs[t])] for t in range(len(L.components)))


@use_caps
def to_unary_structure(C: FinCosetSystem, *, caps: Caps = None) -> FiniteStructure:
    """(𝔐, C) on 2^n × 2^m, element (f, g) numbered f·2^m + g.

    E_{p_k} compares f(k) and E_{q_k} compares f↾(k+1) and g(k), named as
    in the truncated increasing ladder; the unary predicate "C" marks C.
    """
    n, m = C.n, C.m
    size = 1 << (n + m)
    check_cap(size, caps.build, "size of the unary structure")
    elems = [(f, g) for f in range(1 << n) for g in range(1 << m)]

    def agreement(key) -> List[Pair]:
        groups: Dict = {}
        for x, pair in enumerate(elems):
            groups.setdefault(key(pair), []).append(x)
        return [(a, b) for block in groups.values() for a in block for b in block]

    interp = {}
    for k in range(n):
        interp[relation_name(f"t0.p[{k}]")] = agreement(lambda pair, k=k: bit(pair[0], k))
    for k in range(m):
        interp[relation_name(f"t0.q[{k}]")] = agreement(
            lambda pair, k=k: (prefix(pair[0], min(k + 1, n)), bit(pair[1], k))
        )
    interp["C"] = [(x,) for x, (f, g) in enumerate(elems) if C.contains(f, g)]
    relations = [(name, 2) for name in interp if name != "C"] + [("C", 1)]
    return FiniteStructure(signature=Signature(relations=relations), universe=size, interp=interp)
