from typing import List, Dict, Optional, Union, Tuple, FrozenSet, Iterable, Iterator, Sequence
import itertools
import logging

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from scottrank.configs import Caps, use_caps
from scottrank.utils import flatten_dict, check_cap

log = logging.getLogger(__name__)

Term = Union[int, str]
Perm = Tuple[int, ...]


class Signature(BaseModel):
    relations: List[Tuple[str, int]] = []
    constants: List[str] = []
    owners: Dict[str, int] = {}
    # Optional owner index per relation name; relations of different owners
    # form disjoint languages.

    @field_validator("relations")
    @classmethod
    def relations_are_well_formed(cls, v):
        names = [name for name, _ in v]
        if len(set(names)) != len(names):
            raise ValueError(f"Invalid signature: duplicated relation names in {names}")
        for name, arity in v:
            if arity < 1:
                raise ValueError(f"Invalid arity {arity} for relation {name}")
            if name == "=":
                raise ValueError("'=' is reserved for equality atoms")
        return v

    @model_validator(mode="after")
    def names_are_unique(self):
        if len(set(self.constants)) != len(self.constants):
            raise ValueError(f"Invalid signature: duplicated constants {self.constants}")
        clash = set(self.constants) & set(self.relation_names)
        if clash:
            raise ValueError(f"Invalid signature: {sorted(clash)} used twice")
        unknown = set(self.owners) - set(self.relation_names)
        if unknown:
            raise ValueError(f"Owner tags for unknown relations {sorted(unknown)}")
        return self

    @property
    def relation_names(self) -> List[str]:
        return [name for name, _ in self.relations]

    def arity(self, name: str) -> int:
        for rel, arity in self.relations:
            if rel == name:
                return arity
        raise KeyError(name)

    def same_language(self, other: "Signature") -> bool:
        return sorted(self.relations) == sorted(other.relations) and sorted(
            self.constants
        ) == sorted(other.constants)

    def extend(
        self,
        relations: Sequence[Tuple[str, int]] = (),
        constants: Sequence[str] = (),
    ) -> "Signature":
        return Signature(
            relations=list(self.relations) + list(relations),
            constants=list(self.constants) + list(constants),
            owners=dict(self.owners),
        )

    def rename(self, mapping: Dict[str, str]) -> "Signature":
        return Signature(
            relations=[(mapping.get(name, name), arity) for name, arity in self.relations],
            constants=[mapping.get(c, c) for c in self.constants],
            owners={mapping.get(k, k): v for k, v in self.owners.items()},
        )


class FiniteStructure(BaseModel):
    """A finite relational structure with constants.

    Elements are the ids ``0..universe-1``. Every relation of the signature
    is interpreted by an explicit set of tuples.
    """

    model_config = ConfigDict(frozen=True)

    signature: Signature
    universe: int
    interp: Dict[str, FrozenSet[Tuple[int, ...]]] = {}
    consts: Dict[str, int] = {}

    @model_validator(mode="before")
    @classmethod
    def fill_empty_relations(cls, data):
        if isinstance(data, dict) and "signature" in data:
            sig = data["signature"]
            if isinstance(sig, dict):
                names = [rel[0] for rel in sig.get("relations", [])]
            else:
                names = sig.relation_names
            interp = dict(data.get("interp") or {})
            for name in names:
                interp.setdefault(name, [])
            data = {**data, "interp": interp}
        return data

    @model_validator(mode="after")
    def interpretation_fits(self):
        if self.universe < 0:
            raise ValueError(f"Invalid universe size {self.universe}")
        names = set(self.signature.relation_names)
        if set(self.interp) != names:
            raise ValueError(
                f"Interpretation keys {sorted(self.interp)} do not match relations {sorted(names)}"
            )
        for name, arity in self.signature.relations:
            for tup in self.interp[name]:
                if len(tup) != arity:
                    raise ValueError(f"Tuple {tup} in {name} has arity {len(tup)} != {arity}")
                if any(not 0 <= x < self.universe for x in tup):
                    raise ValueError(f"Tuple {tup} in {name} leaves the universe")
        if set(self.consts) != set(self.signature.constants):
            raise ValueError(
                f"Constants {sorted(self.consts)} do not match signature {self.signature.constants}"
            )
        for name, elem in self.consts.items():
            if not 0 <= elem < self.universe:
                raise ValueError(f"Constant {name} denotes {elem}, not in the universe")
        return self

    @property
    def elements(self) -> range:
        return range(self.universe)

    def __len__(self):
        return self.universe

    def holds(self, name: str, tup: Sequence[int]) -> bool:
        return tuple(tup) in self.interp[name]

    def check_elements(self, tup: Sequence[int]) -> Tuple[int, ...]:
        tup = tuple(tup)
        for x in tup:
            if not isinstance(x, int) or not 0 <= x < self.universe:
                raise ValueError(f"Element {x} is not in the universe of size {self.universe}")
        return tup

    @classmethod
    def from_raw(cls, data: Dict) -> "FiniteStructure":
        return cls(
            signature=data["signature"],
            universe=data["universe"],
            interp=data.get("interp", {}),
            consts=data.get("consts", {}),
        )

    def query_dict(self) -> Dict:
        return flatten_dict(
            {
                "signature": {
                    "relations": [list(rel) for rel in self.signature.relations],
                    "constants": list(self.signature.constants),
                    "owners": self.signature.owners or None,
                },
                "universe": self.universe,
                "interp": self.interp,
                "consts": self.consts or None,
            }
        )

    def with_constants(self, names: Sequence[str], elems: Sequence[int]) -> "FiniteStructure":
        elems = self.check_elements(elems)
        return FiniteStructure(
            signature=self.signature.extend(constants=names),
            universe=self.universe,
            interp=self.interp,
            consts={**self.consts, **dict(zip(names, elems))},
        )

    def with_relations(self, relations: Dict[str, Iterable[Tuple[int, ...]]]) -> "FiniteStructure":
        """Add new relations, arity read off the first tuple (1 when empty)."""
        new_rels = []
        new_interp = {}
        for name, tuples in relations.items():
            tuples = [tuple(t) for t in tuples]
            new_rels.append((name, len(tuples[0]) if tuples else 1))
            new_interp[name] = tuples
        return FiniteStructure(
            signature=self.signature.extend(relations=new_rels),
            universe=self.universe,
            interp={**self.interp, **new_interp},
            consts=self.consts,
        )

    def rename_relations(self, mapping: Dict[str, str]) -> "FiniteStructure":
        return FiniteStructure(
            signature=self.signature.rename(mapping),
            universe=self.universe,
            interp={mapping.get(k, k): v for k, v in self.interp.items()},
            consts={mapping.get(k, k): v for k, v in self.consts.items()},
        )

    def substructure(self, elems: Sequence[int]) -> "FiniteStructure":
        """The induced substructure on `elems`, renumbered in the given order."""
        elems = list(self.check_elements(elems))
        if len(set(elems)) != len(elems):
            raise ValueError("Substructure elements must be distinct")
        new_id = {x: i for i, x in enumerate(elems)}
        missing = [c for c, x in self.consts.items() if x not in new_id]
        if missing:
            raise ValueError(f"Substructure drops the constants {missing}")
        return FiniteStructure(
            signature=self.signature,
            universe=len(elems),
            interp={
                name: [
                    tuple(new_id[x] for x in tup)
                    for tup in tuples
                    if all(x in new_id for x in tup)
                ]
                for name, tuples in self.interp.items()
            },
            consts={c: new_id[x] for c, x in self.consts.items()},
        )


def pure_set(n: int) -> FiniteStructure:
    return FiniteStructure(signature=Signature(), universe=n)


def equivalence_structure(classes: Sequence[Sequence[int]], name: str = "E") -> FiniteStructure:
    """A single equivalence relation with the given classes."""
    universe = sum(len(c) for c in classes)
    pairs = [(a, b) for block in classes for a in block for b in block]
    return FiniteStructure(
        signature=Signature(relations=[(name, 2)]), universe=universe, interp={name: pairs}
    )


def linear_order(n: int, name: str = "<") -> FiniteStructure:
    return FiniteStructure(
        signature=Signature(relations=[(name, 2)]),
        universe=n,
        interp={name: [(a, b) for a in range(n) for b in range(n) if a < b]},
    )


def directed_cycle(n: int, name: str = "S") -> FiniteStructure:
    return FiniteStructure(
        signature=Signature(relations=[(name, 2)]),
        universe=n,
        interp={name: [(a, (a + 1) % n) for a in range(n)]},
    )


def cyclic_order(n: int, name: str = "Cyc") -> FiniteStructure:
    """The ternary cyclic order on Z_n: Cyc(a, b, c) iff b-a, c-b, a-c wind once."""
    tuples = []
    for a, b, c in itertools.permutations(range(n), 3):
        if (b - a) % n + (c - b) % n + (a - c) % n == n:
            tuples.append((a, b, c))
    return FiniteStructure(
        signature=Signature(relations=[(name, 3)]), universe=n, interp={name: tuples}
    )


class QfType(BaseModel):
    """The atomic diagram of a tuple: atoms over variables ``0..length-1``
    and the constant names, including equalities."""

    model_config = ConfigDict(frozen=True)

    length: int
    atoms: FrozenSet[Tuple[str, Tuple[Union[int, str], ...]]]

    @model_validator(mode="after")
    def equalities_form_a_congruence(self):
        eq = {terms for name, terms in self.atoms if name == "="}
        terms = {t for pair in eq for t in pair}
        for s in terms:
            if (s, s) not in eq:
                raise ValueError(f"Equality diagram is not reflexive at {s}")
        for s, t in eq:
            if (t, s) not in eq:
                raise ValueError(f"Equality diagram is not symmetric at {(s, t)}")
            for u in terms:
                if (t, u) in eq and (s, u) not in eq:
                    raise ValueError(f"Equality diagram is not transitive at {(s, t, u)}")
        return self

    def __contains__(self, atom) -> bool:
        name, terms = atom
        return (name, tuple(terms)) in self.atoms


def qftp(M: FiniteStructure, tup: Sequence[int]) -> QfType:
    tup = M.check_elements(tup)
    terms: List[Term] = list(range(len(tup))) + list(M.signature.constants)

    def value(t: Term) -> int:
        return tup[t] if isinstance(t, int) else M.consts[t]

    atoms = set()
    for s, t in itertools.product(terms, repeat=2):
        if value(s) == value(t):
            atoms.add(("=", (s, t)))
    for name, arity in M.signature.relations:
        for ts in itertools.product(terms, repeat=arity):
            if M.holds(name, [value(t) for t in ts]):
                atoms.add((name, ts))
    return QfType(length=len(tup), atoms=frozenset(atoms))


# Partial isomorphisms are dicts from M-elements to N-elements.


def constant_pairs(M: FiniteStructure, N: FiniteStructure) -> Optional[Dict[int, int]]:
    """The forced map between the constants of M and N, or None when the
    constants already disagree on equality."""
    return fold_pairs(M, N, {}, [(M.consts[c], N.consts[c]) for c in M.signature.constants])


def _tuples_through(c: int, dom: List[int], arity: int) -> Iterator[Tuple[int, ...]]:
    if arity == 1:
        yield (c,)
    elif arity == 2:
        for x in dom:
            yield (c, x)
            if x != c:
                yield (x, c)
    else:
        for tup in itertools.product(dom, repeat=arity):
            if c in tup:
                yield tup


def extends(
    M: FiniteStructure, N: FiniteStructure, p: Dict[int, int], inv: Dict[int, int], c: int, d: int
) -> bool:
    """Whether p ∪ {c ↦ d} is a partial isomorphism, given that p is one and
    c is new. Only tuples containing c are checked."""
    if d in inv:
        return False
    dom = list(p) + [c]
    img = dict(p)
    img[c] = d
    for name, arity in M.signature.relations:
        rel_m, rel_n = M.interp[name], N.interp[name]
        for tup in _tuples_through(c, dom, arity):
            if (tup in rel_m) != (tuple(img[x] for x in tup) in rel_n):
                return False
    return True


def fold_pairs(
    M: FiniteStructure,
    N: FiniteStructure,
    p: Dict[int, int],
    pairs: Iterable[Tuple[int, int]],
) -> Optional[Dict[int, int]]:
    """Add pairs to the partial isomorphism p one by one. Returns the new map,
    or None when the pairs break injectivity, functionality or an atom."""
    p = dict(p)
    inv = {v: k for k, v in p.items()}
    for c, d in pairs:
        if c in p or d in inv:
            if p.get(c) != d or inv.get(d) != c:
                return None
            continue
        if not extends(M, N, p, inv, c, d):
            return None
        p[c] = d
        inv[d] = c
    return p


def _element_profile(M: FiniteStructure) -> List[Tuple]:
    """Per-element counts of occurrences at each position of each relation,
    relations taken in name order."""
    names = sorted(M.signature.relation_names)
    counts = {(name, i, x): 0 for name in names for i in range(M.signature.arity(name)) for x in M.elements}
    for name in names:
        for tup in M.interp[name]:
            for i, x in enumerate(tup):
                counts[(name, i, x)] += 1
    return [
        tuple(counts[(name, i, x)] for name in names for i in range(M.signature.arity(name)))
        for x in M.elements
    ]


def search_isomorphisms(
    M: FiniteStructure, N: FiniteStructure, p: Optional[Dict[int, int]] = None
) -> Iterator[Perm]:
    """All isomorphisms M → N extending p, in lexicographic order."""
    if M.universe != N.universe:
        return
    if any(len(M.interp[name]) != len(N.interp[name]) for name in M.signature.relation_names):
        return
    start = constant_pairs(M, N)
    if start is None:
        return
    if p:
        start = fold_pairs(M, N, start, p.items())
        if start is None:
            return
    prof_m, prof_n = _element_profile(M), _element_profile(N)
    if any(prof_m[a] != prof_n[b] for a, b in start.items()):
        return
    if sorted(prof_m) != sorted(prof_n):
        return
    todo = [a for a in M.elements if a not in start]

    def dfs(i: int, cur: Dict[int, int], inv: Dict[int, int]):
        if i == len(todo):
            yield tuple(cur[a] for a in M.elements)
            return
        a = todo[i]
        for b in N.elements:
            if b in inv or prof_n[b] != prof_m[a]:
                continue
            if extends(M, N, cur, inv, a, b):
                cur[a] = b
                inv[b] = a
                yield from dfs(i + 1, cur, inv)
                del cur[a]
                del inv[b]

    yield from dfs(0, dict(start), {v: k for k, v in start.items()})


def compose(g: Perm, h: Perm) -> Perm:
    """g ∘ h: apply h first."""
    return tuple(g[x] for x in h)


def inverse(g: Perm) -> Perm:
    inv = [0] * len(g)
    for x, y in enumerate(g):
        inv[y] = x
    return tuple(inv)


class PermGroup(BaseModel):
    degree: int
    elements: List[Perm]
    generators: List[Perm] = []

    @property
    def identity(self) -> Perm:
        return tuple(range(self.degree))

    @property
    def order(self) -> int:
        return len(self.elements)

    def __contains__(self, g) -> bool:
        return tuple(g) in set(self.elements)

    def __iter__(self):
        return iter(self.elements)

    @classmethod
    def from_generators(cls, degree: int, generators: Iterable[Sequence[int]]) -> "PermGroup":
        gens = [tuple(g) for g in generators]
        for g in gens:
            if sorted(g) != list(range(degree)):
                raise ValueError(f"Invalid permutation {g} of degree {degree}")
        identity = tuple(range(degree))
        seen = {identity}
        frontier = [identity]
        while frontier:
            nxt = []
            for h in frontier:
                for g in gens:
                    gh = compose(g, h)
                    if gh not in seen:
                        seen.add(gh)
                        nxt.append(gh)
            frontier = nxt
        return cls(degree=degree, elements=sorted(seen), generators=gens)

    @classmethod
    def from_elements(cls, degree: int, elements: Iterable[Perm]) -> "PermGroup":
        """Wrap an enumerated group, picking generators greedily in lex order."""
        elements = sorted(set(tuple(g) for g in elements))
        gens: List[Perm] = []
        span = {tuple(range(degree))}
        for g in elements:
            if g not in span:
                gens.append(g)
                span = set(cls.from_generators(degree, gens).elements)
        return cls(degree=degree, elements=elements, generators=gens)

    def is_closed(self) -> bool:
        elems = set(self.elements)
        if self.identity not in elems:
            return False
        for g in elems:
            if inverse(g) not in elems:
                return False
            for h in elems:
                if compose(g, h) not in elems:
                    return False
        return True

    def apply(self, g: Perm, tup: Sequence[int]) -> Tuple[int, ...]:
        return tuple(g[x] for x in tup)

    def orbits(self) -> List[Tuple[int, ...]]:
        seen = set()
        out = []
        for x in range(self.degree):
            if x in seen:
                continue
            orbit = tuple(sorted({g[x] for g in self.elements}))
            seen.update(orbit)
            out.append(orbit)
        return out

    def stabilizer(self, points: Iterable[int]) -> "PermGroup":
        points = list(points)
        return PermGroup.from_elements(
            self.degree, [g for g in self.elements if all(g[x] == x for x in points)]
        )


@use_caps
def automorphism_group(M: FiniteStructure, *, caps: Caps = None) -> PermGroup:
    check_cap(M.universe, caps.universe, "universe size")
    elements = list(search_isomorphisms(M, M))
    log.debug(f"|Aut| = {len(elements)} on a structure of size {M.universe}")
    return PermGroup.from_elements(M.universe, elements)


def is_free_action(G: PermGroup, X: Optional[Iterable[int]] = None) -> bool:
    X = list(range(G.degree)) if X is None else list(X)
    identity = G.identity
    for g in G.elements:
        if g == identity:
            continue
        if any(g[x] == x for x in X):
            return False
    return True


@use_caps
def isomorphic(
    M: FiniteStructure, N: FiniteStructure, *, caps: Caps = None
) -> Optional[Perm]:
    """The lexicographically least isomorphism M → N, or None.

    Raises:
        ValueError: when the signatures differ.
    """
    if not M.signature.same_language(N.signature):
        raise ValueError(
            f"Signature mismatch: {M.signature.relations} vs {N.signature.relations}"
        )
    check_cap(max(M.universe, N.universe), caps.universe, "universe size")
    return next(search_isomorphisms(M, N), None)


@use_caps
def orbit_partition(
    M: FiniteStructure, k: int, *, caps: Caps = None
) -> List[List[Tuple[int, ...]]]:
    """The Aut(M)-orbits on k-tuples, each sorted, blocks ordered by least tuple."""
    check_cap(M.universe ** k, caps.tuple_space, f"number of {k}-tuples")
    group = automorphism_group(M, caps=caps)
    seen = set()
    blocks = []
    for tup in itertools.product(M.elements, repeat=k):
        if tup in seen:
            continue
        orbit = sorted({group.apply(g, tup) for g in group.elements})
        seen.update(orbit)
        blocks.append(orbit)
    return blocks
