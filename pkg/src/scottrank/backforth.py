from typing import List, Dict, Optional, Union, Tuple, Sequence, FrozenSet, Iterable
from dataclasses import dataclass, field
import itertools
import logging

from pydantic import BaseModel

from scottrank.base import (
    FiniteStructure,
    Signature,
    automorphism_group,
    constant_pairs,
    extends,
    fold_pairs,
    search_isomorphisms,
)
from scottrank.configs import Caps, use_caps
from scottrank.utils import CapExceeded, check_cap, classes_of, is_equivalence
from scottrank.values import Ordinal, Fin, Infty

log = logging.getLogger(__name__)

PairSet = FrozenSet[Tuple[int, int]]


def _check_signatures(M: FiniteStructure, N: FiniteStructure):
    if not M.signature.same_language(N.signature):
        raise ValueError(
            f"Signature mismatch: {M.signature.relations}/{M.signature.constants} "
            f"vs {N.signature.relations}/{N.signature.constants}"
        )


@dataclass
class BfTable:
    """Back-and-forth levels of every partial isomorphism M → N.

    A tuple pair (ā, b̄) is identified with the map a_i ↦ b_i joined with the
    constant pairs; pairs whose map is not a partial isomorphism are at no
    level. `levels[i]` is the level of `maps[i]`.
    """

    M: FiniteStructure
    N: FiniteStructure
    maps: List[Dict[int, int]]
    levels: List[Ordinal]
    fixpoint: int
    base: Dict[int, int] = field(default_factory=dict)
    index: Dict[PairSet, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.maps)

    def level_of(self, pairs: Iterable[Tuple[int, int]]) -> Optional[Ordinal]:
        p = fold_pairs(self.M, self.N, self.base, pairs)
        if p is None:
            return None
        return self.levels[self.index[frozenset(p.items())]]

    def level(self, left: Sequence[int], right: Sequence[int]) -> Optional[Ordinal]:
        if len(left) != len(right):
            raise ValueError("Tuples of different lengths")
        return self.level_of(zip(self.M.check_elements(left), self.N.check_elements(right)))

    def equivalent(
        self, left: Sequence[int], right: Sequence[int], k: Optional[int] = None
    ) -> bool:
        """(M, left) ≡_k (N, right); k=None asks for ≡_∞."""
        lvl = self.level(left, right)
        if lvl is None:
            return False
        return lvl.is_infty if k is None else lvl >= Fin(k)

    def chain_sizes(self) -> List[int]:
        """|S_k| for k = 0..fixpoint, where S_k holds the maps of level ≥ k."""
        return [
            sum(1 for lvl in self.levels if lvl >= Fin(k)) for k in range(self.fixpoint + 1)
        ]

    def rows(self) -> List[Dict]:
        out = []
        for p, lvl in zip(self.maps, self.levels):
            extra = sorted((a, b) for a, b in p.items() if self.base.get(a) != b)
            out.append(
                {
                    "left": [a for a, _ in extra],
                    "right": [b for _, b in extra],
                    "level": str(lvl),
                }
            )
        return out


def _enumerate_partial_isos(
    M: FiniteStructure, N: FiniteStructure, base: Dict[int, int], limit: int
) -> List[Dict[int, int]]:
    rest = [a for a in M.elements if a not in base]
    maps = [dict(base)]

    def dfs(start: int, cur: Dict[int, int], inv: Dict[int, int]):
        for i in range(start, len(rest)):
            c = rest[i]
            for d in N.elements:
                if d in inv or not extends(M, N, cur, inv, c, d):
                    continue
                cur[c] = d
                inv[d] = c
                maps.append(dict(cur))
                if len(maps) > limit:
                    raise CapExceeded(
                        f"number of partial isomorphisms exceeds the cap {limit}"
                    )
                dfs(i + 1, cur, inv)
                del cur[c]
                del inv[d]

    dfs(0, dict(base), {v: k for k, v in base.items()})
    return maps


@use_caps
def bf_table(M: FiniteStructure, N: FiniteStructure, *, caps: Caps = None) -> BfTable:
    """Iterate the back-and-forth refinement to its fixpoint.

    S_0 is the set of all partial isomorphisms extending the constant map;
    S_{k+1} keeps the maps of S_k that can answer every one-element move on
    either side inside S_k.
    """
    _check_signatures(M, N)
    check_cap(max(M.universe, N.universe), caps.universe, "universe size")
    base = constant_pairs(M, N)
    if base is None:
        return BfTable(M=M, N=N, maps=[], levels=[], fixpoint=0, base={})
    maps = _enumerate_partial_isos(M, N, base, caps.tuple_space)
    index = {frozenset(p.items()): i for i, p in enumerate(maps)}

    # For each map and each missing element on the left (right), the children
    # answering that move.
    forth: List[List[List[int]]] = []
    back: List[List[List[int]]] = []
    for p in maps:
        ran = set(p.values())
        key = set(p.items())
        fw = []
        for c in M.elements:
            if c in p:
                continue
            fw.append(
                [
                    index[frozenset(key | {(c, d)})]
                    for d in N.elements
                    if d not in ran and frozenset(key | {(c, d)}) in index
                ]
            )
        bw = []
        for d in N.elements:
            if d in ran:
                continue
            bw.append(
                [
                    index[frozenset(key | {(c, d)})]
                    for c in M.elements
                    if c not in p and frozenset(key | {(c, d)}) in index
                ]
            )
        forth.append(fw)
        back.append(bw)

    alive = [True] * len(maps)
    levels: List[Optional[Ordinal]] = [None] * len(maps)
    rounds = 0
    while True:
        rounds += 1
        dropped = [
            i
            for i in range(len(maps))
            if alive[i]
            and not (
                all(any(alive[j] for j in move) for move in forth[i])
                and all(any(alive[j] for j in move) for move in back[i])
            )
        ]
        log.debug(f"bf refinement round {rounds}: {len(dropped)} maps dropped")
        if not dropped:
            break
        for i in dropped:
            alive[i] = False
            levels[i] = Fin(rounds - 1)
    levels = [Infty if lvl is None else lvl for lvl in levels]
    return BfTable(
        M=M, N=N, maps=maps, levels=levels, fixpoint=rounds - 1, base=base, index=index
    )


class _Game:
    """Depth-bounded Ehrenfeucht-Fraïssé game with memoized positions."""

    def __init__(self, M: FiniteStructure, N: FiniteStructure, limit: int):
        self.M, self.N, self.limit = M, N, limit
        self.known_true: Dict[PairSet, int] = {}
        self.known_false: Dict[PairSet, int] = {}

    def holds(self, p: Dict[int, int], k: int) -> bool:
        if k == 0:
            return True
        key = frozenset(p.items())
        if self.known_true.get(key, -1) >= k:
            return True
        if key in self.known_false and self.known_false[key] <= k:
            return False
        if len(self.known_true) + len(self.known_false) > self.limit:
            raise CapExceeded(f"game positions exceed the cap {self.limit}")
        inv = {v: u for u, v in p.items()}
        ok = all(self._answer(p, inv, c, k, left=True) for c in self.M.elements if c not in p)
        if ok:
            ok = all(
                self._answer(p, inv, d, k, left=False) for d in self.N.elements if d not in inv
            )
        if ok:
            self.known_true[key] = max(self.known_true.get(key, 0), k)
        else:
            self.known_false[key] = min(self.known_false.get(key, k), k)
        return ok

    def _answer(self, p, inv, x, k, left: bool) -> bool:
        if left:
            for d in self.N.elements:
                if d not in inv and extends(self.M, self.N, p, inv, x, d):
                    if self.holds({**p, x: d}, k - 1):
                        return True
        else:
            rev = {v: u for u, v in inv.items()}
            for c in self.M.elements:
                if c not in p and extends(self.N, self.M, inv, rev, x, c):
                    if self.holds({**p, c: x}, k - 1):
                        return True
        return False


@use_caps
def bf_level(
    M: FiniteStructure,
    left: Sequence[int],
    N: FiniteStructure,
    right: Sequence[int],
    *,
    caps: Caps = None,
) -> Optional[Ordinal]:
    """The largest k with (M, left) ≡_k (N, right), or Infty.

    On finite structures ≡_∞ is witnessed by an isomorphism extending the
    tuple map, so that case is settled by search first; otherwise the game
    is played at increasing depth until Duplicator loses.

    Returns:
        Optional[Ordinal]: None when the tuples already differ in
        quantifier-free type.
    """
    _check_signatures(M, N)
    if len(left) != len(right):
        raise ValueError("Tuples of different lengths")
    check_cap(max(M.universe, N.universe), caps.universe, "universe size")
    left, right = M.check_elements(left), N.check_elements(right)
    base = constant_pairs(M, N)
    p = None if base is None else fold_pairs(M, N, base, zip(left, right))
    if p is None:
        return None
    if next(search_isomorphisms(M, N, p), None) is not None:
        return Infty
    game = _Game(M, N, caps.tuple_space)
    k = 0
    bound = max(M.universe, N.universe) - len(p) + 1
    while k <= bound and game.holds(p, k + 1):
        k += 1
    log.debug(f"bf level {k} after {len(game.known_true) + len(game.known_false)} positions")
    return Fin(k)


@use_caps
def scott_rank(M: FiniteStructure, *, caps: Caps = None) -> Ordinal:
    """Least k such that ≡_k implies ≡_∞ for all tuple pairs of M."""
    table = bf_table(M, M, caps=caps)
    finite = [lvl.value for lvl in table.levels if lvl.is_finite]
    return Fin(max(finite) + 1) if finite else Fin(0)


@use_caps
def is_base(M: FiniteStructure, B: Sequence[int], *, caps: Caps = None) -> bool:
    """Whether distinct elements lie in distinct Aut(M)-orbits over B."""
    B = M.check_elements(B)
    group = automorphism_group(M, caps=caps)
    return group.stabilizer(B).order == 1


@use_caps
def find_finite_base(
    M: FiniteStructure, max_size: int, *, caps: Caps = None
) -> Optional[Tuple[int, ...]]:
    group = automorphism_group(M, caps=caps)
    for size in range(min(max_size, M.universe) + 1):
        for B in itertools.combinations(M.elements, size):
            if all(
                g == group.identity or any(g[b] != b for b in B) for g in group.elements
            ):
                log.debug(f"base {B} found among subsets of size {size}")
                return B
    return None


def expand_constants(
    M: FiniteStructure, tup: Sequence[int], names: Optional[Sequence[str]] = None
) -> FiniteStructure:
    """Name the entries of `tup` by fresh constants `_c0, _c1, ...`."""
    tup = M.check_elements(tup)
    if not tup:
        return M
    if names is None:
        taken = set(M.signature.constants) | set(M.signature.relation_names)
        names, i = [], 0
        while len(names) < len(tup):
            if f"_c{i}" not in taken:
                names.append(f"_c{i}")
            i += 1
    if len(names) != len(tup):
        raise ValueError("One name per constant is needed")
    return M.with_constants(list(names), tup)


class SortedExpansion(BaseModel):
    """M with a new sort U_E of E-classes and a projection π_E for each E.

    Encoded one-sorted: the home elements keep their ids and satisfy
    `Home`; the classes of E follow, satisfy `U_E`, and `pi_E(a, [a])`.
    """

    base: FiniteStructure
    families: List[str]
    structure: FiniteStructure
    sorts: Dict[str, List[int]] = {}

    def class_element(self, name: str, a: int) -> int:
        for e in self.sorts[name]:
            if (a, e) in self.structure.interp[f"pi_{name}"]:
                return e
        raise ValueError(f"{a} is not a home element")


def expand_sorts(M: FiniteStructure, families: Sequence[str]) -> SortedExpansion:
    families = list(families)
    if not families:
        return SortedExpansion(base=M, families=[], structure=M)
    n = M.universe
    new_rels: Dict[str, List[Tuple[int, ...]]] = {"Home": [(a,) for a in M.elements]}
    sorts = {}
    next_id = n
    for name in families:
        if name not in M.signature.relation_names or M.signature.arity(name) != 2:
            raise ValueError(f"{name} is not a binary relation of the structure")
        if not is_equivalence(M.interp[name], n):
            raise ValueError(f"{name} is not an equivalence relation")
        classes = classes_of(M.interp[name], n)
        ids = list(range(next_id, next_id + len(classes)))
        next_id += len(classes)
        sorts[name] = ids
        new_rels[f"U_{name}"] = [(e,) for e in ids]
        new_rels[f"pi_{name}"] = [(a, e) for e, block in zip(ids, classes) for a in block]
    signature = M.signature.extend(
        relations=[("Home", 1)]
        + [(f"U_{name}", 1) for name in families]
        + [(f"pi_{name}", 2) for name in families]
    )
    structure = FiniteStructure(
        signature=signature,
        universe=next_id,
        interp={**M.interp, **new_rels},
        consts=M.consts,
    )
    return SortedExpansion(base=M, families=families, structure=structure, sorts=sorts)


def is_invariant(M: FiniteStructure, name: str, pairs: Iterable[Tuple[int, int]]) -> bool:
    """Whether relation `name` is a union of products of classes of the
    equivalence relation given by `pairs`."""
    classes = classes_of(pairs, M.universe)
    block_of = {a: i for i, block in enumerate(classes) for a in block}
    rel = M.interp[name]
    for tup in rel:
        for other in itertools.product(*[classes[block_of[a]] for a in tup]):
            if other not in rel:
                return False
    return True


@dataclass
class QuotientResult:
    structure: FiniteStructure
    colors: List[int]
    classes: List[Tuple[int, ...]]

    def class_of(self, a: int) -> int:
        for i, block in enumerate(self.classes):
            if a in block:
                return i
        raise ValueError(f"{a} is not an element")


def quotient(
    M: FiniteStructure,
    E: Union[str, Iterable[Tuple[int, int]]],
    push: Optional[Sequence[str]] = None,
) -> QuotientResult:
    """M/E with the pushed-down relations and the class-size coloring.

    The coloring gives [a] the color |[a]|+1 (color 0 is reserved for
    infinite classes) and is added as unary relations `color{k}`.

    Args:
        E: a relation name of M or an explicit list of pairs.
        push: relations to push down; all relations of M by default.
    """
    pairs = M.interp[E] if isinstance(E, str) else [tuple(p) for p in E]
    if not is_equivalence(pairs, M.universe):
        raise ValueError("The relation to factor by is not an equivalence relation")
    push = list(M.signature.relation_names if push is None else push)
    for name in push:
        if not is_invariant(M, name, pairs):
            raise ValueError(f"Relation {name} is not invariant under the equivalence")
    classes = classes_of(pairs, M.universe)
    block_of = {a: i for i, block in enumerate(classes) for a in block}
    colors = [len(block) + 1 for block in classes]
    color_names = sorted(set(colors))
    signature = Signature(
        relations=[(name, M.signature.arity(name)) for name in push]
        + [(f"color{k}", 1) for k in color_names],
        constants=list(M.signature.constants),
    )
    interp = {name: {tuple(block_of[a] for a in tup) for tup in M.interp[name]} for name in push}
    for k in color_names:
        interp[f"color{k}"] = [(i,) for i, c in enumerate(colors) if c == k]
    structure = FiniteStructure(
        signature=signature,
        universe=len(classes),
        interp=interp,
        consts={c: block_of[a] for c, a in M.consts.items()},
    )
    return QuotientResult(structure=structure, colors=colors, classes=classes)


def is_back_and_forth_system(
    M: FiniteStructure, N: FiniteStructure, system: Iterable[Dict[int, int]]
) -> bool:
    """Whether a set of maps M → N consists of partial isomorphisms and
    is closed under answering one-element moves on either side."""
    system = [dict(p) for p in system]
    keys = {frozenset(p.items()) for p in system}
    for p in system:
        if fold_pairs(M, N, {}, p.items()) is None:
            return False
        inv = {v: u for u, v in p.items()}
        for c in M.elements:
            if c in p:
                continue
            if not any(frozenset({**p, c: d}.items()) in keys for d in N.elements if d not in inv):
                return False
        for d in N.elements:
            if d in inv:
                continue
            if not any(frozenset({**p, c: d}.items()) in keys for c in M.elements if c not in p):
                return False
    return True


def singleton_relation(table: BfTable, k: int) -> List[Dict[int, int]]:
    """Maps of the table whose pairs are each ≡_k as one-element tuples."""
    single = {}
    for p, lvl in zip(table.maps, table.levels):
        extra = [(a, b) for a, b in p.items() if table.base.get(a) != b]
        if len(extra) == 1:
            single[extra[0]] = lvl
    out = []
    for p in table.maps:
        pairs = [(a, b) for a, b in p.items() if table.base.get(a) != b]
        if all(single[pair] >= Fin(k) for pair in pairs):
            out.append(p)
    return out


@use_caps
def bounds_scott_rank(M: FiniteStructure, k: int, *, caps: Caps = None) -> bool:
    """Whether pointwise ≡_k (with equal quantifier-free type) is a
    back-and-forth system on M; if so sr(M) ≤ k."""
    table = bf_table(M, M, caps=caps)
    return is_back_and_forth_system(M, M, singleton_relation(table, k))


@use_caps
def quotient_transfer_holds(
    M: FiniteStructure,
    E: Union[str, Iterable[Tuple[int, int]]],
    length: int = 1,
    *,
    caps: Caps = None,
) -> bool:
    """For tuples with entries in distinct E-classes, a level in the colored
    quotient is also reached in M."""
    result = quotient(M, E)
    Q = result.structure
    reps = [block[0] for block in result.classes]
    for left in itertools.permutations(range(Q.universe), length):
        for right in itertools.permutations(range(Q.universe), length):
            q_level = bf_level(Q, left, Q, right, caps=caps)
            if q_level is None:
                continue
            m_level = bf_level(
                M, [reps[i] for i in left], M, [reps[i] for i in right], caps=caps
            )
            if m_level is None or m_level < q_level:
                return False
    return True
