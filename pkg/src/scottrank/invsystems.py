from typing import List, Dict, Optional, Tuple, Sequence, Any, Iterable
from dataclasses import dataclass
from collections import deque
import itertools
import logging
import math

import networkx as nx
from pydantic import BaseModel, ConfigDict, PrivateAttr, field_validator, model_validator

from scottrank.configs import Caps, use_caps
from scottrank.constants import DEFAULT_ZK
from scottrank.posets import FinitePoset
from scottrank.utils import check_cap, InvariantViolation
from scottrank.values import Ordinal, Fin, Infty

log = logging.getLogger(__name__)

Vector = Tuple[int, ...]


class AbGroup(BaseModel):
    """Z_{k_0} ⊕ ... ⊕ Z_{k_{r-1}}; an order of 0 stands for Z, realized as
    Z_zk for a large zk."""

    model_config = ConfigDict(frozen=True)

    orders: List[int] = []

    @field_validator("orders")
    @classmethod
    def orders_are_natural(cls, v):
        for k in v:
            if k < 0:
                raise ValueError(f"Invalid cyclic order {k}")
        return v

    @property
    def dim(self) -> int:
        return len(self.orders)

    def moduli(self, zk: int) -> Vector:
        return tuple(k if k > 0 else zk for k in self.orders)

    def zero(self) -> Vector:
        return (0,) * self.dim

    def __str__(self):
        if not self.orders or all(k == 1 for k in self.orders):
            return "trivial"
        return " x ".join("Z" if k == 0 else f"C{k}" for k in self.orders if k != 1)


def add(a: Sequence[int], b: Sequence[int], moduli: Sequence[int]) -> Vector:
    return tuple((x + y) % k for x, y, k in zip(a, b, moduli))


def neg(a: Sequence[int], moduli: Sequence[int]) -> Vector:
    return tuple((-x) % k for x, k in zip(a, moduli))


def closure(generators: Iterable[Sequence[int]], moduli: Sequence[int], limit: int) -> List[Vector]:
    """The subgroup generated by `generators`, by breadth-first search."""
    gens = [tuple(x % k for x, k in zip(g, moduli)) for g in generators]
    zero = (0,) * len(moduli)
    seen = {zero}
    queue = deque([zero])
    while queue:
        a = queue.popleft()
        for g in gens:
            b = add(a, g, moduli)
            if b not in seen:
                seen.add(b)
                check_cap(len(seen), limit, "size of a subgroup")
                queue.append(b)
    return sorted(seen)


class Homomorphism(BaseModel):
    """π_pq: A_q → A_p for p < q, as an integer matrix with one row per
    coordinate of A_p's ambient group."""

    lower: str
    upper: str
    matrix: List[List[int]]

    def apply(self, b: Sequence[int], moduli: Sequence[int]) -> Vector:
        return tuple(
            sum(c * x for c, x in zip(row, b)) % k for row, k in zip(self.matrix, moduli)
        )


def _compose_matrices(outer: List[List[int]], inner: List[List[int]]) -> List[List[int]]:
    cols = len(inner[0]) if inner else 0
    return [
        [sum(outer[i][j] * inner[j][c] for j in range(len(inner))) for c in range(cols)]
        for i in range(len(outer))
    ]


class InvSystem(BaseModel):
    """(A_p, π_pq: p < q ∈ P) with each A_p a subgroup of `groups[p]`.

    Subgroups are given by generators (all of the ambient group when
    omitted). Maps may be declared for covering pairs only; the others are
    composed along paths.
    """

    index: FinitePoset
    groups: Dict[str, AbGroup]
    generators: Dict[str, List[List[int]]] = {}
    maps: List[Homomorphism] = []
    require_directed: bool = True

    _maps: Dict[Tuple[str, str], List[List[int]]] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def shapes_fit(self):
        known = set(self.index.elems)
        if set(self.groups) != known:
            raise ValueError(f"Groups are declared for {sorted(self.groups)}, not {sorted(known)}")
        if not nx.is_directed_acyclic_graph(self.index.graph()):
            raise ValueError("The index order has a cycle")
        for p, gens in self.generators.items():
            if p not in known:
                raise ValueError(f"Generators for unknown index {p}")
            for g in gens:
                if len(g) != self.groups[p].dim:
                    raise ValueError(f"Generator {g} does not fit {self.groups[p]}")
        for h in self.maps:
            if h.lower not in known or h.upper not in known:
                raise ValueError(f"Map {h.lower} <- {h.upper} mentions an unknown index")
            if not (h.lower != h.upper and self.index.leq(h.lower, h.upper)):
                raise ValueError(f"Map {h.lower} <- {h.upper} is not along the order")
            if len(h.matrix) != self.groups[h.lower].dim or any(
                len(row) != self.groups[h.upper].dim for row in h.matrix
            ):
                raise ValueError(f"Map {h.lower} <- {h.upper} has the wrong shape")
        return self

    def model_post_init(self, __context: Any):
        declared = {(h.lower, h.upper): h.matrix for h in self.maps}
        graph = nx.DiGraph()
        graph.add_nodes_from(self.index.elems)
        graph.add_edges_from((q, p) for p, q in declared)
        for q in self.index.elems:
            for p in self.index.strictly_below(q):
                if (p, q) in declared:
                    self._maps[(p, q)] = declared[(p, q)]
                    continue
                if not nx.has_path(graph, q, p):
                    raise ValueError(f"No map from {q} down to {p}")
                path = nx.shortest_path(graph, q, p)
                matrix = declared[(path[1], path[0])]
                for a, b in zip(path[1:], path[2:]):
                    matrix = _compose_matrices(declared[(b, a)], matrix)
                self._maps[(p, q)] = matrix

    def above(self, p: str) -> List[str]:
        return [q for q in self.index.elems if q != p and self.index.leq(p, q)]

    def project(self, p: str, q: str, b: Sequence[int], zk: int) -> Vector:
        matrix = self._maps[(p, q)]
        moduli = self.groups[p].moduli(zk)
        return tuple(sum(c * x for c, x in zip(row, b)) % k for row, k in zip(matrix, moduli))

    def elements(self, p: str, zk: int, limit: int) -> List[Vector]:
        moduli = self.groups[p].moduli(zk)
        if p in self.generators:
            return closure(self.generators[p], moduli, limit)
        check_cap(math.prod(moduli), limit, f"size of the group at {p}")
        return [tuple(a) for a in itertools.product(*[range(k) for k in moduli])]

    def diagnostics(self, zk: int, limit: int) -> List[str]:
        """Failures of well-definedness, commutation, image and
        directedness conditions; empty when the system is sound."""
        errors = []
        elems = {p: self.elements(p, zk, limit) for p in self.index.elems}
        members = {p: set(v) for p, v in elems.items()}
        for (p, q), matrix in sorted(self._maps.items()):
            source, target = self.groups[q].moduli(zk), self.groups[p].moduli(zk)
            for i, k in enumerate(source):
                for j, kk in enumerate(target):
                    if (matrix[j][i] * k) % kk:
                        errors.append(f"map {p} <- {q} is not well defined on coordinate {i}")
            for b in elems[q]:
                if self.project(p, q, b, zk) not in members[p]:
                    errors.append(f"map {p} <- {q} sends {b} outside A_{p}")
                    break
        for r in self.index.elems:
            for q in self.index.strictly_below(r):
                for p in self.index.strictly_below(q):
                    for c in elems[r]:
                        direct = self.project(p, r, c, zk)
                        via = self.project(p, q, self.project(q, r, c, zk), zk)
                        if direct != via:
                            errors.append(f"maps do not commute on {p} < {q} < {r}")
                            break
        if self.require_directed:
            for p, q in itertools.combinations(self.index.elems, 2):
                if not any(self.index.leq(p, r) and self.index.leq(q, r) for r in self.index.elems):
                    errors.append(f"{p} and {q} have no common upper bound")
        return errors


@use_caps
def rank_table(sys: InvSystem, *, caps: Caps = None) -> Dict[str, Dict[Vector, Ordinal]]:
    """rnk^𝐀 of every element of every A_p.

    R_0(p) = A_p and R_{k+1}(p) keeps the a ∈ R_k(p) which, for every q > p,
    are images of some b ∈ R_k(q). Elements dropped at step k have rank k;
    the fixpoint has rank ∞.

    Raises:
        ValueError: if the system fails its own diagnostics.
    """
    errors = sys.diagnostics(caps.zk, caps.build)
    if errors:
        raise ValueError(f"Invalid inverse system: {errors[0]}")
    alive = {p: set(sys.elements(p, caps.zk, caps.build)) for p in sys.index.elems}
    ranks: Dict[str, Dict[Vector, Ordinal]] = {p: {} for p in sys.index.elems}
    level = 0
    while True:
        new = {}
        for p in sys.index.elems:
            keep = set(alive[p])
            for q in sys.above(p):
                keep &= {sys.project(p, q, b, caps.zk) for b in alive[q]}
            new[p] = keep
        if new == alive:
            break
        for p in sys.index.elems:
            for a in alive[p] - new[p]:
                ranks[p][a] = Fin(level)
        alive = new
        level += 1
        log.debug(f"rank fixpoint: level {level}, {sum(len(v) for v in alive.values())} alive")
    for p in sys.index.elems:
        for a in alive[p]:
            ranks[p][a] = Infty
    return ranks


@use_caps
def rank(sys: InvSystem, p: str, a: Sequence[int], *, caps: Caps = None) -> Ordinal:
    """rnk^𝐀(a) for a ∈ A_p.

    Raises:
        ValueError: if p is unknown or a is not in A_p.
    """
    if p not in sys.groups:
        raise ValueError(f"Unknown index {p}")
    table = rank_table(sys, caps=caps)
    a = tuple(a)
    if a not in table[p]:
        raise ValueError(f"{a} is not an element of A_{p}")
    return table[p][a]


@use_caps
def system_rank(sys: InvSystem, *, caps: Caps = None) -> Ordinal:
    """rnk(𝐀): the least ordinal above every finite element rank."""
    finite = [r.value for table in rank_table(sys, caps=caps).values() for r in table.values() if r.is_finite]
    return Fin(max(finite) + 1) if finite else Fin(0)


@use_caps
def zk_stability(sys: InvSystem, *, caps: Caps = None) -> List[str]:
    """Elements whose rank changes when the Z stand-in Z_zk is replaced by
    Z_{2zk}; an empty list means the stand-in was large enough."""
    small = rank_table(sys, caps=caps)
    large = rank_table(sys, caps=caps.doubled_zk())
    changed = []
    for p, table in small.items():
        for a, r in sorted(table.items()):
            if a in large[p] and large[p][a] != r:
                changed.append(f"{p}:{a} has rank {r} at zk={caps.zk} but {large[p][a]} at {2 * caps.zk}")
    return changed


class CbarSystem(InvSystem):
    """A system of subgroups A_p ≤ ∏_{i ∈ supports[p]} C_i whose maps are
    restrictions of coordinates."""

    components: List[int]
    supports: Dict[str, List[int]]

    @model_validator(mode="before")
    @classmethod
    def restriction_maps(cls, data):
        if not isinstance(data, dict):
            return data
        components, supports = data["components"], data["supports"]
        index = data["index"]
        if isinstance(index, dict):
            index = FinitePoset(**index)
        if set(supports) != set(index.elems):
            raise ValueError(f"Supports are declared for {sorted(supports)}, not {sorted(index.elems)}")
        data = dict(data)
        data["groups"] = {p: AbGroup(orders=[components[i] for i in supports[p]]) for p in supports}
        if not data.get("maps"):
            maps = []
            for q in index.elems:
                for p in index.strictly_below(q):
                    if not set(supports[p]) <= set(supports[q]):
                        raise ValueError(f"Support of {p} is not inside the support of {q}")
                    matrix = [[int(i == j) for j in supports[q]] for i in supports[p]]
                    maps.append(Homomorphism(lower=p, upper=q, matrix=matrix))
            data["maps"] = maps
        return data


# Tree systems


class TreeElement(BaseModel):
    """An element of A_u, recorded through σ on succ⁺(u). `exceptions` holds
    the finitely many positions (t, s, i) of J_ts where the function differs
    from its eventual value."""

    model_config = ConfigDict(frozen=True)

    u: Tuple[int, ...]
    sigma: Dict[int, int]
    exceptions: Dict[Tuple[int, int, int], int] = {}

    def vector(self) -> Vector:
        return tuple(self.sigma[s] for s in sorted(self.sigma))

    def is_zero(self) -> bool:
        return all(v == 0 for v in self.sigma.values())


class TreeSystem(BaseModel):
    """The symbolic 𝐂̄-system of a finite rooted tree with values in a
    cyclic group C = Z_order (order 0 is the Z stand-in)."""

    parents: List[Optional[int]]
    order: int = 2

    _graph: nx.DiGraph = PrivateAttr(default=None)
    _rank: Dict[int, int] = PrivateAttr(default_factory=dict)

    @field_validator("order")
    @classmethod
    def group_is_nonzero(cls, v):
        if v == 1 or v < 0:
            raise ValueError(f"Invalid value group order {v}: C must be a nonzero cyclic group")
        return v

    @model_validator(mode="after")
    def is_rooted_tree(self):
        n = len(self.parents)
        if n == 0:
            raise ValueError("The tree is empty")
        graph = nx.DiGraph()
        graph.add_nodes_from(range(n))
        for child, parent in enumerate(self.parents):
            if parent is not None:
                if not 0 <= parent < n:
                    raise ValueError(f"Invalid parent {parent} of node {child}")
                graph.add_edge(parent, child)
        if not nx.is_arborescence(graph):
            raise ValueError("The parent array is not a rooted tree")
        return self

    def model_post_init(self, __context: Any):
        self._graph = nx.DiGraph()
        self._graph.add_nodes_from(range(len(self.parents)))
        self._graph.add_edges_from((p, c) for c, p in enumerate(self.parents) if p is not None)
        for t in nx.dfs_postorder_nodes(self._graph, self.root):
            self._rank[t] = max((self._rank[c] + 1 for c in self.children(t)), default=0)

    @property
    def root(self) -> int:
        return self.parents.index(None)

    @property
    def nodes(self) -> List[int]:
        return list(range(len(self.parents)))

    def children(self, t: int) -> List[int]:
        return sorted(self._graph.successors(t))

    def rank_of(self, t: int) -> int:
        """Foundation rank: 0 at leaves, else one more than the largest
        child rank."""
        return self._rank[t]

    def modulus(self, zk: int) -> int:
        return self.order if self.order > 0 else zk

    def is_subtree(self, u: Iterable[int]) -> bool:
        u = set(u)
        return bool(u) and self.root in u and all(
            self.parents[t] in u for t in u if t != self.root
        )

    def succ_plus(self, u: Iterable[int]) -> Tuple[int, ...]:
        out = set(u)
        for t in u:
            out.update(self.children(t))
        return tuple(sorted(out))

    def subtrees(self, limit: int) -> List[Tuple[int, ...]]:
        """All nonempty finite downward-closed sets, smallest first."""
        start = (self.root,)
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for s in self.succ_plus(u):
                if s not in u:
                    v = tuple(sorted(u + (s,)))
                    if v not in seen:
                        seen.add(v)
                        check_cap(len(seen), limit, "number of subtrees")
                        queue.append(v)
        return sorted(seen, key=lambda v: (len(v), v))

    def satisfies_sums(self, u: Sequence[int], sigma: Dict[int, int], zk: int) -> bool:
        k = self.modulus(zk)
        return all(
            sum(sigma.get(s, 0) for s in (t, *self.children(t))) % k == 0 for t in u
        )

    def element(self, u: Sequence[int], sigma: Dict[int, int], zk: int, exceptions: Optional[Dict] = None) -> TreeElement:
        u = tuple(sorted(u))
        if not self.is_subtree(u):
            raise ValueError(f"{u} is not a nonempty downward-closed set")
        k = self.modulus(zk)
        full = {s: sigma.get(s, 0) % k for s in self.succ_plus(u)}
        extra = set(sigma) - set(full)
        if extra:
            raise ValueError(f"σ is defined outside succ+({u}) at {sorted(extra)}")
        if not self.satisfies_sums(u, full, zk):
            raise ValueError(f"σ = {full} violates the sum condition on {u}")
        return TreeElement(u=u, sigma=full, exceptions=exceptions or {})

    def elements(self, u: Sequence[int], zk: int, limit: int) -> List[TreeElement]:
        u = tuple(sorted(u))
        coords = self.succ_plus(u)
        k = self.modulus(zk)
        check_cap(k ** len(coords), limit, f"size of the σ-space over {u}")
        out = []
        for values in itertools.product(range(k), repeat=len(coords)):
            sigma = dict(zip(coords, values))
            if self.satisfies_sums(u, sigma, zk):
                out.append(TreeElement(u=u, sigma=sigma))
        return out

    def restrict(self, f: TreeElement, u: Sequence[int]) -> TreeElement:
        u = tuple(sorted(u))
        if not set(u) <= set(f.u):
            raise ValueError(f"{u} is not below {f.u}")
        coords = set(self.succ_plus(u))
        return TreeElement(
            u=u,
            sigma={s: v for s, v in f.sigma.items() if s in coords},
            exceptions={key: v for key, v in f.exceptions.items() if key[0] in u},
        )


def build_tree_system(parents: Sequence[Optional[int]], order: int = 2) -> TreeSystem:
    """Raises ValueError (pydantic's ValidationError) when C is zero or the
    parent array is not a rooted tree."""
    return TreeSystem(parents=list(parents), order=order)


def strongness(ts: TreeSystem, f: TreeElement) -> Ordinal:
    """The largest α such that f is α-strong."""
    ranks = [ts.rank_of(s) for s, v in f.sigma.items() if v != 0]
    return Fin(min(ranks)) if ranks else Infty


def is_alpha_strong(ts: TreeSystem, u: Sequence[int], f: TreeElement, alpha: Ordinal) -> bool:
    if tuple(sorted(u)) != f.u:
        raise ValueError(f"{f} is not an element of A_{tuple(u)}")
    return all(Fin(ts.rank_of(s)) >= alpha for s, v in f.sigma.items() if v != 0)


def extend_strong(
    ts: TreeSystem, u: Sequence[int], s: int, f: TreeElement, alpha: Ordinal, zk: int = DEFAULT_ZK
) -> TreeElement:
    """Extend an (α+1)-strong f ∈ A_u to an α-strong g ∈ A_{u ∪ {s}}.

    If σ_f(s) ≠ 0 the value -σ_f(s) is routed through the first child t of
    s with rnk^T(t) ≥ α.

    Raises:
        ValueError: if s does not cover u, or f is not (α+1)-strong so that
            no child of s can carry σ_f(s).
    """
    u = tuple(sorted(u))
    if s in u or s not in ts.succ_plus(u):
        raise ValueError(f"{s} is not an immediate successor of {u}")
    if not is_alpha_strong(ts, u, f, alpha.successor()):
        raise ValueError(f"{f.sigma} is not {alpha.successor()}-strong")
    k = ts.modulus(zk)
    sigma = dict(f.sigma)
    sigma.update({t: 0 for t in ts.children(s)})
    if f.sigma[s] != 0:
        carriers = [t for t in ts.children(s) if Fin(ts.rank_of(t)) >= alpha]
        if not carriers:
            raise ValueError(f"No child of {s} has rank at least {alpha}")
        sigma[carriers[0]] = (-f.sigma[s]) % k
    g = ts.element(u + (s,), sigma, zk, exceptions=dict(f.exceptions))
    if not is_alpha_strong(ts, g.u, g, alpha):
        raise InvariantViolation(f"Extension {g.sigma} of {f.sigma} is not {alpha}-strong")
    return g


def finishing_element(ts: TreeSystem, a: int, s: Optional[int] = None, zk: int = DEFAULT_ZK) -> TreeElement:
    """f ∈ A_{root} with σ_f(root) = a, σ_f(s) = -a and 0 elsewhere, where s
    defaults to the child of the root of largest rank."""
    kids = ts.children(ts.root)
    if not kids:
        raise ValueError("The root has no children")
    if s is None:
        s = max(kids, key=lambda t: (ts.rank_of(t), -t))
    if s not in kids:
        raise ValueError(f"{s} is not a child of the root")
    k = ts.modulus(zk)
    return ts.element((ts.root,), {ts.root: a % k, s: (-a) % k}, zk)


def subtree_name(u: Sequence[int]) -> str:
    return "{" + ",".join(str(t) for t in sorted(u)) + "}"


@use_caps
def materialize(ts: TreeSystem, *, caps: Caps = None) -> CbarSystem:
    """The tree system as a finite inverse system over its subtrees ordered
    by inclusion, with coordinates indexed by tree nodes."""
    subtrees = ts.subtrees(caps.build)
    names = [subtree_name(u) for u in subtrees]
    le = [
        (subtree_name(u), subtree_name(v))
        for u in subtrees
        for v in subtrees
        if len(v) == len(u) + 1 and set(u) < set(v)
    ]
    gens = {
        subtree_name(u): [list(f.vector()) for f in ts.elements(u, caps.zk, caps.build)]
        for u in subtrees
    }
    return CbarSystem(
        index=FinitePoset(elems=names, le=le),
        components=[ts.order] * len(ts.parents),
        supports={subtree_name(u): list(ts.succ_plus(u)) for u in subtrees},
        generators=gens,
    )


@dataclass
class TreeRankReport:
    strongness: Ordinal
    rank: Ordinal

    @property
    def rank_below_strongness(self) -> bool:
        return self.rank <= self.strongness


@use_caps
def tree_rank_correspondence(
    ts: TreeSystem, u: Sequence[int], f: TreeElement, *, caps: Caps = None
) -> TreeRankReport:
    """Strongness of f next to its rank in the materialized system."""
    sys = materialize(ts, caps=caps)
    r = rank(sys, subtree_name(u), f.vector(), caps=caps)
    return TreeRankReport(strongness=strongness(ts, f), rank=r)


def block_orders(orders: Sequence[int], blocks: Sequence[Sequence[int]]) -> List[int]:
    """|D_n| for the diagonal groups; 0 when some C_i in the block is Z."""
    out = []
    for block in blocks:
        ks = [orders[i] for i in block]
        out.append(0 if 0 in ks else math.lcm(*ks))
    return out


def embed_block_word(
    orders: Sequence[int], blocks: Sequence[Sequence[int]], support: Sequence[int], word: Sequence[int], zk: int
) -> Vector:
    """Send (m_n: n ∈ J) to a ∈ ∏_{i ∈ I_J} C_i with a↾K_n = m_n·(1, ..., 1)."""
    value = {}
    for n, m in zip(support, word):
        for i in blocks[n]:
            value[i] = m % (orders[i] if orders[i] > 0 else zk)
    return tuple(value[i] for i in sorted(value))


@use_caps
def cyclic_composition(
    orders: Sequence[int],
    blocks: Sequence[Sequence[int]],
    B: CbarSystem,
    *,
    caps: Caps = None,
) -> CbarSystem:
    """The (C_i)-system with A_{I_J} = {a : a↾K_n ∈ D_n, (a↾K_n)_n ∈ B_J},
    I_J = ∪_{n ∈ J} K_n.

    Raises:
        ValueError: if blocks overlap, or B's components are not the orders
            of the diagonal groups D_n.
    """
    flat = [i for block in blocks for i in block]
    if len(set(flat)) != len(flat):
        raise ValueError("Blocks are not disjoint")
    if any(not 0 <= i < len(orders) for i in flat):
        raise ValueError("A block mentions an unknown coordinate")
    expected = block_orders(orders, blocks)
    if list(B.components) != expected:
        raise ValueError(f"B is over groups of orders {B.components}, but the blocks generate {expected}")
    supports = {J: sorted(i for n in B.supports[J] for i in blocks[n]) for J in B.index.elems}
    generators = {
        J: [
            list(embed_block_word(orders, blocks, B.supports[J], word, caps.zk))
            for word in B.elements(J, caps.zk, caps.build)
        ]
        for J in B.index.elems
    }
    return CbarSystem(
        index=B.index,
        components=list(orders),
        supports=supports,
        generators=generators,
        require_directed=B.require_directed,
    )
