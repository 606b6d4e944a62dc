"""The invariant suite behind `scottrank verify`.

Every check draws its random instances from one seeded `random.Random`, so a
report is reproducible from its seed. `quick=True` shrinks the sweeps.
"""
from typing import List, Dict, Optional, Callable, Sequence
from dataclasses import dataclass, field
import itertools
import logging
import random

from scottrank.backforth import (
    bf_level,
    bf_table,
    expand_constants,
    expand_sorts,
    find_finite_base,
    is_base,
    scott_rank,
)
from scottrank.base import FiniteStructure, Signature, orbit_partition
from scottrank.configs import Caps, use_caps
from scottrank.cosetsystems import (
    base_system,
    is_coherent,
    limit,
    rank_is_stable,
    rnk_coset,
    set_rank_bruteforce,
    singleton_ranks,
    successor,
    tau,
)
from scottrank.invsystems import (
    AbGroup,
    Homomorphism,
    InvSystem,
    build_tree_system,
    extend_strong,
    is_alpha_strong,
    materialize,
    rank_table,
    strongness,
    subtree_name,
    zk_stability,
)
from scottrank.posets import (
    AntichainTail,
    FinitePoset,
    PosetPresentation,
    agreement_classes,
    benchmark,
    benchmark_witness,
    build_truncated_model,
    is_nearly_binary_crosscutting,
    nbc_base,
)
from scottrank.products import (
    BorelVerdict,
    GadgetFactor,
    GadgetFamily,
    GadgetSpec,
    borel_verdict,
    build_rank_gadget,
    cyclic_orders,
    gadget_diagnostics,
    gadget_measurements,
    is_monotone,
    pure_sets,
    two_class_factors,
)
from scottrank.reductions import (
    all_colorings,
    colored_isomorphic,
    decode_delta,
    decode_subposet,
    exhaustive_pairs,
    iso_harness,
    reduce_delta,
    reduce_subposet,
)
from scottrank.values import Fin, Ordinal

log = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    instances: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def fail(self, msg: str):
        self.failures.append(msg)

    def query_dict(self) -> Dict:
        return {"name": self.name, "ok": self.ok, "instances": self.instances, "failures": self.failures}


CHECKS: Dict[str, Callable] = {}


def register(name: str):
    def decorator(func):
        CHECKS[name] = func
        return func

    return decorator


def random_structure(rng: random.Random, size: int, density: float = 0.3) -> FiniteStructure:
    """One binary relation R and one unary relation P."""
    return FiniteStructure(
        signature=Signature(relations=[("R", 2), ("P", 1)]),
        universe=size,
        interp={
            "R": [(a, b) for a in range(size) for b in range(size) if rng.random() < density],
            "P": [(a,) for a in range(size) if rng.random() < 0.5],
        },
    )


def random_equivalence_structure(rng: random.Random, size: int) -> FiniteStructure:
    labels = [rng.randrange(size) for _ in range(size)]
    return FiniteStructure(
        signature=Signature(relations=[("E", 2), ("P", 1)]),
        universe=size,
        interp={
            "E": [(a, b) for a in range(size) for b in range(size) if labels[a] == labels[b]],
            "P": [(a,) for a in range(size) if rng.random() < 0.5],
        },
    )


def random_finite_poset(rng: random.Random, size: int) -> FinitePoset:
    elems = [f"x{i}" for i in range(size)]
    le = [(a, b) for a, b in itertools.combinations(elems, 2) if rng.random() < 0.4]
    return FinitePoset(elems=elems, le=le, delta={p: rng.choice((2, 3)) for p in elems})


def rooted_trees(max_nodes: int) -> List[List[Optional[int]]]:
    """Parent arrays with parents[i] < i, covering every rooted tree shape."""
    out = []
    for n in range(1, max_nodes + 1):
        for parents in itertools.product(*[range(i) for i in range(1, n)]):
            out.append([None, *parents])
    return out


@register("orbit-oracle")
def check_orbit_oracle(rng: random.Random, quick: bool, caps: Caps) -> CheckResult:
    """≡_∞ on tuples coincides with lying in one Aut-orbit."""
    result = CheckResult("orbit-oracle")
    count, max_len = (30, 2) if quick else (200, 3)
    for _ in range(count):
        M = random_structure(rng, rng.randint(1, 5))
        table = bf_table(M, M, caps=caps)
        result.instances += 1
        for k in range(1, max_len + 1):
            block_of = {}
            for i, block in enumerate(orbit_partition(M, k, caps=caps)):
                block_of.update({tup: i for tup in block})
            for left, right in itertools.product(block_of, repeat=2):
                if table.equivalent(left, right) != (block_of[left] == block_of[right]):
                    result.fail(f"{M.query_dict()}: {left} vs {right}")
                    break
    return result


@register("classifications")
def check_classifications(rng: random.Random, quick: bool, caps: Caps) -> CheckResult:
    result = CheckResult("classifications")
    expected = [
        ("T2", pure_sets(2), BorelVerdict.BOREL),
        ("T3", pure_sets(3), BorelVerdict.NONBOREL),
        ("cyclic orders", cyclic_orders(3), BorelVerdict.BOREL),
        ("two-class factors", two_class_factors(), BorelVerdict.NONBOREL),
    ]
    for name, spec, verdict in expected:
        result.instances += 1
        got = borel_verdict(spec, caps=caps)
        if got != verdict:
            result.fail(f"{name}: {got.value}, expected {verdict.value}")
    for i in range(4):
        result.instances += 1
        P = benchmark(i)
        witness = benchmark_witness(P, errors="ignore")
        if is_nearly_binary_crosscutting(P) or witness is None or witness.index != i:
            result.fail(f"benchmark {i} is misclassified")
    result.instances += 1
    P = PosetPresentation(
        finite=FinitePoset(elems=["a", "b"], le=[("a", "b")], delta={"a": 2, "b": 3}),
        tails=[AntichainTail(delta=2, above=["a"])],
    )
    if not is_nearly_binary_crosscutting(P):
        result.fail("finite part plus a binary antichain is not nearly binary crosscutting")
    return result


def successor_ladder(n: int, m: int, times: int):
    C = base_system(n, m)
    ladder = [C]
    for _ in range(times):
        C = successor(C)
        ladder.append(C)
    return ladder


@register("coset-ladder")
def check_coset_ladder(rng: random.Random, quick: bool, caps: Caps) -> CheckResult:
    result = CheckResult("coset-ladder")
    ladder = successor_ladder(2, 1, 2 if quick else 3)
    for k, C in enumerate(ladder):
        result.instances += 1
        got = rnk_coset(C, caps=caps)
        if got != Fin(k + 1):
            result.fail(f"{k}-fold successor has rnk(∅) = {got}, expected {k + 1}")
        if set_rank_bruteforce(C, caps=caps) != got:
            result.fail(f"{k}-fold successor: set recursion disagrees with singleton ranks")

    for C in ladder[: 1 if quick else 2]:
        ranks = singleton_ranks(C, caps=caps)
        for A in itertools.combinations(C.pairs(), 2):
            if not is_coherent(A, C.n, C.m):
                continue
            result.instances += 1
            if set_rank_bruteforce(C, A, caps=caps) != min(ranks[x] for x in A):
                result.fail(f"rnk of {A} in the ({C.n}, {C.m}) system is not the least singleton rank")

    L = limit(successor_ladder(2, 2, 1), caps=caps)
    D = L.system
    ranks = singleton_ranks(D, caps=caps)
    for (f, g), r in sorted(ranks.items()):
        result.instances += 1
        if tau(L, f, g, caps=caps) != r:
            result.fail(f"τ differs from the singleton rank at ({f}, {g})")
            break
    if rnk_coset(D, caps=caps) != Fin(2):
        result.fail(f"limit has rnk(∅) = {rnk_coset(D, caps=caps)}, expected 2")
    return result


@register("tree-strongness")
def check_tree_strongness(rng: random.Random, quick: bool, caps: Caps) -> CheckResult:
    """rank ≤ strongness on every element, and (α+1)-strong elements extend
    to α-strong ones across every covering subtree."""
    result = CheckResult("tree-strongness")
    for parents in rooted_trees(4 if quick else 6):
        for order in (2, 3):
            ts = build_tree_system(parents, order)
            ranks = rank_table(materialize(ts, caps=caps), caps=caps)
            height = ts.rank_of(ts.root)
            for u in ts.subtrees(caps.build):
                for f in ts.elements(u, caps.zk, caps.build):
                    result.instances += 1
                    r = ranks[subtree_name(u)][f.vector()]
                    if not r <= strongness(ts, f):
                        result.fail(f"{parents} C{order}: rank {r} above strongness at {f.sigma}")
                    for s in ts.succ_plus(u):
                        if s in u:
                            continue
                        for alpha in range(height + 1):
                            if not is_alpha_strong(ts, u, f, Fin(alpha + 1)):
                                continue
                            try:
                                extend_strong(ts, u, s, f, Fin(alpha), zk=caps.zk)
                            except (ValueError, AssertionError) as exc:
                                result.fail(f"{parents} C{order}: {exc}")
    return result


def _reduction_instances(quick: bool):
    point = FinitePoset(elems=["a"], delta={"a": 2})
    antichain = FinitePoset(elems=["a", "b"], delta={"a": 2, "b": 2})
    yield point, PosetPresentation(finite=point, tails=[AntichainTail(delta=2)])
    yield antichain, PosetPresentation(finite=antichain, tails=[AntichainTail(delta=2)])


@register("reductions")
def check_reductions(rng: random.Random, quick: bool, caps: Caps) -> CheckResult:
    result = CheckResult("reductions")
    caps = caps.model_copy(update={"margin": 1})
    for Q, P in _reduction_instances(quick):
        models = all_colorings(Q, 3)
        pairs = exhaustive_pairs(models)
        if quick and len(pairs) > 200:
            pairs = rng.sample(pairs, 200)
        raised = {p: 3 for p in Q.elems}
        maps = {
            "subposet": lambda M: reduce_subposet(M, P, caps=caps),
            "delta": lambda M: reduce_delta(M, raised, caps=caps),
        }
        for name, reduction in maps.items():
            report = iso_harness(reduction, pairs, caps=caps)
            result.instances += report.pairs
            for bad in report.counterexamples:
                result.fail(f"{name} over {Q.elems}: {bad}")
        for M in models:
            result.instances += 1
            back = decode_subposet(reduce_subposet(M, P, caps=caps), Q.elems)
            if not colored_isomorphic(M, back, caps=caps):
                result.fail(f"decode_subposet does not recover {M.colors}")
            back = decode_delta(reduce_delta(M, raised, caps=caps), Q.delta)
            if not colored_isomorphic(M, back, caps=caps):
                result.fail(f"decode_delta does not recover {M.colors}")
    return result


def two_factor_gadgets() -> List[GadgetSpec]:
    """Every 2-factor gadget on 3-element sets with at most two index sets."""
    factors = [GadgetFactor(n=n, o=0, g=[0, 2, 1], d=1) for n in (0, 1)]
    subgroups = {
        1: [[], [[1]]],
        2: [[], [[1, 0]], [[0, 1]], [[1, 1]], [[1, 0], [0, 1]]],
    }
    gadgets = []
    for chain in ([[0, 1]], [[0], [0, 1]], [[1], [0, 1]]):
        for gens in itertools.product(*[subgroups[len(I)] for I in chain]):
            families = [GadgetFamily(I=I, generators=g) for I, g in zip(chain, gens)]
            gadgets.append(GadgetSpec(factors=factors, families=families))
    return gadgets


@register("gadget-monotonicity")
def check_gadget_monotonicity(rng: random.Random, quick: bool, caps: Caps) -> CheckResult:
    result = CheckResult("gadget-monotonicity")
    spec = pure_sets(3)
    for gadget in two_factor_gadgets():
        if gadget_diagnostics(spec, gadget, 2):
            continue
        try:
            rg = build_rank_gadget(spec, gadget, 2, caps=caps)
        except ValueError:
            # families whose restrictions leave the smaller subgroups
            continue
        result.instances += 1
        ms = gadget_measurements(rg, caps=caps)
        if not is_monotone(ms):
            result.fail(f"{gadget.model_dump()}: levels are not monotone in rank")
        for m in ms:
            for k in range(3):
                if m.rank >= Fin(k) and (m.level is None or m.level < Fin(k)):
                    result.fail(f"{gadget.model_dump()}: rank {m.rank} but level {m.level} at {m.a}")
    return result


@register("expansions")
def check_expansions(rng: random.Random, quick: bool, caps: Caps) -> CheckResult:
    result = CheckResult("expansions")
    count = 20 if quick else 100
    wide = caps.for_builds()
    for _ in range(count):
        M = random_structure(rng, rng.randint(2, 4))
        N = M if rng.random() < 0.3 else random_structure(rng, rng.randint(2, 4))
        length = rng.randint(1, 2)
        c = tuple(rng.randrange(M.universe) for _ in range(length))
        d = tuple(rng.randrange(N.universe) for _ in range(length))
        a, b = (rng.randrange(M.universe),), (rng.randrange(N.universe),)
        Mc, Nd = expand_constants(M, c), expand_constants(N, d)
        result.instances += 1
        if bf_level(M, c + a, N, d + b, caps=caps) != bf_level(Mc, a, Nd, b, caps=caps):
            result.fail(f"constant expansion changes the level of {a}, {b} over {c}, {d}")
        if scott_rank(Mc, caps=caps) > scott_rank(M, caps=caps):
            result.fail(f"naming {c} raises the Scott rank")

    for _ in range(count):
        M = random_equivalence_structure(rng, rng.randint(2, 4))
        S = expand_sorts(M, ["E"]).structure
        a, b = (rng.randrange(M.universe),), (rng.randrange(M.universe),)
        result.instances += 1
        if bf_level(M, a, M, b, caps=wide) != bf_level(S, a, S, b, caps=wide):
            result.fail(f"sorted expansion changes the level of {a}, {b}")

    for _ in range(count):
        M = random_structure(rng, rng.randint(1, 5))
        B = find_finite_base(M, M.universe, caps=caps)
        result.instances += 1
        if B is None or not is_base(M, B, caps=caps):
            result.fail(f"find_finite_base returned {B}, which is not a base")

    for _ in range(count):
        poset = random_finite_poset(rng, rng.randint(1, 3))
        Q = poset.downward_closure(rng.sample(poset.elems, rng.randint(1, len(poset.elems))))
        model = build_truncated_model(poset, caps=caps)
        base = nbc_base(model, Q)
        pos = {p: i for i, p in enumerate(poset.elems)}
        blocks = agreement_classes(model.points, sorted(pos[q] for q in Q))
        hit = {i for i, block in enumerate(blocks) for x in base if x in block}
        result.instances += 1
        if len(base) != len(blocks) or len(hit) != len(blocks):
            result.fail(f"nbc base {base} does not pick one point per E_Q-class of {Q}")
    return result


def z_doubling_chain() -> InvSystem:
    """Z ← Z ← Z along a 3-chain, each map multiplication by 2."""
    index = FinitePoset(elems=["p", "q", "r"], le=[("p", "q"), ("q", "r")])
    return InvSystem(
        index=index,
        groups={p: AbGroup(orders=[0]) for p in index.elems},
        maps=[
            Homomorphism(lower="p", upper="q", matrix=[[2]]),
            Homomorphism(lower="q", upper="r", matrix=[[2]]),
        ],
    )


@register("stability")
def check_stability(rng: random.Random, quick: bool, caps: Caps) -> CheckResult:
    result = CheckResult("stability")
    systems = successor_ladder(2, 1, 1 if quick else 2) + successor_ladder(2, 2, 1)
    for C in systems:
        result.instances += 1
        if not rank_is_stable(C, caps=caps):
            result.fail(f"rnk(∅) of a ({C.n}, {C.m}) system moves when n grows")
    result.instances += 1
    for msg in zk_stability(z_doubling_chain(), caps=caps):
        result.fail(msg)
    return result


@use_caps
def run_checks(
    names: Optional[Sequence[str]] = None,
    quick: bool = False,
    seed: int = 0,
    *,
    caps: Caps = None,
) -> List[CheckResult]:
    """Run the named checks (all by default) in registration order."""
    names = list(CHECKS) if names is None else list(names)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise ValueError(f"Unknown checks {unknown}")
    results = []
    for name in names:
        rng = random.Random(f"{seed}:{name}")
        log.info(f"running check {name}")
        results.append(CHECKS[name](rng, quick, caps))
    return results
