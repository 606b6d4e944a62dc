"""Reductions between colored models of refining equivalence relations.

A colored model is a set of points (functions on a finite poset, listed in
`poset.elems` order) carrying the canonical relations E_p and a coloring by
natural numbers. The maps here move such models between posets: enlarging
the index poset, or raising δ. Both come with a recovery step, and
`iso_harness` checks by brute force that isomorphism is preserved and
reflected.
"""
from typing import List, Dict, Optional, Union, Tuple, Sequence, Callable, Any
from dataclasses import dataclass, field
import itertools
import logging

from pydantic import BaseModel, field_validator, model_validator

from scottrank.base import FiniteStructure, Signature, isomorphic
from scottrank.configs import Caps, use_caps
from scottrank.posets import FinitePoset, PosetPresentation, canonical_relations
from scottrank.utils import check_cap, product_size

log = logging.getLogger(__name__)

Point = Tuple[int, ...]


def color_relation(k: int) -> str:
    return f"color{k}"


class ColoredModel(BaseModel):
    poset: FinitePoset
    points: List[Point]
    colors: List[int]

    @field_validator("colors")
    @classmethod
    def colors_are_natural(cls, v):
        if any(c < 0 for c in v):
            raise ValueError(f"Invalid colors {v}: colors are natural numbers")
        return v

    @model_validator(mode="after")
    def coloring_is_total(self):
        if len(self.colors) != len(self.points):
            raise ValueError(f"{len(self.colors)} colors for {len(self.points)} points")
        if len(set(self.points)) != len(self.points):
            raise ValueError("Points repeat")
        bounds = [self.poset.delta[p] for p in self.poset.elems]
        for f in self.points:
            if len(f) != len(bounds) or any(not 0 <= x < k for x, k in zip(f, bounds)):
                raise ValueError(f"Point {f} is not a function below delta on {self.poset.elems}")
        return self

    @property
    def universe(self) -> int:
        return len(self.points)

    @property
    def palette(self) -> int:
        return max(self.colors, default=-1) + 1

    def color_of(self, point: Sequence[int]) -> int:
        return self.colors[self.points.index(tuple(point))]

    def structure(self, palette: Optional[int] = None) -> FiniteStructure:
        """The E_p relations plus one unary predicate per color below
        `palette` (the model's own palette by default)."""
        palette = self.palette if palette is None else palette
        if palette < self.palette:
            raise ValueError(f"Palette {palette} is too small for colors up to {self.palette - 1}")
        relations = canonical_relations(self.poset, self.points)
        colors = {color_relation(k): [] for k in range(palette)}
        for i, c in enumerate(self.colors):
            colors[color_relation(c)].append((i,))
        return FiniteStructure(
            signature=Signature(
                relations=[(name, 2) for name in relations] + [(name, 1) for name in colors]
            ),
            universe=len(self.points),
            interp={**relations, **colors},
        )

    @classmethod
    def from_raw(cls, data: Dict) -> "ColoredModel":
        return cls(
            poset=FinitePoset(**data["poset"]),
            points=[tuple(f) for f in data["points"]],
            colors=data["colors"],
        )

    def query_dict(self) -> Dict:
        return {
            "poset": self.poset.model_dump(),
            "points": [list(f) for f in self.points],
            "colors": list(self.colors),
        }


def full_model(poset: FinitePoset, colors: Optional[Sequence[int]] = None) -> ColoredModel:
    """Every function below δ, in mixed radix order, colored 0 by default."""
    points = list(itertools.product(*[range(poset.delta[p]) for p in poset.elems]))
    return ColoredModel(
        poset=poset,
        points=points,
        colors=list(colors) if colors is not None else [0] * len(points),
    )


@use_caps
def colored_isomorphic(A: ColoredModel, B: ColoredModel, *, caps: Caps = None) -> bool:
    if A.poset.elems != B.poset.elems or A.poset.delta != B.poset.delta:
        raise ValueError("Colored models over different posets")
    if A.universe != B.universe or sorted(A.colors) != sorted(B.colors):
        return False
    palette = max(A.palette, B.palette)
    return isomorphic(A.structure(palette), B.structure(palette), caps=caps.for_builds()) is not None


class SymbolicElement(BaseModel):
    """A function on a presented poset: explicit values on finitely many
    elements and one eventual value per tail. Finite elements without an
    explicit value are 0."""

    exceptions: Dict[str, int] = {}
    templates: Dict[str, int] = {}

    def tail_of(self, p: str, P: PosetPresentation) -> Optional[str]:
        names = {tail.name for tail in P.tails}
        owner = p.split("[")[0].split(".")[0]
        return owner if owner in names else None

    def value(self, p: str, P: PosetPresentation) -> int:
        if p in self.exceptions:
            return self.exceptions[p]
        tail = self.tail_of(p, P)
        return self.templates.get(tail, 0) if tail is not None else 0

    def diagnostics(self, P: PosetPresentation) -> List[str]:
        errors = []
        for tail in P.tails:
            v = self.templates.get(tail.name, 0)
            if not 0 <= v < tail.delta:
                errors.append(f"template {v} on {tail.name} is outside delta {tail.delta}")
        unknown = set(self.templates) - {tail.name for tail in P.tails}
        if unknown:
            errors.append(f"templates for unknown tails {sorted(unknown)}")
        for p, v in self.exceptions.items():
            tail = self.tail_of(p, P)
            if tail is None and p not in P.finite.elems:
                errors.append(f"value at unknown element {p}")
                continue
            bound = P.finite.delta[p] if tail is None else next(t.delta for t in P.tails if t.name == tail)
            if not 0 <= v < bound:
                errors.append(f"value {v} at {p} is outside delta {bound}")
        return errors

    def restrict(self, Q: Sequence[str], P: PosetPresentation) -> Point:
        return tuple(self.value(p, P) for p in Q)

    def finitely_nonzero(self) -> bool:
        """Whether f is nonzero only finitely often, i.e. every tail is
        eventually 0."""
        return all(v == 0 for v in self.templates.values())

    def vanishes_off(self, Q: Sequence[str]) -> bool:
        """Whether f is 0 at every element outside Q."""
        Q = set(Q)
        return self.finitely_nonzero() and all(v == 0 for p, v in self.exceptions.items() if p not in Q)

    def truncate(self, P: PosetPresentation, depth: int) -> Point:
        return self.restrict(P.truncate(depth).elems, P)


# Enlarging the index poset


def _truncation_with_margin(
    P: Union[PosetPresentation, FinitePoset], Q: Sequence[str], margin: int
) -> FinitePoset:
    if isinstance(P, FinitePoset):
        return P
    poset = None
    for depth in range(1, len(Q) + margin + 2):
        poset = P.truncate(depth)
        extra = [p for p in poset.elems if p not in set(Q)]
        if set(Q) <= set(poset.elems) and len(extra) >= margin:
            break
    return poset


@use_caps
def reduce_subposet(
    model: ColoredModel,
    P: Union[PosetPresentation, FinitePoset],
    *,
    caps: Caps = None,
) -> ColoredModel:
    """Move a colored model over Q ⊆ P to one over P.

    The result lives on Q together with the first `caps.margin` further
    elements of a truncation of P and everything below them. Its points are
    the finitely supported f with f↾Q ∈ M and any values on the extra
    elements; f is colored c(f↾Q) + 1 when it vanishes off Q and 0
    otherwise.

    Raises:
        ValueError: if Q is not inside P, or the order or δ of Q disagree
            with P.
    """
    Q = list(model.poset.elems)
    poset = _truncation_with_margin(P, Q, caps.margin)
    missing = [q for q in Q if q not in poset.elems]
    if missing:
        raise ValueError(f"Elements {missing} of Q are not in P")
    for q in Q:
        if poset.delta[q] != model.poset.delta[q]:
            raise ValueError(f"delta({q}) is {model.poset.delta[q]} in Q but {poset.delta[q]} in P")
    for a, b in itertools.permutations(Q, 2):
        if poset.leq(a, b) != model.poset.leq(a, b):
            raise ValueError(f"The order of Q disagrees with P on {a}, {b}")

    first = [p for p in poset.elems if p not in set(Q)][: caps.margin]
    target = poset.restrict(set(Q) | set(poset.downward_closure(first)))
    extra = [p for p in target.elems if p not in set(Q)]
    check_cap(model.universe * product_size(target.delta[p] for p in extra), caps.build, "size of the reduced model")

    presentation = P if isinstance(P, PosetPresentation) else PosetPresentation(finite=P)
    colored = {}
    for f, c in zip(model.points, model.colors):
        for tail in itertools.product(*[range(target.delta[p]) for p in extra]):
            elem = SymbolicElement(exceptions={**dict(zip(Q, f)), **dict(zip(extra, tail))})
            colored[elem.restrict(target.elems, presentation)] = c + 1 if elem.vanishes_off(Q) else 0
    points = sorted(colored)
    log.debug(f"reduced {model.universe} points over {Q} to {len(points)} points over {target.elems}")
    return ColoredModel(poset=target, points=points, colors=[colored[f] for f in points])


def decode_subposet(star: ColoredModel, Q: Sequence[str]) -> ColoredModel:
    """Recover (M, c) from a reduced model: keep the nonzero-colored points,
    restrict them to Q and lower their colors by one.

    Raises:
        ValueError: if no point has a nonzero color, or two of them agree
            on Q.
    """
    unknown = set(Q) - set(star.poset.elems)
    if unknown:
        raise ValueError(f"Elements {sorted(unknown)} are not in the reduced model's poset")
    pos = {p: i for i, p in enumerate(star.poset.elems)}
    Q = [p for p in star.poset.elems if p in set(Q)]
    kept = [(f, c) for f, c in zip(star.points, star.colors) if c != 0]
    if not kept:
        raise ValueError("The model has no nonzero colors")
    restricted = {}
    for f, c in kept:
        g = tuple(f[pos[q]] for q in Q)
        if g in restricted:
            raise ValueError(f"Two colored points restrict to {g} on Q")
        restricted[g] = c - 1
    points = sorted(restricted)
    return ColoredModel(poset=star.poset.restrict(Q), points=points, colors=[restricted[g] for g in points])


# Raising δ


def _support_set(poset: FinitePoset, delta_prime: Dict[str, int], f: Sequence[int]) -> List[str]:
    """I(f): the p with f(q) < δ′(q) for every q ≤ p."""
    pos = {p: i for i, p in enumerate(poset.elems)}
    return [p for p in poset.elems if all(f[pos[q]] < delta_prime[q] for q in poset.below(p))]


@use_caps
def reduce_delta(model: ColoredModel, delta: Dict[str, int], *, caps: Caps = None) -> ColoredModel:
    """Move a colored model with δ′ = `model.poset.delta` to one with the
    larger δ.

    The new points are the f below δ whose restriction to I(f) extends to a
    point of M; f is colored c(f) + 1 when I(f) is everything (so f ∈ M)
    and 0 otherwise.

    Raises:
        ValueError: if δ′ exceeds δ somewhere or δ misses an element.
    """
    poset = model.poset
    delta_prime = poset.delta
    for p in poset.elems:
        if p not in delta:
            raise ValueError(f"delta missing for {p}")
        if delta_prime[p] > delta[p]:
            raise ValueError(f"delta'({p}) = {delta_prime[p]} exceeds delta({p}) = {delta[p]}")
    target = FinitePoset(elems=poset.elems, le=poset.le, delta={p: delta[p] for p in poset.elems})
    check_cap(target.size(), caps.build, "size of the reduced model")
    pos = {p: i for i, p in enumerate(poset.elems)}
    color = dict(zip(model.points, model.colors))

    points, colors = [], []
    for f in itertools.product(*[range(delta[p]) for p in poset.elems]):
        I = _support_set(poset, delta_prime, f)
        if len(I) == len(poset.elems):
            if f in color:
                points.append(f)
                colors.append(color[f] + 1)
            continue
        if any(all(g[pos[p]] == f[pos[p]] for p in I) for g in model.points):
            points.append(f)
            colors.append(0)
    log.debug(f"raised delta: {model.universe} points became {len(points)}")
    return ColoredModel(poset=target, points=points, colors=colors)


def decode_delta(star: ColoredModel, delta_prime: Dict[str, int]) -> ColoredModel:
    """Recover (M, c): the nonzero-colored points, colors lowered by one,
    over the poset with δ′.

    Raises:
        ValueError: if no point has a nonzero color, or a colored point
            leaves δ′.
    """
    poset = star.poset
    source = FinitePoset(elems=poset.elems, le=poset.le, delta={p: delta_prime[p] for p in poset.elems})
    kept = [(f, c - 1) for f, c in zip(star.points, star.colors) if c != 0]
    if not kept:
        raise ValueError("The model has no nonzero colors")
    bounds = [delta_prime[p] for p in poset.elems]
    for f, _ in kept:
        if any(x >= k for x, k in zip(f, bounds)):
            raise ValueError(f"Colored point {f} is not below delta'")
    return ColoredModel(poset=source, points=[f for f, _ in kept], colors=[c for _, c in kept])


# Harness


@dataclass
class HarnessReport:
    pairs: int = 0
    preserved: int = 0
    reflected: int = 0
    counterexamples: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples

    def query_dict(self) -> Dict:
        return {
            "pairs": self.pairs,
            "preserved": self.preserved,
            "reflected": self.reflected,
            "counterexamples": self.counterexamples,
        }


@use_caps
def iso_harness(
    reduction: Callable[[ColoredModel], ColoredModel],
    inputs: Sequence[Tuple[ColoredModel, ColoredModel]],
    *,
    caps: Caps = None,
) -> HarnessReport:
    """Check M ≅ N ⟺ f(M) ≅ f(N) on every pair.

    `preserved` counts pairs where M ≅ N ⟹ f(M) ≅ f(N) holds, `reflected`
    the converse; pairs failing either are listed as counterexamples.
    """
    report = HarnessReport()
    for i, (M, N) in enumerate(inputs):
        before = colored_isomorphic(M, N, caps=caps)
        after = colored_isomorphic(reduction(M), reduction(N), caps=caps)
        report.pairs += 1
        report.preserved += int(after or not before)
        report.reflected += int(before or not after)
        if before != after:
            report.counterexamples.append(
                {"pair": i, "before": before, "after": after, "left": M.colors, "right": N.colors}
            )
    log.debug(f"harness: {report.pairs} pairs, {len(report.counterexamples)} counterexamples")
    return report


def all_colorings(poset: FinitePoset, palette: int) -> List[ColoredModel]:
    """The full model over `poset` under every coloring with colors below
    `palette`."""
    base = full_model(poset)
    return [
        full_model(poset, colors)
        for colors in itertools.product(range(palette), repeat=base.universe)
    ]


def exhaustive_pairs(models: Sequence[ColoredModel]) -> List[Tuple[ColoredModel, ColoredModel]]:
    return list(itertools.combinations_with_replacement(models, 2))
