"""Finite posets, monotone maps, and down-closed / convex subsets.

Every state space, arity, and variable context in this package is a
FinPoset.  Orders are stored fully closed (reflexive-transitive) as
per-element successor bitsets, so ``leq`` queries are O(1) and all
downstream algorithms can treat the order as a lookup table.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Sequence, Tuple


class PosetError(ValueError):
    pass


class UnknownElement(PosetError):
    pass


class NotAntisymmetric(PosetError):
    def __init__(self, x, y):
        super().__init__(f"elements {x!r} and {y!r} are related both ways")
        self.pair = (x, y)


class BaseMismatch(PosetError):
    pass


class NotMonotone(PosetError):
    pass


@dataclass(frozen=True)
class FinPoset:
    """A finite poset with a closed order relation.

    ``elements`` is sorted (the global deterministic ordering of ids) and
    ``up[i]`` is the bitmask of indices j with elements[i] <= elements[j].
    """

    elements: Tuple
    up: Tuple[int, ...]
    _index: Dict = field(hash=False, compare=False, repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(self.elements)})

    def __contains__(self, x) -> bool:
        return x in self._index

    def __len__(self) -> int:
        return len(self.elements)

    def index(self, x) -> int:
        try:
            return self._index[x]
        except KeyError:
            raise UnknownElement(f"{x!r} is not an element of this poset") from None

    def leq(self, x, y) -> bool:
        return bool(self.up[self.index(x)] >> self.index(y) & 1)

    def pairs(self) -> Iterator[Tuple[object, object]]:
        """All related pairs (x, y) with x <= y, including reflexive ones."""
        for i, x in enumerate(self.elements):
            mask = self.up[i]
            for j, y in enumerate(self.elements):
                if mask >> j & 1:
                    yield (x, y)

    def strict_pairs(self) -> Iterator[Tuple[object, object]]:
        for x, y in self.pairs():
            if x != y:
                yield (x, y)

    def is_discrete(self) -> bool:
        return all(self.up[i] == 1 << i for i in range(len(self.elements)))

    def upset_mask(self, x) -> int:
        return self.up[self.index(x)]

    def minimal(self, subset: Iterable) -> FrozenSet:
        sub = list(subset)
        return frozenset(
            x for x in sub if not any(y != x and self.leq(y, x) for y in sub)
        )

    def maximal(self, subset: Iterable) -> FrozenSet:
        sub = list(subset)
        return frozenset(
            x for x in sub if not any(y != x and self.leq(x, y) for y in sub)
        )


def _close(n: int, up: List[int]) -> List[int]:
    # reflexive-transitive closure by iterated mask propagation (Warshall)
    for i in range(n):
        up[i] |= 1 << i
    changed = True
    while changed:
        changed = False
        for i in range(n):
            mask = up[i]
            acc = mask
            j = 0
            m = mask
            while m:
                if m & 1:
                    acc |= up[j]
                m >>= 1
                j += 1
            if acc != mask:
                up[i] = acc
                changed = True
    return up


def validate_poset(elements: Iterable, pairs: Iterable[Tuple] = ()) -> FinPoset:
    """Build a FinPoset from generating pairs.

    The relation is closed reflexively and transitively; antisymmetry of
    the closure is enforced.
    """
    elems = tuple(sorted(set(elements), key=repr))
    index = {e: i for i, e in enumerate(elems)}
    up = [0] * len(elems)
    for x, y in pairs:
        if x not in index:
            raise UnknownElement(f"{x!r} is not among the declared elements")
        if y not in index:
            raise UnknownElement(f"{y!r} is not among the declared elements")
        up[index[x]] |= 1 << index[y]
    up = _close(len(elems), up)
    for i, x in enumerate(elems):
        for j in range(i + 1, len(elems)):
            if up[i] >> j & 1 and up[j] >> i & 1:
                raise NotAntisymmetric(x, elems[j])
    return FinPoset(elems, tuple(up))


def discrete_poset(elements: Iterable) -> FinPoset:
    return validate_poset(elements, ())


def chain_poset(elements: Sequence) -> FinPoset:
    return validate_poset(elements, list(zip(elements, elements[1:])))


ONE = discrete_poset(["*"])
UNIT = "*"


@dataclass(frozen=True)
class MonotoneMap:
    domain: FinPoset
    codomain: FinPoset
    graph: Tuple[Tuple[object, object], ...]

    @staticmethod
    def make(domain: FinPoset, codomain: FinPoset, mapping: Dict) -> "MonotoneMap":
        for x in domain.elements:
            if x not in mapping:
                raise UnknownElement(f"map is undefined on {x!r}")
            if mapping[x] not in codomain:
                raise UnknownElement(f"image {mapping[x]!r} is not in the codomain")
        for x, y in domain.pairs():
            if not codomain.leq(mapping[x], mapping[y]):
                raise NotMonotone(f"{x!r} <= {y!r} but images are unordered")
        return MonotoneMap(domain, codomain, tuple(sorted(mapping.items(), key=repr)))

    def __call__(self, x):
        for a, b in self.graph:
            if a == x:
                return b
        raise UnknownElement(f"{x!r} is not in the domain")

    def as_dict(self) -> Dict:
        return dict(self.graph)


@dataclass(frozen=True)
class DownSet:
    base: FinPoset
    members: FrozenSet

    def __post_init__(self):
        for x in self.members:
            self.base.index(x)
            for y in self.base.elements:
                if self.base.leq(y, x) and y not in self.members:
                    raise PosetError(f"set is not down-closed at {y!r} <= {x!r}")


@dataclass(frozen=True)
class ConvexSet:
    base: FinPoset
    members: FrozenSet

    def __post_init__(self):
        for x in self.members:
            self.base.index(x)
        for x in self.members:
            for y in self.members:
                for z in self.base.elements:
                    if self.base.leq(x, z) and self.base.leq(z, y) and z not in self.members:
                        raise PosetError(f"set is not convex at {x!r} <= {z!r} <= {y!r}")


def down_closure(base: FinPoset, subset: Iterable) -> DownSet:
    """Smallest down-closed superset of ``subset``."""
    seed = set(subset)
    for x in seed:
        base.index(x)
    members = {y for y in base.elements for x in seed if base.leq(y, x)}
    return DownSet(base, frozenset(members))


def convex_hull(base: FinPoset, subset: Iterable) -> ConvexSet:
    """The set {z | exists x, y in subset with x <= z <= y}."""
    seed = set(subset)
    for x in seed:
        base.index(x)
    members = {
        z
        for z in base.elements
        for x in seed
        for y in seed
        if base.leq(x, z) and base.leq(z, y)
    }
    return ConvexSet(base, frozenset(members))


def egli_milner_leq(base: FinPoset, lo: ConvexSet, hi: ConvexSet) -> bool:
    """Egli-Milner order on convex subsets of ``base``."""
    if lo.base != base or hi.base != base:
        raise BaseMismatch("convex sets live over different posets")
    return egli_milner_leq_raw(base.leq, lo.members, hi.members)


def egli_milner_leq_raw(leq, lo: Iterable, hi: Iterable) -> bool:
    lo = list(lo)
    hi = list(hi)
    return all(any(leq(a, b) for b in hi) for a in lo) and all(
        any(leq(a, b) for a in lo) for b in hi
    )


def downset_leq(lo: DownSet, hi: DownSet) -> bool:
    if lo.base != hi.base:
        raise BaseMismatch("down-sets live over different posets")
    return lo.members <= hi.members


def product_with_discrete(labels: Iterable, poset: FinPoset) -> FinPoset:
    """The poset labels x P with (a, x) <= (b, y) iff a = b and x <= y."""
    labs = sorted(set(labels), key=repr)
    if not labs:
        raise PosetError("label set must be nonempty")
    pairs = [
        ((a, x), (a, y)) for a in labs for x, y in poset.pairs()
    ]
    elements = [(a, x) for a in labs for x in poset.elements]
    return validate_poset(elements, pairs)


def all_posets(elements: Sequence) -> Iterator[FinPoset]:
    """Every labeled poset on the given element set (exhaustive, small n only)."""
    elems = list(elements)
    n = len(elems)
    candidates = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in range(1 << len(candidates)):
        pairs = [
            (elems[i], elems[j])
            for k, (i, j) in enumerate(candidates)
            if bits >> k & 1
        ]
        try:
            poset = validate_poset(elems, pairs)
        except NotAntisymmetric:
            continue
        # keep only relations already closed, so each poset appears once
        if sorted(poset.strict_pairs()) == sorted(pairs):
            yield poset


def all_down_subsets(base: FinPoset) -> Iterator[FrozenSet]:
    for bits in range(1 << len(base.elements)):
        members = frozenset(
            e for i, e in enumerate(base.elements) if bits >> i & 1
        )
        if all(
            y in members
            for x in members
            for y in base.elements
            if base.leq(y, x)
        ):
            yield members


def all_convex_subsets(base: FinPoset) -> Iterator[FrozenSet]:
    for bits in range(1 << len(base.elements)):
        members = frozenset(
            e for i, e in enumerate(base.elements) if bits >> i & 1
        )
        if all(
            z in members
            for x in members
            for y in members
            for z in base.elements
            if base.leq(x, z) and base.leq(z, y)
        ):
            yield members


def monotone_maps(domain: FinPoset, codomain: FinPoset) -> Iterator[Dict]:
    """All monotone maps domain -> codomain as dicts (exhaustive)."""
    doms = list(domain.elements)
    for images in itertools.product(codomain.elements, repeat=len(doms)):
        mapping = dict(zip(doms, images))
        if all(
            codomain.leq(mapping[x], mapping[y]) for x, y in domain.pairs()
        ):
            yield mapping
