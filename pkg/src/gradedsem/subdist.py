"""Exact-rational subdistributions over a poset and their order.

A subdistribution assigns mass in (0, 1] to finitely many elements with
total mass at most 1.  Two subdistributions are compared by cutting both
into pieces (subdivisions) and matching pieces injectively so that each
piece of the left side has at most the mass of its partner and sits on a
smaller-or-equal element ("obviously below").  The decision procedure is
an exact integer max-flow; an exponential subdivision search is kept as
an independent oracle.

All arithmetic uses fractions.Fraction; no floats anywhere.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from math import lcm
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .posets import BaseMismatch, FinPoset

ZERO = Fraction(0)
ONE_F = Fraction(1)


class SubDistError(ValueError):
    pass


class InvalidPartition(SubDistError):
    pass


class NotSameDistribution(SubDistError):
    pass


class MassExceedsOne(SubDistError):
    pass


def parse_rational(text: str) -> Fraction:
    """Rationals in file formats are "p/q" or plain integers like "1"."""
    return Fraction(text.strip())


def format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class SubDist:
    """Finitely supported subdistribution: the quotient (summed) view."""

    base: FinPoset
    weights: Tuple[Tuple[object, Fraction], ...]

    @staticmethod
    def make(base: FinPoset, weights: Dict) -> "SubDist":
        items = []
        total = ZERO
        for x, w in weights.items():
            base.index(x)
            w = Fraction(w)
            if w == 0:
                continue
            if w < 0 or w > 1:
                raise SubDistError(f"weight {w} for {x!r} is outside (0, 1]")
            total += w
            items.append((x, w))
        if total > 1:
            raise MassExceedsOne(f"total mass {total} exceeds 1")
        return SubDist(base, tuple(sorted(items, key=lambda it: repr(it[0]))))

    def weight(self, x) -> Fraction:
        for y, w in self.weights:
            if y == x:
                return w
        return ZERO

    def mass(self) -> Fraction:
        return sum((w for _, w in self.weights), ZERO)

    def support(self) -> FrozenSet:
        return frozenset(x for x, _ in self.weights)

    def as_dict(self) -> Dict:
        return dict(self.weights)


@dataclass(frozen=True)
class FormalSum:
    """Syntax: an ordered list of (coefficient, element) summands.

    Repeated elements are allowed; collapsing to a SubDist is explicit.
    """

    base: FinPoset
    summands: Tuple[Tuple[Fraction, object], ...]

    @staticmethod
    def make(base: FinPoset, summands: Iterable[Tuple]) -> "FormalSum":
        out = []
        total = ZERO
        for p, x in summands:
            p = Fraction(p)
            base.index(x)
            if not 0 < p <= 1:
                raise SubDistError(f"coefficient {p} is outside (0, 1]")
            total += p
            out.append((p, x))
        if total > 1:
            raise MassExceedsOne(f"total mass {total} exceeds 1")
        return FormalSum(base, tuple(out))

    def collapse(self) -> SubDist:
        acc: Dict = {}
        for p, x in self.summands:
            acc[x] = acc.get(x, ZERO) + p
        return SubDist.make(self.base, acc)

    def mass(self) -> Fraction:
        return sum((p for p, _ in self.summands), ZERO)


def formal_sum_of(dist: SubDist) -> FormalSum:
    return FormalSum(dist.base, tuple((w, x) for x, w in dist.weights))


@dataclass(frozen=True)
class Partition:
    """A partition of a positive rational ``total``.

    Two interchangeable representations: ``summands`` lists the positive
    parts in order; ``partial_sums`` records the left endpoints of the
    parts, i.e. a finite set of rationals in [0, total) containing 0.
    """

    total: Fraction
    kind: str  # "smd" | "psums"
    parts: Tuple[Fraction, ...]

    @staticmethod
    def summand_form(parts: Sequence[Fraction]) -> "Partition":
        parts = tuple(Fraction(p) for p in parts)
        if not parts or any(p <= 0 for p in parts):
            raise InvalidPartition("summand form needs a nonempty list of positive parts")
        return Partition(sum(parts, ZERO), "smd", parts)

    @staticmethod
    def partial_sum_form(total: Fraction, points: Iterable[Fraction]) -> "Partition":
        total = Fraction(total)
        pts = tuple(sorted(set(Fraction(p) for p in points)))
        if total <= 0:
            raise InvalidPartition("total must be positive")
        if not pts or pts[0] != 0:
            raise InvalidPartition("partial-sum form must contain 0")
        if pts[-1] >= total:
            raise InvalidPartition("partial sums must be strictly below the total")
        return Partition(total, "psums", pts)


def smd_psums_convert(part: Partition) -> Partition:
    """Length-preserving bijection between the two partition forms."""
    if part.kind == "smd":
        points = []
        acc = ZERO
        for p in part.parts[:-1]:
            points.append(acc)
            acc += p
        points.append(acc)
        return Partition.partial_sum_form(part.total, points)
    if part.kind == "psums":
        pts = list(part.parts) + [part.total]
        return Partition.summand_form([b - a for a, b in zip(pts, pts[1:])])
    raise InvalidPartition(f"unknown partition kind {part.kind!r}")


def _per_element_partitions(s: FormalSum) -> Dict[object, List[Fraction]]:
    acc: Dict[object, List[Fraction]] = {}
    for p, x in s.summands:
        acc.setdefault(x, []).append(p)
    return acc


def common_refinement(
    a: FormalSum, b: FormalSum
) -> Tuple[FormalSum, Tuple[int, ...], Tuple[int, ...]]:
    """A formal sum subdividing both inputs, built per element by taking
    the union of the two partial-sum sets.

    Returns (refined, into_a, into_b) where into_a[i] is the index of the
    summand of ``a`` that piece i of the refinement came from (likewise
    into_b).  Requires equal per-element totals.
    """
    if a.base != b.base:
        raise BaseMismatch("formal sums live over different posets")
    parts_a = _per_element_partitions(a)
    parts_b = _per_element_partitions(b)
    if set(parts_a) != set(parts_b) or any(
        sum(parts_a[x], ZERO) != sum(parts_b[x], ZERO) for x in parts_a
    ):
        raise NotSameDistribution("per-element totals differ")

    def blocks(parts: List[Fraction]) -> List[Tuple[Fraction, Fraction]]:
        out, acc = [], ZERO
        for p in parts:
            out.append((acc, acc + p))
            acc += p
        return out

    # indices of the original summands per element, in order of appearance
    idx_a: Dict[object, List[int]] = {}
    for i, (_, x) in enumerate(a.summands):
        idx_a.setdefault(x, []).append(i)
    idx_b: Dict[object, List[int]] = {}
    for i, (_, x) in enumerate(b.summands):
        idx_b.setdefault(x, []).append(i)

    summands: List[Tuple[Fraction, object]] = []
    into_a: List[int] = []
    into_b: List[int] = []
    for x in sorted(parts_a, key=repr):
        blocks_a = blocks(parts_a[x])
        blocks_b = blocks(parts_b[x])
        cuts = sorted(
            {lo for lo, _ in blocks_a} | {lo for lo, _ in blocks_b}
        ) + [sum(parts_a[x], ZERO)]
        for lo, hi in zip(cuts, cuts[1:]):
            summands.append((hi - lo, x))
            ia = next(k for k, (alo, ahi) in enumerate(blocks_a) if alo <= lo < ahi)
            ib = next(k for k, (blo, bhi) in enumerate(blocks_b) if blo <= lo < bhi)
            into_a.append(idx_a[x][ia])
            into_b.append(idx_b[x][ib])
    return FormalSum(a.base, tuple(summands)), tuple(into_a), tuple(into_b)


def is_subdivision(fine: FormalSum, coarse: FormalSum) -> bool:
    """True iff ``fine`` refines ``coarse`` (same per-element totals)."""
    if fine.base != coarse.base:
        return False
    pa = _per_element_partitions(fine)
    pb = _per_element_partitions(coarse)
    return set(pa) == set(pb) and all(
        sum(pa[x], ZERO) == sum(pb[x], ZERO) for x in pa
    )


def obviously_below(a: FormalSum, b: FormalSum) -> Optional[Tuple[int, ...]]:
    """An injective matching of summands witnessing coefficient-and-element
    domination, or None.  The search is a complete bipartite matching.
    """
    if a.base != b.base:
        raise BaseMismatch("formal sums live over different posets")
    base = a.base
    n, m = len(a.summands), len(b.summands)
    adj = [
        [
            j
            for j in range(m)
            if a.summands[i][0] <= b.summands[j][0]
            and base.leq(a.summands[i][1], b.summands[j][1])
        ]
        for i in range(n)
    ]
    matched_of_b: List[Optional[int]] = [None] * m

    def augment(i: int, seen: List[bool]) -> bool:
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                if matched_of_b[j] is None or augment(matched_of_b[j], seen):
                    matched_of_b[j] = i
                    return True
        return False

    for i in range(n):
        if not augment(i, [False] * m):
            return None
    f: List[int] = [0] * n
    for j, i in enumerate(matched_of_b):
        if i is not None:
            f[i] = j
    return tuple(f)


def push_subdivision(
    a: FormalSum, b: FormalSum, witness: Tuple[int, ...], fine_a: FormalSum
) -> FormalSum:
    """Given a obviously-below b and a subdivision of a, extend it to a
    subdivision of b that is obviously above the subdivision of a.
    Per summand: a partial-sum set of a piece of a is also one of the
    matched (larger) piece of b.
    """
    parts_fine = _split_by_origin(a, fine_a)
    out: List[Tuple[Fraction, object]] = []
    covered = set(witness)
    for j, (q, y) in enumerate(b.summands):
        if j in covered:
            i = witness.index(j)
            pieces = parts_fine[i]
            used = sum(pieces, ZERO)
            out.extend((p, y) for p in pieces)
            if q > used:
                out.append((q - used, y))
        else:
            out.append((q, y))
    return FormalSum(b.base, tuple(out))


def pull_subdivision(
    a: FormalSum, b: FormalSum, witness: Tuple[int, ...], fine_b: FormalSum
) -> FormalSum:
    """Dual of push_subdivision: restrict a subdivision of b to one of a
    by intersecting each matched partial-sum set with [0, p_i).
    """
    parts_fine = _split_by_origin(b, fine_b)
    out: List[Tuple[Fraction, object]] = []
    for i, (p, x) in enumerate(a.summands):
        pieces = parts_fine[witness[i]]
        acc = ZERO
        for piece in pieces:
            if acc >= p:
                break
            out.append((min(piece, p - acc), x))
            acc += piece
    return FormalSum(a.base, tuple(out))


def _split_by_origin(coarse: FormalSum, fine: FormalSum) -> List[List[Fraction]]:
    """Slice the summands of ``fine`` into blocks matching the summands of
    ``coarse`` elementwise (both taken in order of appearance per element).
    """
    if not is_subdivision(fine, coarse):
        raise NotSameDistribution("not a subdivision of the given sum")
    queues: Dict[object, deque] = {}
    for p, x in fine.summands:
        queues.setdefault(x, deque()).append(p)
    blocks: List[List[Fraction]] = []
    for p, x in coarse.summands:
        got: List[Fraction] = []
        acc = ZERO
        q = queues[x]
        while acc < p:
            piece = q.popleft()
            if acc + piece > p:
                got.append(p - acc)
                q.appendleft(piece - (p - acc))
                acc = p
            else:
                got.append(piece)
                acc += piece
        blocks.append(got)
    return blocks


def sdist_leq_flow(base: FinPoset, mu: SubDist, nu: SubDist) -> bool:
    """Decide mu <= nu by an exact max-flow over the order relation.

    Source -> x with capacity mu(x); x -> y whenever x <= y (unbounded);
    y -> sink with capacity nu(y).  mu is below nu iff the max flow moves
    all of mu's mass.  Capacities are scaled to a common denominator, so
    the flow is integral.
    """
    if mu.base != base or nu.base != base:
        raise BaseMismatch("subdistributions live over different posets")
    if not mu.weights:
        return True
    denom = lcm(
        *(w.denominator for _, w in mu.weights),
        *(w.denominator for _, w in nu.weights),
    )
    left = [(x, int(w * denom)) for x, w in mu.weights]
    right = [(y, int(w * denom)) for y, w in nu.weights]
    need = sum(c for _, c in left)

    # nodes: 0 = source, 1..n = left, n+1..n+m = right, n+m+1 = sink
    n, m = len(left), len(right)
    sink = n + m + 1
    cap: Dict[Tuple[int, int], int] = {}
    adj: List[List[int]] = [[] for _ in range(n + m + 2)]

    def add_edge(u: int, v: int, c: int) -> None:
        if (u, v) not in cap:
            adj[u].append(v)
            adj[v].append(u)
            cap[(u, v)] = 0
            cap[(v, u)] = 0
        cap[(u, v)] += c

    inf = need + 1
    for i, (_, c) in enumerate(left):
        add_edge(0, 1 + i, c)
    for j, (_, c) in enumerate(right):
        add_edge(1 + n + j, sink, c)
    for i, (x, _) in enumerate(left):
        for j, (y, _) in enumerate(right):
            if base.leq(x, y):
                add_edge(1 + i, 1 + n + j, inf)

    flow = 0
    while True:
        parent = {0: 0}
        queue = deque([0])
        while queue and sink not in parent:
            u = queue.popleft()
            for v in adj[u]:
                if v not in parent and cap[(u, v)] > 0:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            break
        bottleneck = inf
        v = sink
        while v != 0:
            u = parent[v]
            bottleneck = min(bottleneck, cap[(u, v)])
            v = u
        v = sink
        while v != 0:
            u = parent[v]
            cap[(u, v)] -= bottleneck
            cap[(v, u)] += bottleneck
            v = u
        flow += bottleneck
    return flow == need


MAX_BRUTEFORCE_ATOMS = 12


def sdist_leq_bruteforce(base: FinPoset, mu: SubDist, nu: SubDist) -> bool:
    """Certification oracle: subdivide both sides into atoms of size 1/D
    (D the lcm of all weight denominators) and search exhaustively for an
    injective atom matching along the base order.  Exponential; gated.
    """
    if mu.base != base or nu.base != base:
        raise BaseMismatch("subdistributions live over different posets")
    if not mu.weights:
        return True
    denom = lcm(
        *(w.denominator for _, w in mu.weights),
        *(w.denominator for _, w in nu.weights),
    )
    left: List[object] = []
    for x, w in mu.weights:
        left.extend([x] * int(w * denom))
    right: List[object] = []
    for y, w in nu.weights:
        right.extend([y] * int(w * denom))
    if len(left) > MAX_BRUTEFORCE_ATOMS or len(right) > MAX_BRUTEFORCE_ATOMS:
        raise SubDistError(
            f"brute-force oracle gated at {MAX_BRUTEFORCE_ATOMS} atoms"
        )
    if len(left) > len(right):
        return False

    right_sorted = sorted(right, key=repr)

    def search(i: int, used: int) -> bool:
        if i == len(left):
            return True
        prev = None
        for j, y in enumerate(right_sorted):
            if used >> j & 1 or y == prev:
                continue
            if base.leq(left[i], y):
                if search(i + 1, used | 1 << j):
                    return True
            prev = y  # identical atoms: trying one of them suffices
        return False

    return search(0, 0)


def sdist_leq(base: FinPoset, mu: SubDist, nu: SubDist) -> bool:
    return sdist_leq_flow(base, mu, nu)


def sdist_map(f, mu: SubDist, codomain: FinPoset = None) -> SubDist:
    """Pushforward along a monotone map (MonotoneMap or plain callable)."""
    if hasattr(f, "domain"):
        if mu.base != f.domain:
            raise BaseMismatch("subdistribution does not live over the map's domain")
        codomain = f.codomain
        fn = f
    else:
        if codomain is None:
            raise SubDistError("codomain required for a bare callable")
        fn = f
    acc: Dict = {}
    for x, w in mu.weights:
        y = fn(x)
        acc[y] = acc.get(y, ZERO) + w
    return SubDist.make(codomain, acc)


def sdist_flatten(outer: Sequence[Tuple[Fraction, SubDist]], base: FinPoset = None) -> SubDist:
    """Weighted mixture of subdistributions over a common base."""
    bases = {inner.base for _, inner in outer}
    if len(bases) > 1:
        raise BaseMismatch("inner subdistributions live over different posets")
    if base is None:
        if not bases:
            raise SubDistError("cannot infer the base of an empty mixture")
        base = next(iter(bases))
    total = sum((Fraction(p) for p, _ in outer), ZERO)
    if total > 1:
        raise MassExceedsOne(f"outer mass {total} exceeds 1")
    acc: Dict = {}
    for p, inner in outer:
        p = Fraction(p)
        for x, w in inner.weights:
            acc[x] = acc.get(x, ZERO) + p * w
    return SubDist.make(base, acc)


def all_subdists(
    base: FinPoset, max_support: int, max_denominator: int
) -> Iterable[SubDist]:
    """Every subdistribution with bounded support size and coefficient
    denominators (used for exhaustive oracle certification)."""
    values = sorted(
        {
            Fraction(k, d)
            for d in range(1, max_denominator + 1)
            for k in range(1, d + 1)
        }
    )
    elems = list(base.elements)
    for size in range(0, min(max_support, len(elems)) + 1):
        for support in itertools.combinations(elems, size):
            for weights in itertools.product(values, repeat=size):
                if sum(weights, ZERO) <= 1:
                    yield SubDist.make(base, dict(zip(support, weights)))
