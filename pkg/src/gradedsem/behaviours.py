"""Normal forms for depth-graded behaviours and their monad structure.

Five behavioural semantics over a finite label alphabet:

* ``bisim``  -- layers are convex sets of (label, child) pairs under the
  Egli-Milner order; depth-0 behaviours are base elements.
* ``sim``    -- layers are down-closed sets ordered by inclusion.
* ``readysim`` -- ``sim`` over the transformed alphabet of (ready-set,
  action) pairs plus a deadlock marker; no separate code path here.
* ``sync``   -- like ``bisim`` but with an explicit deadlock element and
  pruned layers: live sets are nonempty and contain no dead children.
* ``ptrace`` -- a subdistribution over (label word, base element) pairs.

Convex and down-closed layers are stored by canonical generator sets:
minimal-plus-maximal elements for convex sets, maximal elements for
down-sets.  Hulls and closures over an ambient space are never needed,
which keeps every operation finite and exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .posets import FinPoset, ONE, UNIT, discrete_poset, validate_poset
from .subdist import SubDist, ZERO, format_rational

SEM_KINDS = ("bisim", "sim", "readysim", "sync", "ptrace")


class BehaviourError(ValueError):
    pass


class DepthMismatch(BehaviourError):
    pass


class ShapeMismatch(BehaviourError):
    pass


class CarrierTooLarge(BehaviourError):
    pass


@dataclass(frozen=True)
class Semantics:
    kind: str
    labels: Tuple

    def __post_init__(self):
        if self.kind not in SEM_KINDS:
            raise BehaviourError(f"unknown semantics {self.kind!r}")
        if not self.labels:
            raise BehaviourError("label set must be nonempty")

    @property
    def layer_kind(self) -> str:
        """The behaviour representation used for layers."""
        return "sim" if self.kind == "readysim" else self.kind


def semantics(kind: str, labels: Iterable) -> Semantics:
    return Semantics(kind, tuple(sorted(set(labels), key=repr)))


class Behaviour:
    """Immutable normal-form behaviour; equality is structural.

    payload by kind and depth:
      bisim/sim, depth 0:   leaf (a base element, or a nested Behaviour)
      bisim/sim, depth n+1: frozenset of (label, Behaviour)
      sync:                 ("dead",) or ("live", leaf) at depth 0,
                            ("dead",) or ("live", frozenset) above
      ptrace:               tuple of ((word, leaf), Fraction), sorted
    """

    __slots__ = ("kind", "depth", "payload", "_hash")

    def __init__(self, kind: str, depth: int, payload):
        self.kind = kind
        self.depth = depth
        self.payload = payload
        self._hash = hash((kind, depth, payload))

    def __eq__(self, other):
        return (
            isinstance(other, Behaviour)
            and self._hash == other._hash
            and self.kind == other.kind
            and self.depth == other.depth
            and self.payload == other.payload
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Behaviour({self.kind}, {self.depth}, {format_behaviour(self)})"

    @property
    def is_dead(self) -> bool:
        return self.kind == "sync" and self.payload == ("dead",)


def _leaf_leq(lo, hi, base: FinPoset) -> bool:
    if isinstance(lo, Behaviour) and isinstance(hi, Behaviour):
        return beh_leq(lo, hi, base)
    return base.leq(lo, hi)


def _pair_leq(p1, p2, base: FinPoset) -> bool:
    return p1[0] == p2[0] and _leaf_leq(p1[1], p2[1], base)


def _em_leq(lo: Iterable, hi: Iterable, base: FinPoset) -> bool:
    lo, hi = list(lo), list(hi)
    return all(any(_pair_leq(a, b, base) for b in hi) for a in lo) and all(
        any(_pair_leq(a, b, base) for a in lo) for b in hi
    )


def _incl_leq(lo: Iterable, hi: Iterable, base: FinPoset) -> bool:
    hi = list(hi)
    return all(any(_pair_leq(a, b, base) for b in hi) for a in lo)


def beh_leq(lo: Behaviour, hi: Behaviour, base: FinPoset = ONE) -> bool:
    """The per-depth behavioural order (structural recursion)."""
    if lo.kind != hi.kind:
        raise BehaviourError(f"cannot compare {lo.kind} with {hi.kind}")
    if lo.depth != hi.depth:
        raise DepthMismatch(f"depths {lo.depth} and {hi.depth} differ")
    kind = lo.kind
    if kind in ("bisim", "sim"):
        if lo.depth == 0:
            return _leaf_leq(lo.payload, hi.payload, base)
        if kind == "bisim":
            return _em_leq(lo.payload, hi.payload, base)
        return _incl_leq(lo.payload, hi.payload, base)
    if kind == "sync":
        if lo.is_dead or hi.is_dead:
            return lo.is_dead and hi.is_dead
        if lo.depth == 0:
            return _leaf_leq(lo.payload[1], hi.payload[1], base)
        return _em_leq(lo.payload[1], hi.payload[1], base)
    if kind == "ptrace":
        return _ptrace_leq(lo, hi, base)
    raise BehaviourError(f"unknown behaviour kind {kind!r}")


def _ptrace_leq(lo: Behaviour, hi: Behaviour, base: FinPoset) -> bool:
    from .subdist import sdist_leq_flow

    support = sorted(
        {k for k, _ in lo.payload} | {k for k, _ in hi.payload}, key=repr
    )
    pairs = [
        (p, q)
        for p in support
        for q in support
        if p != q and p[0] == q[0] and _leaf_leq(p[1], q[1], base)
    ]
    ambient = validate_poset(support, pairs)
    mu = SubDist.make(ambient, dict(lo.payload))
    nu = SubDist.make(ambient, dict(hi.payload))
    return sdist_leq_flow(ambient, mu, nu)


def _reduce_convex(pairs: Iterable, base: FinPoset) -> FrozenSet:
    """Canonical generators of a convex set: minimal plus maximal pairs."""
    pairs = list(set(pairs))
    mins = [
        p
        for p in pairs
        if not any(q != p and _pair_leq(q, p, base) and not _pair_leq(p, q, base) for q in pairs)
    ]
    maxs = [
        p
        for p in pairs
        if not any(q != p and _pair_leq(p, q, base) and not _pair_leq(q, p, base) for q in pairs)
    ]
    return frozenset(mins) | frozenset(maxs)


def _reduce_down(pairs: Iterable, base: FinPoset) -> FrozenSet:
    """Canonical generators of a down-set: maximal pairs only."""
    pairs = list(set(pairs))
    return frozenset(
        p
        for p in pairs
        if not any(q != p and _pair_leq(p, q, base) and not _pair_leq(q, p, base) for q in pairs)
    )


def node(kind: str, depth: int, pairs: Iterable, base: FinPoset = ONE) -> Behaviour:
    """Canonical depth-(n+1) layer from generator pairs (label, child)."""
    pairs = list(pairs)
    if any(child.depth != depth - 1 for _, child in pairs):
        raise ShapeMismatch("children must sit one depth below the layer")
    if kind == "bisim":
        return Behaviour("bisim", depth, _reduce_convex(pairs, base))
    if kind == "sim":
        return Behaviour("sim", depth, _reduce_down(pairs, base))
    if kind == "sync":
        live = [(a, c) for a, c in pairs if not c.is_dead]
        if not live:
            return sync_dead(depth)
        return Behaviour("sync", depth, ("live", _reduce_convex(live, base)))
    raise BehaviourError(f"node() does not apply to {kind!r}")


def sync_dead(depth: int) -> Behaviour:
    return Behaviour("sync", depth, ("dead",))


def ptrace_node(depth: int, weights: Dict) -> Behaviour:
    items = []
    total = ZERO
    for (word, leaf), w in weights.items():
        w = Fraction(w)
        if w == 0:
            continue
        if len(word) != depth:
            raise ShapeMismatch("word length must equal the depth")
        total += w
        items.append(((tuple(word), leaf), w))
    if total > 1:
        raise BehaviourError(f"trace mass {total} exceeds 1")
    return Behaviour("ptrace", depth, tuple(sorted(items, key=lambda it: repr(it[0]))))


def m_unit(sem: Semantics, x) -> Behaviour:
    """The depth-0 behaviour of a base element."""
    kind = sem.layer_kind
    if kind in ("bisim", "sim"):
        return Behaviour(kind, 0, x)
    if kind == "sync":
        return Behaviour("sync", 0, ("live", x))
    if kind == "ptrace":
        return ptrace_node(0, {((), x): Fraction(1)})
    raise BehaviourError(kind)


def leaves(b: Behaviour):
    if b.kind in ("bisim", "sim"):
        if b.depth == 0:
            yield b.payload
        else:
            for _, child in b.payload:
                yield from leaves(child)
    elif b.kind == "sync":
        if b.is_dead:
            return
        if b.depth == 0:
            yield b.payload[1]
        else:
            for _, child in b.payload[1]:
                yield from leaves(child)
    elif b.kind == "ptrace":
        for (_, leaf), _ in b.payload:
            yield leaf


def m_map(sem: Semantics, f, b: Behaviour, base: FinPoset = ONE) -> Behaviour:
    """Functor action: relabel leaves and re-close every layer.

    ``f`` is a MonotoneMap or a plain callable on leaves; ``base`` is the
    codomain order used for re-closing.
    """
    fn = f if callable(f) else f.__call__
    kind = b.kind
    if kind in ("bisim", "sim"):
        if b.depth == 0:
            return Behaviour(kind, 0, fn(b.payload))
        return node(
            kind,
            b.depth,
            [(a, m_map(sem, fn, child, base)) for a, child in b.payload],
            base,
        )
    if kind == "sync":
        if b.is_dead:
            return b
        if b.depth == 0:
            return Behaviour("sync", 0, ("live", fn(b.payload[1])))
        return node(
            "sync",
            b.depth,
            [(a, m_map(sem, fn, child, base)) for a, child in b.payload[1]],
            base,
        )
    if kind == "ptrace":
        acc: Dict = {}
        for (word, leaf), w in b.payload:
            key = (word, fn(leaf))
            acc[key] = acc.get(key, ZERO) + w
        return ptrace_node(b.depth, acc)
    raise BehaviourError(kind)


def m_mult(sem: Semantics, n: int, k: int, nested: Behaviour, base: FinPoset = ONE) -> Behaviour:
    """Graded multiplication: graft depth-k behaviours sitting at the
    leaves of a depth-n behaviour, renormalizing on the way up.
    """
    kind = nested.kind
    if nested.depth != n:
        raise ShapeMismatch(f"outer behaviour has depth {nested.depth}, expected {n}")
    if kind in ("bisim", "sim"):
        if n == 0:
            inner = nested.payload
            if not isinstance(inner, Behaviour) or inner.depth != k:
                raise ShapeMismatch("leaf is not a depth-k behaviour")
            return inner
        return node(
            kind,
            n + k,
            [(a, m_mult(sem, n - 1, k, child, base)) for a, child in nested.payload],
            base,
        )
    if kind == "sync":
        if nested.is_dead:
            return sync_dead(n + k)
        if n == 0:
            inner = nested.payload[1]
            if not isinstance(inner, Behaviour) or inner.depth != k:
                raise ShapeMismatch("leaf is not a depth-k behaviour")
            return inner
        grafted = [
            (a, m_mult(sem, n - 1, k, child, base)) for a, child in nested.payload[1]
        ]
        return node("sync", n + k, grafted, base)
    if kind == "ptrace":
        acc: Dict = {}
        for (word, inner), p in nested.payload:
            if not isinstance(inner, Behaviour) or inner.depth != k:
                raise ShapeMismatch("leaf is not a depth-k behaviour")
            for (word2, leaf), q in inner.payload:
                key = (word + word2, leaf)
                acc[key] = acc.get(key, ZERO) + p * q
        return ptrace_node(n + k, acc)
    raise BehaviourError(kind)


def wrap_leaves(sem: Semantics, b: Behaviour, wrap: Callable) -> Behaviour:
    """Apply a map to the depth-0 leaves without re-closing (used to build
    nested behaviours, e.g. M_n(eta) for the unit laws)."""
    kind = b.kind
    if kind in ("bisim", "sim"):
        if b.depth == 0:
            return Behaviour(kind, 0, wrap(b.payload))
        return Behaviour(
            kind,
            b.depth,
            frozenset((a, wrap_leaves(sem, child, wrap)) for a, child in b.payload),
        )
    if kind == "sync":
        if b.is_dead:
            return b
        if b.depth == 0:
            return Behaviour("sync", 0, ("live", wrap(b.payload[1])))
        return Behaviour(
            "sync",
            b.depth,
            ("live", frozenset((a, wrap_leaves(sem, child, wrap)) for a, child in b.payload[1])),
        )
    if kind == "ptrace":
        return Behaviour(
            "ptrace",
            b.depth,
            tuple(((word, wrap(leaf)), w) for (word, leaf), w in b.payload),
        )
    raise BehaviourError(kind)


# ---------------------------------------------------------------------------
# carrier enumeration

ENUM_CAP = 500_000


def _enumerate_convex_layers(
    children: Sequence, labels: Sequence, base: FinPoset, cap: int
) -> List[FrozenSet]:
    """All canonical convex subsets of labels x children (including the
    empty one).  Children are behaviours or leaves; order via _pair_leq."""
    ambient = [(a, c) for a in labels for c in children]
    if len(ambient) > 22 or 2 ** len(ambient) > cap:
        raise CarrierTooLarge(
            f"convex-subset enumeration over {len(ambient)} elements exceeds the cap"
        )
    seen = set()
    out: List[FrozenSet] = []
    for bits in range(1 << len(ambient)):
        subset = [ambient[i] for i in range(len(ambient)) if bits >> i & 1]
        # convexity over the ambient
        ok = True
        for p in subset:
            if not ok:
                break
            for q in subset:
                if not ok:
                    break
                for z in ambient:
                    if z in subset:
                        continue
                    if _pair_leq(p, z, base) and _pair_leq(z, q, base):
                        ok = False
                        break
        if not ok:
            continue
        canon = _reduce_convex(subset, base)
        if canon not in seen:
            seen.add(canon)
            out.append(canon)
    return out


def _enumerate_down_layers(
    children: Sequence, labels: Sequence, base: FinPoset, cap: int
) -> List[FrozenSet]:
    """All canonical down-sets of labels x children, i.e. all antichains."""
    ambient = [(a, c) for a in labels for c in children]
    out: List[FrozenSet] = []

    def extend(prefix: List, rest: List) -> None:
        if len(out) > cap:
            raise CarrierTooLarge("down-set enumeration exceeds the cap")
        out.append(frozenset(prefix))
        for i, p in enumerate(rest):
            if any(
                _pair_leq(p, q, base) or _pair_leq(q, p, base) for q in prefix
            ):
                continue
            extend(prefix + [p], rest[i + 1 :])

    extend([], ambient)
    return sorted(set(out), key=lambda s: (len(s), sorted(map(repr, s))))


def enumerate_mn1(
    sem: Semantics, n: int, cap: int = ENUM_CAP, base: FinPoset = ONE
) -> List[Behaviour]:
    """All depth-n behaviours over a finite base (not for ptrace)."""
    kind = sem.layer_kind
    labels = sem.labels
    if kind == "ptrace":
        raise CarrierTooLarge("trace carriers are intensional, never enumerated")
    if kind in ("bisim", "sim"):
        level: List[Behaviour] = [Behaviour(kind, 0, x) for x in base.elements]
        for d in range(1, n + 1):
            if kind == "bisim":
                layers = _enumerate_convex_layers(level, labels, base, cap)
            else:
                layers = _enumerate_down_layers(level, labels, base, cap)
            level = [Behaviour(kind, d, layer) for layer in layers]
        return level
    if kind == "sync":
        level = [sync_dead(0)] + [
            Behaviour("sync", 0, ("live", x)) for x in base.elements
        ]
        for d in range(1, n + 1):
            live_children = [b for b in level if not b.is_dead]
            layers = _enumerate_convex_layers(live_children, labels, base, cap)
            level = [sync_dead(d)] + [
                Behaviour("sync", d, ("live", layer)) for layer in layers if layer
            ]
        return level
    raise BehaviourError(kind)


def enumerate_m1_over(
    sem: Semantics, children: Sequence[Behaviour], cap: int = ENUM_CAP
) -> List[Behaviour]:
    """All elements of M_1(Y) for Y a listed poset of behaviours, given as
    nested depth-1 behaviours whose leaves are the children."""
    kind = sem.layer_kind
    labels = sem.labels
    wrapped = [Behaviour(kind, 0, c) if kind in ("bisim", "sim") else c for c in children]
    if kind == "bisim":
        layers = _enumerate_convex_layers(
            [Behaviour(kind, 0, c) for c in children], labels, ONE, cap
        )
        return [Behaviour(kind, 1, layer) for layer in layers]
    if kind == "sim":
        layers = _enumerate_down_layers(
            [Behaviour(kind, 0, c) for c in children], labels, ONE, cap
        )
        return [Behaviour(kind, 1, layer) for layer in layers]
    if kind == "sync":
        wrapped = [Behaviour("sync", 0, ("live", c)) for c in children]
        layers = _enumerate_convex_layers(wrapped, labels, ONE, cap)
        return [sync_dead(1)] + [
            Behaviour("sync", 1, ("live", layer)) for layer in layers if layer
        ]
    raise BehaviourError(kind)


# ---------------------------------------------------------------------------
# canonical M1-algebras

@dataclass
class M1Algebra:
    """The free M1-algebra on the depth-n behaviour space over base 1.

    carrier0/carrier1 are enumerations (None for ptrace, whose carriers
    stay intensional); the structure maps are callables.
    """

    sem: Semantics
    level: int
    carrier0: Optional[List[Behaviour]]
    carrier1: Optional[List[Behaviour]]
    a00: Callable
    a01: Callable
    a10: Callable

    def leq(self, lo: Behaviour, hi: Behaviour) -> bool:
        return beh_leq(lo, hi)


def _mzero_apply(sem: Semantics, m0_elem, depth: int) -> Behaviour:
    """mu^{0,n}: an M0-layer over depth-n behaviours collapses to one.

    For bisim/sim M0 = Id and the element is the behaviour itself.  For
    sync, M0 X = X + deadlock: the element is ("dead",) or ("live", b).
    For ptrace, M0 = subdistributions: a list of (weight, behaviour).
    """
    kind = sem.layer_kind
    if kind in ("bisim", "sim"):
        return m0_elem
    if kind == "sync":
        if m0_elem == ("dead",):
            return sync_dead(depth)
        return m0_elem[1]
    if kind == "ptrace":
        acc: Dict = {}
        for w, inner in m0_elem:
            for key, q in inner.payload:
                acc[key] = acc.get(key, ZERO) + Fraction(w) * q
        return ptrace_node(depth, acc)
    raise BehaviourError(kind)


def canonical_m1(sem: Semantics, n: int, cap: int = ENUM_CAP) -> M1Algebra:
    kind = sem.layer_kind
    if kind == "ptrace":
        carrier0 = carrier1 = None
    else:
        carrier0 = enumerate_mn1(sem, n, cap)
        carrier1 = enumerate_mn1(sem, n + 1, cap)
    return M1Algebra(
        sem=sem,
        level=n,
        carrier0=carrier0,
        carrier1=carrier1,
        a00=lambda m0: _mzero_apply(sem, m0, n),
        a01=lambda m0: _mzero_apply(sem, m0, n + 1),
        a10=lambda nested: m_mult(sem, 1, n, nested),
    )


# ---------------------------------------------------------------------------
# random generation (for law tests)

def random_behaviour(sem: Semantics, depth: int, rng, leaf_pool: Sequence, max_width: int = 3) -> Behaviour:
    kind = sem.layer_kind
    if kind in ("bisim", "sim"):
        if depth == 0:
            return Behaviour(kind, 0, rng.choice(leaf_pool))
        width = rng.randrange(0, max_width + 1)
        pairs = [
            (rng.choice(sem.labels), random_behaviour(sem, depth - 1, rng, leaf_pool, max_width))
            for _ in range(width)
        ]
        return node(kind, depth, pairs)
    if kind == "sync":
        if depth == 0:
            if rng.random() < 0.2:
                return sync_dead(0)
            return Behaviour("sync", 0, ("live", rng.choice(leaf_pool)))
        if rng.random() < 0.15:
            return sync_dead(depth)
        width = rng.randrange(0, max_width + 1)
        pairs = [
            (rng.choice(sem.labels), random_behaviour(sem, depth - 1, rng, leaf_pool, max_width))
            for _ in range(width)
        ]
        return node("sync", depth, pairs)
    if kind == "ptrace":
        words = [
            tuple(rng.choice(sem.labels) for _ in range(depth))
            for _ in range(rng.randrange(0, max_width + 1))
        ]
        denom = rng.choice([2, 3, 4])
        acc: Dict = {}
        budget = Fraction(1)
        for w in words:
            if budget <= 0:
                break
            amount = min(Fraction(1, denom), budget)
            key = (w, rng.choice(leaf_pool))
            acc[key] = acc.get(key, ZERO) + amount
            budget -= amount
        return ptrace_node(depth, acc)
    raise BehaviourError(kind)


# ---------------------------------------------------------------------------
# printing

def format_behaviour(b: Behaviour) -> str:
    """Canonical s-expression:  leaf | dead | (live leaf)
    | {(label child) ...} | {(p/q (word) leaf) ...}   entries sorted."""
    if b.kind in ("bisim", "sim"):
        if b.depth == 0:
            return _format_leaf(b.payload)
        entries = sorted(
            f"({_format_label(a)} {format_behaviour(c)})" for a, c in b.payload
        )
        return "{" + " ".join(entries) + "}"
    if b.kind == "sync":
        if b.is_dead:
            return "dead"
        if b.depth == 0:
            return f"(live {_format_leaf(b.payload[1])})"
        entries = sorted(
            f"({_format_label(a)} {format_behaviour(c)})" for a, c in b.payload[1]
        )
        return "{" + " ".join(entries) + "}"
    if b.kind == "ptrace":
        entries = sorted(
            f"({format_rational(w)} ({' '.join(map(_format_label, word))}) {_format_leaf(leaf)})"
            for (word, leaf), w in b.payload
        )
        return "{" + " ".join(entries) + "}"
    raise BehaviourError(b.kind)


def _format_leaf(leaf) -> str:
    if isinstance(leaf, Behaviour):
        return format_behaviour(leaf)
    return str(leaf)


def _format_label(label) -> str:
    if isinstance(label, tuple) and label and label[0] == "rdy":
        _, ready, act = label
        return f"{act}|{{{','.join(map(str, ready))}}}"
    if label == ("deadmark",):
        return "dead-mark"
    return str(label)
