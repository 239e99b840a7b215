"""Finite ordered (probabilistic) transition systems and refinement.

A system is a finite poset of states with labelled transitions; loading
validates that the transition structure is monotone for the chosen
semantics (the same edge set may be fine for similarity but not for
bisimilarity).  Transition sets in files list generators only; the
closure appropriate to the semantics is applied when behaviours are
computed.

Besides the graded pipeline (n-step behaviour maps and per-depth
comparison) this module has classical fixpoint oracles: partition
refinement for bisimilarity and a greatest-fixpoint simulation check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .behaviours import (
    Behaviour,
    Semantics,
    beh_leq,
    m_unit,
    node,
    ptrace_node,
    sync_dead,
)
from .posets import FinPoset, ONE, UNIT, discrete_poset, validate_poset
from .subdist import (
    MassExceedsOne,
    SubDist,
    ZERO,
    parse_rational,
    sdist_leq_flow,
)


class SystemError_(ValueError):
    pass


class SchemaError(SystemError_):
    pass


class NotMonotone(SystemError_):
    pass


class UnknownState(SystemError_):
    pass


class LabelMismatch(SystemError_):
    pass


class NotDiscrete(SystemError_):
    pass


DEAD_LABEL = ("deadmark",)


@dataclass(frozen=True)
class System:
    states: FinPoset
    labels: Tuple
    kind: str  # "lts" | "pts"
    transitions: Tuple[Tuple[object, Tuple], ...]  # state -> tuple of edges

    def edges(self, x) -> Tuple:
        self.states.index(x)
        for state, out in self.transitions:
            if state == x:
                return out
        return ()

    def out_mass(self, x) -> Fraction:
        return sum((p for _, _, p in self.edges(x)), ZERO)


def make_system(
    states: Iterable,
    order: Iterable[Tuple],
    labels: Iterable,
    edges: Iterable[Tuple],
    kind: str = "lts",
) -> System:
    poset = validate_poset(states, order)
    labs = tuple(sorted(set(labels), key=repr))
    trans: Dict[object, List] = {s: [] for s in poset.elements}
    for edge in edges:
        if kind == "lts":
            a, src, dst = edge[0], edge[1], edge[2]
            if src not in poset or dst not in poset:
                raise UnknownState(f"transition endpoint missing: {edge!r}")
            if a not in labs:
                raise SchemaError(f"unknown label {a!r}")
            trans[src].append((a, dst))
        else:
            a, src, dst, p = edge[0], edge[1], edge[2], Fraction(edge[3])
            if src not in poset or dst not in poset:
                raise UnknownState(f"transition endpoint missing: {edge!r}")
            if a not in labs:
                raise SchemaError(f"unknown label {a!r}")
            if p <= 0 or p > 1:
                raise SchemaError(f"probability {p} outside (0, 1]")
            trans[src].append((a, dst, p))
    sys_ = System(
        poset,
        labs,
        kind,
        tuple((s, tuple(sorted(trans[s], key=repr))) for s in poset.elements),
    )
    if kind == "pts":
        for s in poset.elements:
            if sys_.out_mass(s) > 1:
                raise MassExceedsOne(f"state {s!r} has outgoing mass {sys_.out_mass(s)}")
    return sys_


def load_system(doc: Dict, sem: Semantics, validate: bool = True) -> System:
    """Build a System from its JSON document form and validate it for the
    given semantics."""
    if not isinstance(doc, dict):
        raise SchemaError("system document must be an object")
    kind = doc.get("type")
    if kind not in ("lts", "pts"):
        raise SchemaError('system "type" must be "lts" or "pts"')
    for key in ("states", "labels", "transitions"):
        if key not in doc or not isinstance(doc[key], list):
            raise SchemaError(f'missing or malformed "{key}" list')
    order = doc.get("order", [])
    if not isinstance(order, list) or any(
        not isinstance(p, list) or len(p) != 2 for p in order
    ):
        raise SchemaError('"order" must be a list of [below, above] pairs')
    edges = []
    for tr in doc["transitions"]:
        if not isinstance(tr, dict) or not {"from", "label", "to"} <= set(tr):
            raise SchemaError(f"malformed transition {tr!r}")
        if kind == "lts":
            edges.append((tr["label"], tr["from"], tr["to"]))
        else:
            if "prob" not in tr:
                raise SchemaError(f"pts transition without prob: {tr!r}")
            prob = tr["prob"]
            edges.append(
                (
                    tr["label"],
                    tr["from"],
                    tr["to"],
                    parse_rational(prob) if isinstance(prob, str) else Fraction(prob),
                )
            )
    sys_ = make_system(doc["states"], [tuple(p) for p in order], doc["labels"], edges, kind)
    if (sem.kind == "ptrace") != (kind == "pts"):
        raise SchemaError(f'system type "{kind}" does not fit semantics {sem.kind!r}')
    if validate:
        validate_monotone(sys_, sem)
    return sys_


def validate_monotone(sys_: System, sem: Semantics) -> None:
    """Check that the transition map is monotone for the semantics' functor."""
    states = sys_.states
    for x, y in states.strict_pairs():
        if sem.kind == "sim":
            if not _sim_edge_leq(sys_, x, y):
                raise NotMonotone(
                    f"{x!r} <= {y!r} but {y!r} does not dominate {x!r}'s transitions"
                )
        elif sem.kind in ("bisim", "sync"):
            if not _em_edge_leq(sys_, x, y, require_same_deadlock=sem.kind == "sync"):
                raise NotMonotone(
                    f"{x!r} <= {y!r} but the transition sets are not Egli-Milner ordered"
                )
        elif sem.kind == "readysim":
            if not _sim_edge_leq(transform_ready(sys_), x, y):
                raise NotMonotone(
                    f"{x!r} <= {y!r} fails ready-set domination"
                )
        elif sem.kind == "ptrace":
            if not _pts_edge_leq(sys_, x, y):
                raise NotMonotone(
                    f"{x!r} <= {y!r} but the outgoing subdistributions are unordered"
                )


def _sim_edge_leq(sys_: System, x, y) -> bool:
    ey = sys_.edges(y)
    return all(
        any(a == b and sys_.states.leq(x2, y2) for b, y2 in ey)
        for a, x2 in sys_.edges(x)
    )


def _em_edge_leq(sys_: System, x, y, require_same_deadlock: bool) -> bool:
    ex, ey = sys_.edges(x), sys_.edges(y)
    if require_same_deadlock and (not ex) != (not ey):
        return False
    fwd = all(
        any(a == b and sys_.states.leq(x2, y2) for b, y2 in ey) for a, x2 in ex
    )
    bwd = all(
        any(a == b and sys_.states.leq(x2, y2) for a, x2 in ex) for b, y2 in ey
    )
    return fwd and bwd


def _pts_edge_leq(sys_: System, x, y) -> bool:
    from .posets import product_with_discrete

    ambient = product_with_discrete(sys_.labels, sys_.states)
    acc_x: Dict = {}
    for a, x2, p in sys_.edges(x):
        acc_x[(a, x2)] = acc_x.get((a, x2), ZERO) + p
    acc_y: Dict = {}
    for a, y2, p in sys_.edges(y):
        acc_y[(a, y2)] = acc_y.get((a, y2), ZERO) + p
    return sdist_leq_flow(
        ambient, SubDist.make(ambient, acc_x), SubDist.make(ambient, acc_y)
    )


# ---------------------------------------------------------------------------
# ready-simulation transformation

READY_SINK = "__sink__"


def transform_ready(sys_: System) -> System:
    """Recode an LTS over the alphabet of (ready-set, action) pairs plus a
    deadlock marker; ready similarity is then plain similarity."""
    if sys_.kind != "lts":
        raise SchemaError("ready similarity applies to nondeterministic systems")
    states = list(sys_.states.elements)
    if READY_SINK in sys_.states:
        raise SchemaError(f"state name {READY_SINK!r} is reserved")
    new_states = states + [READY_SINK]
    order = list(sys_.states.strict_pairs())
    edges = []
    labels: Set = {DEAD_LABEL}
    for s in states:
        out = sys_.edges(s)
        if out:
            ready = frozenset(a for a, _ in out)
            tag = ("rdy", tuple(sorted(ready, key=repr)))
            for a, t in out:
                lab = ("rdy", tag[1], a)
                labels.add(lab)
                edges.append((lab, s, t))
        else:
            edges.append((DEAD_LABEL, s, READY_SINK))
    return make_system(new_states, order, labels, edges, "lts")


# ---------------------------------------------------------------------------
# behaviour maps

class BehaviourMap:
    """Memoized n-step behaviours of a system's states over base 1."""

    def __init__(self, sem: Semantics, sys_: System):
        self.sem = sem
        if sem.kind == "readysim":
            self.sys = transform_ready(sys_)
        else:
            self.sys = sys_
        self._memo: Dict[Tuple[object, int], Behaviour] = {}

    def at(self, x, n: int) -> Behaviour:
        self.sys.states.index(x)
        key = (x, n)
        if key in self._memo:
            return self._memo[key]
        sem = self.sem
        kind = sem.layer_kind
        if n == 0:
            out = m_unit(sem, UNIT)
        elif kind in ("bisim", "sim"):
            out = node(
                kind,
                n,
                [(a, self.at(y, n - 1)) for a, y in self.sys.edges(x)],
            )
        elif kind == "sync":
            edges = self.sys.edges(x)
            if not edges:
                out = sync_dead(n)
            else:
                out = node("sync", n, [(a, self.at(y, n - 1)) for a, y in edges])
        elif kind == "ptrace":
            acc: Dict = {}
            for a, y, p in self.sys.edges(x):
                child = self.at(y, n - 1)
                for (word, leaf), q in child.payload:
                    key2 = ((a,) + word, leaf)
                    acc[key2] = acc.get(key2, ZERO) + p * q
            out = ptrace_node(n, acc)
        else:
            raise SystemError_(kind)
        self._memo[key] = out
        return out


def n_step_behaviour(sem: Semantics, sys_: System, x, n: int) -> Behaviour:
    if x not in sys_.states:
        raise UnknownState(f"unknown state {x!r}")
    return BehaviourMap(sem, sys_).at(x, n)


@dataclass(frozen=True)
class RefinementVerdict:
    depths: Tuple[bool, ...]  # holds(n) for n = 0..N

    @property
    def holds_all(self) -> bool:
        return all(self.depths)

    @property
    def first_failure(self) -> Optional[int]:
        for n, ok in enumerate(self.depths):
            if not ok:
                return n
        return None


def refines(
    sem: Semantics, sys_a: System, x, sys_b: System, y, depth: int
) -> RefinementVerdict:
    """Per-depth check that y's n-step behaviours dominate x's."""
    if set(sys_a.labels) != set(sys_b.labels):
        raise LabelMismatch(
            f"label sets differ: {sys_a.labels!r} vs {sys_b.labels!r}"
        )
    if x not in sys_a.states:
        raise UnknownState(f"unknown state {x!r}")
    if y not in sys_b.states:
        raise UnknownState(f"unknown state {y!r}")
    beh_a = BehaviourMap(sem, sys_a)
    beh_b = BehaviourMap(sem, sys_b)
    results = []
    for n in range(depth + 1):
        results.append(beh_leq(beh_a.at(x, n), beh_b.at(y, n)))
    return RefinementVerdict(tuple(results))


def default_depth(sys_a: System, sys_b: System) -> int:
    return len(sys_a.states) * len(sys_b.states)


# ---------------------------------------------------------------------------
# classical oracles

def classical_bisim(sys_: System) -> Dict[object, FrozenSet]:
    """Coarsest strong-bisimulation partition of a discrete LTS, by
    partition refinement on successor signatures."""
    if sys_.kind != "lts":
        raise SchemaError("partition refinement applies to an LTS")
    if not sys_.states.is_discrete():
        raise NotDiscrete("classical bisimilarity needs a discretely ordered LTS")
    states = list(sys_.states.elements)
    block: Dict[object, int] = {s: 0 for s in states}
    while True:
        signatures = {
            s: frozenset((a, block[t]) for a, t in sys_.edges(s)) for s in states
        }
        keys = {}
        new_block = {}
        for s in states:
            key = (block[s], signatures[s])
            if key not in keys:
                keys[key] = len(keys)
            new_block[s] = keys[key]
        if new_block == block:
            break
        block = new_block
    groups: Dict[int, Set] = {}
    for s, b in block.items():
        groups.setdefault(b, set()).add(s)
    return {s: frozenset(groups[block[s]]) for s in states}


def classical_sim(sys_a: System, sys_b: System) -> FrozenSet[Tuple]:
    """Greatest simulation between two (possibly ordered) LTS, as a set of
    pairs (x, y) meaning y simulates x.  Successor sets are read through
    their down-closures, so the state orders seed the fixpoint."""
    if sys_a.kind != "lts" or sys_b.kind != "lts":
        raise SchemaError("simulation oracle applies to LTS")
    if set(sys_a.labels) != set(sys_b.labels):
        raise LabelMismatch("label sets differ")

    def closed_edges(sys_: System, x) -> FrozenSet:
        return frozenset(
            (a, y2)
            for a, y in sys_.edges(x)
            for y2 in sys_.states.elements
            if sys_.states.leq(y2, y)
        )

    succ_a = {x: closed_edges(sys_a, x) for x in sys_a.states.elements}
    succ_b = {y: closed_edges(sys_b, y) for y in sys_b.states.elements}
    rel: Set[Tuple] = {
        (x, y) for x in sys_a.states.elements for y in sys_b.states.elements
    }
    changed = True
    while changed:
        changed = False
        for x, y in sorted(rel, key=repr):
            ok = all(
                any(a == b and (x2, y2) in rel for b, y2 in succ_b[y])
                for a, x2 in succ_a[x]
            )
            if not ok:
                rel.discard((x, y))
                changed = True
    return frozenset(rel)


def trace_dist(sys_: System, x, n: int) -> SubDist:
    """Distribution on length-n label words by summing over all paths."""
    if sys_.kind != "pts":
        raise SchemaError("trace distributions apply to a PTS")
    if x not in sys_.states:
        raise UnknownState(f"unknown state {x!r}")
    dist: Dict[Tuple, Fraction] = {(): Fraction(1)}
    frontier: Dict[Tuple[Tuple, object], Fraction] = {((), x): Fraction(1)}
    for _ in range(n):
        nxt: Dict[Tuple[Tuple, object], Fraction] = {}
        for (word, state), p in frontier.items():
            for a, y, q in sys_.edges(state):
                key = (word + (a,), y)
                nxt[key] = nxt.get(key, ZERO) + p * q
        frontier = nxt
    acc: Dict[Tuple, Fraction] = {}
    for (word, _), p in frontier.items():
        acc[word] = acc.get(word, ZERO) + p
    support = discrete_poset(list(acc) or [()])
    return SubDist.make(support, acc)


def lts_traces(sys_: System, x, n: int) -> FrozenSet[Tuple]:
    """The set of length-n label words enabled from x (LTS trace oracle)."""
    if sys_.kind != "lts":
        raise SchemaError("trace sets apply to an LTS")
    frontier = {x}
    words: Set[Tuple] = {()}
    current: Dict[Tuple, Set] = {(): {x}}
    for _ in range(n):
        nxt: Dict[Tuple, Set] = {}
        for word, states in current.items():
            for s in states:
                for a, t in sys_.edges(s):
                    nxt.setdefault(word + (a,), set()).add(t)
        current = nxt
    return frozenset(current)


def union_system(sys_a: System, sys_b: System, tag_a="A", tag_b="B") -> Tuple[System, Dict, Dict]:
    """Disjoint union with renamed states (for cross-system oracles)."""
    if sys_a.kind != sys_b.kind:
        raise SchemaError("cannot join systems of different kinds")
    ren_a = {s: f"{tag_a}:{s}" for s in sys_a.states.elements}
    ren_b = {s: f"{tag_b}:{s}" for s in sys_b.states.elements}
    states = list(ren_a.values()) + list(ren_b.values())
    order = [(ren_a[x], ren_a[y]) for x, y in sys_a.states.strict_pairs()] + [
        (ren_b[x], ren_b[y]) for x, y in sys_b.states.strict_pairs()
    ]
    edges = []
    for s in sys_a.states.elements:
        for e in sys_a.edges(s):
            if sys_a.kind == "lts":
                edges.append((e[0], ren_a[s], ren_a[e[1]]))
            else:
                edges.append((e[0], ren_a[s], ren_a[e[1]], e[2]))
    for s in sys_b.states.elements:
        for e in sys_b.edges(s):
            if sys_b.kind == "lts":
                edges.append((e[0], ren_b[s], ren_b[e[1]]))
            else:
                edges.append((e[0], ren_b[s], ren_b[e[1]], e[2]))
    labels = set(sys_a.labels) | set(sys_b.labels)
    return (
        make_system(states, order, labels, edges, sys_a.kind),
        ren_a,
        ren_b,
    )


def random_lts(rng, n_states: int, labels: Sequence, edge_prob: float = 0.4) -> System:
    states = [f"s{i}" for i in range(n_states)]
    edges = [
        (a, s, t)
        for s in states
        for a in labels
        for t in states
        if rng.random() < edge_prob
    ]
    return make_system(states, [], labels, edges, "lts")


def random_pts(rng, n_states: int, labels: Sequence, max_denominator: int = 6) -> System:
    states = [f"s{i}" for i in range(n_states)]
    edges = []
    for s in states:
        budget = Fraction(1)
        for _ in range(rng.randrange(0, 3)):
            if budget <= 0:
                break
            d = rng.randrange(2, max_denominator + 1)
            k = rng.randrange(1, d + 1)
            p = min(Fraction(k, d), budget)
            edges.append((rng.choice(list(labels)), s, rng.choice(states), p))
            budget -= p
    return make_system(states, [], labels, edges, "pts")
