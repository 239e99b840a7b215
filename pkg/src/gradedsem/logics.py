"""Graded modal logics: syntax, evaluation, and distinguishing formulas.

A logic fixes a truth lattice, truth constants, propositional operators,
and modalities; formulas have a uniform depth (constants that double as
0-ary propositional operators float, like constants in terms).

Built-in logics:

* ``hml``     -- tt, ff, and/or, <a>, [a] over {false < true}; bisimilarity.
* ``pos-hml`` -- tt, and, <a>; similarity (plus ready-set diamonds
  ``dia(a,{...})`` and ``<dead>`` over the ready-similarity alphabet).
* ``sync``    -- like hml, but tt/ff occur at depth 0 only and the truth
  lattice carries an extra deadlock point incomparable to both booleans.
* ``prob``    -- tt and expected-value diamonds <a> over exact rationals
  in [0, 1]; probabilistic trace inclusion.

Evaluation is structural recursion over behaviour normal forms; the
defining property (the modality square through the canonical algebra)
is checked by the test-suite, not used as the algorithm.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .behaviours import (
    Behaviour,
    Semantics,
    beh_leq,
    enumerate_mn1,
    m_mult,
)
from .posets import UNIT
from .subdist import ZERO, format_rational
from .systems import DEAD_LABEL, BehaviourMap, System, refines

TT = "tt"
FF = "ff"


class LogicError(ValueError):
    pass


class ParseError(LogicError):
    pass


class NonUniformDepth(ParseError):
    pass


class UnknownSymbol(ParseError):
    pass


class IncompatibleLogic(LogicError):
    pass


class NoWitnessWithinBounds(LogicError):
    pass


class _Dead:
    __slots__ = ()

    def __repr__(self):
        return "dead"


DEAD = _Dead()


def omega_leq(lattice: str, v, w) -> bool:
    if lattice == "two":
        return (not v) or w
    if lattice == "two_dead":
        if isinstance(v, _Dead) or isinstance(w, _Dead):
            return isinstance(v, _Dead) and isinstance(w, _Dead)
        return (not v) or w
    if lattice == "unit":
        return v <= w
    raise LogicError(f"unknown lattice {lattice!r}")


def format_omega(v) -> str:
    if isinstance(v, _Dead):
        return "dead"
    if isinstance(v, bool):
        return "true" if v else "false"
    return format_rational(v)


@dataclass(frozen=True)
class Formula:
    kind: str  # "const" | "prop" | "modal"
    name: Tuple  # ("tt",) / ("and",) / ("dia", a) / ("box", a)
    args: Tuple["Formula", ...] = ()

    @property
    def size(self) -> int:
        return 1 + sum(a.size for a in self.args)


def const(name: str) -> Formula:
    return Formula("const", (name,))


def conj(args: Sequence[Formula]) -> Formula:
    args = tuple(sorted(set(args), key=format_formula))
    if not args:
        return const(TT)
    if len(args) == 1:
        return args[0]
    return Formula("prop", ("and",), args)


def disj(args: Sequence[Formula]) -> Formula:
    args = tuple(sorted(set(args), key=format_formula))
    if not args:
        return const(FF)
    if len(args) == 1:
        return args[0]
    return Formula("prop", ("or",), args)


def modal(name: Tuple, arg: Formula) -> Formula:
    return Formula("modal", name, (arg,))


def format_formula(phi: Formula) -> str:
    if phi.kind == "const":
        return phi.name[0]
    if phi.kind == "prop":
        sep = " & " if phi.name[0] == "and" else " | "
        return "(" + sep.join(format_formula(a) for a in phi.args) + ")"
    tag = phi.name[0]
    if tag == "dia":
        head = f"<{phi.name[1]}>"
    elif tag == "box":
        head = f"[{phi.name[1]}]"
    elif tag == "rdia":
        head = f"dia({phi.name[1]},{{{','.join(map(str, phi.name[2]))}}})"
    elif tag == "ddia":
        head = "<dead>"
    elif tag == "pdia":
        head = f"<{phi.name[1]}>"
    else:
        raise LogicError(f"unknown modality {phi.name!r}")
    return f"{head} {format_formula(phi.args[0])}"


@dataclass(frozen=True)
class LogicSpec:
    name: str
    labels: Tuple
    lattice: str  # "two" | "two_dead" | "unit"
    constants: Tuple[str, ...]
    floating_consts: FrozenSet[str]  # constants that are also 0-ary prop ops
    prop_ops: Tuple[str, ...]
    modal_tags: Tuple[str, ...]
    sem_kinds: Tuple[str, ...]
    allow_negation: bool = False

    def modalities(self, sem: Semantics) -> List[Tuple]:
        """The modality names available over a semantics' alphabet."""
        out: List[Tuple] = []
        labels = sem.labels if sem else self.labels
        for tag in self.modal_tags:
            if tag in ("dia", "box", "pdia"):
                out.extend((tag, a) for a in labels)
        if sem and sem.kind == "readysim" and "dia" in self.modal_tags:
            out = []
            for lab in _transformed_labels(sem)[0]:
                out.append(("rdia", lab[2], lab[1]))
            out.append(("ddia",))
        return out


def _transformed_labels(sem: Semantics) -> Tuple[List[Tuple], bool]:
    rdy = sorted(
        (lab for lab in sem.labels if isinstance(lab, tuple) and lab[0] == "rdy"),
        key=repr,
    )
    return rdy, DEAD_LABEL in sem.labels


def builtin_logic(name: str, labels: Iterable) -> LogicSpec:
    labels = tuple(sorted(set(labels), key=repr))
    if not labels:
        raise LogicError("label set must be nonempty")
    key = name.strip().lower().replace("-", "_")
    if key == "hml":
        return LogicSpec(
            "hml", labels, "two", (TT, FF), frozenset({TT, FF}),
            ("and", "or"), ("dia", "box"), ("bisim",), allow_negation=True,
        )
    if key in ("pos_hml", "poshml"):
        return LogicSpec(
            "pos-hml", labels, "two", (TT,), frozenset({TT}),
            ("and",), ("dia",), ("sim", "readysim"),
        )
    if key == "sync":
        return LogicSpec(
            "sync", labels, "two_dead", (TT, FF), frozenset(),
            ("and", "or"), ("dia", "box"), ("sync",),
        )
    if key == "prob":
        return LogicSpec(
            "prob", labels, "unit", (TT,), frozenset(),
            (), ("pdia",), ("ptrace",),
        )
    raise LogicError(f"unknown builtin logic {name!r}")


DEFAULT_LOGIC = {
    "bisim": "hml",
    "sim": "pos-hml",
    "readysim": "pos-hml",
    "sync": "sync",
    "ptrace": "prob",
}


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(tt|ff|dia|<dead>|&|\||!|<|>|\[|\]|\(|\)|\{|\}|,|[A-Za-z_][A-Za-z_0-9]*)"
)


def _tokenize(text: str) -> List[str]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ParseError(f"unexpected input at {text[pos:]!r}")
            break
        out.append(m.group(1))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens: List[str], logic: LogicSpec):
        self.toks = tokens
        self.i = 0
        self.logic = logic

    def peek(self) -> Optional[str]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expect: str = None) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of formula")
        if expect is not None and tok != expect:
            raise ParseError(f"expected {expect!r}, found {tok!r}")
        self.i += 1
        return tok

    def formula(self) -> Formula:
        lhs = self.conjunct()
        if self.peek() == "|":
            if "or" not in self.logic.prop_ops:
                raise UnknownSymbol("disjunction is not in this logic")
            parts = [lhs]
            while self.peek() == "|":
                self.take()
                parts.append(self.conjunct())
            return disj(parts)
        return lhs

    def conjunct(self) -> Formula:
        lhs = self.atom()
        if self.peek() == "&":
            if "and" not in self.logic.prop_ops:
                raise UnknownSymbol("conjunction is not in this logic")
            parts = [lhs]
            while self.peek() == "&":
                self.take()
                parts.append(self.atom())
            return conj(parts)
        return lhs

    def atom(self) -> Formula:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of formula")
        if tok == "(":
            self.take()
            phi = self.formula()
            self.take(")")
            return phi
        if tok == "!":
            if not self.logic.allow_negation:
                raise UnknownSymbol("negation is not in this logic")
            self.take()
            return _negate(self.atom())
        if tok == "tt":
            self.take()
            return const(TT)
        if tok == "ff":
            self.take()
            if FF not in self.logic.constants:
                raise UnknownSymbol("ff is not in this logic")
            return const(FF)
        if tok == "<":
            self.take()
            label = self.take()
            self.take(">")
            self._check_label(label)
            tag = "pdia" if "pdia" in self.logic.modal_tags else "dia"
            if tag == "dia" and "dia" not in self.logic.modal_tags:
                raise UnknownSymbol("diamond is not in this logic")
            return modal((tag, label), self.atom())
        if tok == "<dead>":
            self.take()
            return modal(("ddia",), self.atom())
        if tok == "[":
            self.take()
            label = self.take()
            self.take("]")
            if "box" not in self.logic.modal_tags:
                raise UnknownSymbol("box is not in this logic")
            self._check_label(label)
            return modal(("box", label), self.atom())
        if tok == "dia":
            self.take()
            self.take("(")
            label = self.take()
            self.take(",")
            self.take("{")
            ready = []
            while self.peek() != "}":
                ready.append(self.take())
                if self.peek() == ",":
                    self.take()
            self.take("}")
            self.take(")")
            return modal(("rdia", label, tuple(sorted(ready))), self.atom())
        raise ParseError(f"unexpected token {tok!r}")

    def _check_label(self, label: str) -> None:
        flat = {str(l) for l in self.logic.labels}
        if label not in flat:
            raise UnknownSymbol(f"unknown label {label!r}")


def _negate(phi: Formula) -> Formula:
    """Negation normal form rewrite (hml only)."""
    if phi.kind == "const":
        return const(FF if phi.name[0] == TT else TT)
    if phi.kind == "prop":
        if phi.name[0] == "and":
            return disj([_negate(a) for a in phi.args])
        return conj([_negate(a) for a in phi.args])
    tag = phi.name[0]
    if tag == "dia":
        return modal(("box", phi.name[1]), _negate(phi.args[0]))
    if tag == "box":
        return modal(("dia", phi.name[1]), _negate(phi.args[0]))
    raise UnknownSymbol("negation does not apply to this modality")


def depth_profile(logic: LogicSpec, phi: Formula) -> Tuple[int, bool]:
    """(minimal uniform depth, floats?)."""
    if phi.kind == "const":
        return 0, phi.name[0] in logic.floating_consts
    if phi.kind == "prop":
        profiles = [depth_profile(logic, a) for a in phi.args]
        rigid = [d for d, fl in profiles if not fl]
        if rigid:
            m = rigid[0]
            if any(d != m for d in rigid) or any(
                fl and d > m for d, fl in profiles
            ):
                raise NonUniformDepth("operands do not share a uniform depth")
            return m, False
        return max(d for d, _ in profiles), True
    d, fl = depth_profile(logic, phi.args[0])
    return d + 1, fl


def uniform_depth(logic: LogicSpec, phi: Formula) -> int:
    return depth_profile(logic, phi)[0]


def parse_formula(text: str, logic: LogicSpec) -> Formula:
    parser = _Parser(_tokenize(text), logic)
    phi = parser.formula()
    if parser.peek() is not None:
        raise ParseError(f"trailing input at {parser.peek()!r}")
    depth_profile(logic, phi)  # raises NonUniformDepth on bad shapes
    return phi


# ---------------------------------------------------------------------------
# evaluation

def evaluate(logic: LogicSpec, phi: Formula, b: Behaviour):
    """Value of a formula on a depth-n behaviour over the one-point base."""
    dmin, flexible = depth_profile(logic, phi)
    if b.depth != dmin and not (flexible and b.depth >= dmin):
        raise IncompatibleLogic(
            f"formula of depth {dmin} evaluated on a depth-{b.depth} behaviour"
        )
    return _eval(logic, phi, b)


def _eval(logic: LogicSpec, phi: Formula, b: Behaviour):
    if logic.lattice == "unit":
        return sum(
            (w * _point_value(phi, word) for (word, _), w in b.payload), ZERO
        )
    if phi.kind == "const":
        if b.kind == "sync" and b.is_dead:
            return DEAD
        return phi.name[0] == TT
    if phi.kind == "prop":
        vals = [_eval(logic, a, b) for a in phi.args]
        if any(isinstance(v, _Dead) for v in vals):
            return DEAD
        return all(vals) if phi.name[0] == "and" else any(vals)
    # modal
    if b.kind == "sync":
        if b.is_dead:
            return DEAD
        pairs = b.payload[1]
    else:
        pairs = b.payload
    return _modal_on_pairs(
        logic, phi.name, [(lab, _eval(logic, phi.args[0], c)) for lab, c in pairs]
    )


def _point_value(phi: Formula, word: Tuple) -> Fraction:
    """Trace-logic value on a point mass at the given word."""
    if phi.kind == "const":
        return Fraction(1)
    tag, label = phi.name
    if word and word[0] == label:
        return _point_value(phi.args[0], word[1:])
    return ZERO


def _modal_on_pairs(logic: LogicSpec, name: Tuple, pairs: List[Tuple]):
    """The modality's action on a layer of (label, truth value) pairs."""
    if logic.lattice == "two_dead":
        live = [(lab, v) for lab, v in pairs if not isinstance(v, _Dead)]
        if not live:
            return DEAD
        pairs = live
    tag = name[0]
    if tag == "dia":
        return any(lab == name[1] and v for lab, v in pairs)
    if tag == "box":
        return not any(lab == name[1] and not v for lab, v in pairs)
    if tag == "rdia":
        want = ("rdy", name[2], name[1])
        return any(lab == want and v for lab, v in pairs)
    if tag == "ddia":
        return any(lab == DEAD_LABEL and v for lab, v in pairs)
    raise LogicError(f"unknown modality {name!r}")


def raw_modal_apply(logic: LogicSpec, name: Tuple, layer):
    """The modality as a map M_1(Omega) -> Omega.

    ``layer`` is ("dead",), a collection of (label, value) pairs, or for
    the trace logic a collection of ((label, value), weight) triples.
    """
    if logic.lattice == "unit":
        tag, label = name
        return sum(
            (w * v for (lab, v), w in layer if lab == label), ZERO
        )
    if layer == ("dead",):
        return DEAD
    return _modal_on_pairs(logic, name, list(layer))


def check_compatible(logic: LogicSpec, sem: Semantics) -> None:
    if sem.kind not in logic.sem_kinds:
        raise IncompatibleLogic(
            f"logic {logic.name!r} does not fit semantics {sem.kind!r}"
        )


def eval_on_mn1(
    logic: LogicSpec, sem: Semantics, phi: Formula, carrier: Sequence[Behaviour] = None
):
    """The evaluation map on the depth-n behaviour space: a dict for
    enumerable semantics, a callable for the trace semantics."""
    check_compatible(logic, sem)
    if sem.kind == "ptrace":
        return lambda b: evaluate(logic, phi, b)
    n = uniform_depth(logic, phi)
    if carrier is None:
        carrier = enumerate_mn1(sem, n)
    return {b: evaluate(logic, phi, b) for b in carrier}


def eval_in_system(
    logic: LogicSpec, sem: Semantics, phi: Formula, sys_: System, x
):
    check_compatible(logic, sem)
    n = uniform_depth(logic, phi)
    return evaluate(logic, phi, BehaviourMap(sem, sys_).at(x, n))


# ---------------------------------------------------------------------------
# formula families by value vector

class _VectorLevel:
    """Depth-n formulas deduplicated by their value tuple on a fixed list
    of depth-n behaviours.  For two-valued lattices vectors are bitmasks
    over the live positions."""

    def __init__(self, positions: List[Behaviour]):
        self.positions = positions
        self.index = {b: i for i, b in enumerate(positions)}
        self.dead_mask = sum(
            1 << i for i, b in enumerate(positions) if b.kind == "sync" and b.is_dead
        )
        self.entries: List[Tuple[int, Formula]] = []
        self._seen: Set[int] = set()

    def add(self, mask: int, phi: Formula) -> bool:
        if mask in self._seen:
            return False
        self._seen.add(mask)
        self.entries.append((mask, phi))
        return True


def _vector_of_const(level: _VectorLevel, name: str) -> int:
    if name == TT:
        return (1 << len(level.positions)) - 1 & ~level.dead_mask
    return 0


def _modal_vector(
    logic: LogicSpec,
    name: Tuple,
    level: _VectorLevel,
    prev: _VectorLevel,
    prev_mask: int,
) -> int:
    mask = 0
    for i, b in enumerate(level.positions):
        if b.kind == "sync":
            if b.is_dead:
                continue
            pairs = b.payload[1]
        else:
            pairs = b.payload
        vals = []
        for lab, child in pairs:
            j = prev.index[child]
            if prev.dead_mask >> j & 1:
                vals.append((lab, DEAD))
            else:
                vals.append((lab, bool(prev_mask >> j & 1)))
        v = _modal_on_pairs(logic, name, vals)
        if v is True:
            mask |= 1 << i
    return mask


def _close_under_props(logic: LogicSpec, level: _VectorLevel, cap: int) -> None:
    changed = True
    while changed and len(level.entries) < cap:
        changed = False
        snapshot = list(level.entries)
        for (m1, f1), (m2, f2) in itertools.combinations(snapshot, 2):
            if "and" in logic.prop_ops:
                if level.add(m1 & m2, conj([f1, f2])):
                    changed = True
            if "or" in logic.prop_ops:
                if level.add(m1 | m2, disj([f1, f2])):
                    changed = True
            if len(level.entries) >= cap:
                return


def formula_levels(
    logic: LogicSpec,
    sem: Semantics,
    positions_by_depth: List[List[Behaviour]],
    cap: int = 4096,
) -> List[_VectorLevel]:
    """For each depth n, all realizable evaluation vectors on the given
    behaviours, each with a representative formula.  Complete for the
    two-valued lattices (up to the cap): every formula's vector appears."""
    check_compatible(logic, sem)
    mods = logic.modalities(sem)
    levels: List[_VectorLevel] = []
    for n, positions in enumerate(positions_by_depth):
        level = _VectorLevel(positions)
        if n == 0:
            for c in logic.constants:
                level.add(_vector_of_const(level, c), const(c))
        else:
            for c in sorted(logic.floating_consts):
                level.add(_vector_of_const(level, c), const(c))
            for mask, phi in levels[n - 1].entries:
                for name in mods:
                    level.add(
                        _modal_vector(logic, name, level, levels[n - 1], mask),
                        modal(name, phi),
                    )
        _close_under_props(logic, level, cap)
        levels.append(level)
    return levels


def _trace_formulas(labels: Tuple, n: int) -> List[Formula]:
    out = []
    for word in itertools.product(labels, repeat=n):
        phi = const(TT)
        for a in reversed(word):
            phi = modal(("pdia", a), phi)
        out.append(phi)
    return out


def theory_included(
    logic: LogicSpec,
    sem: Semantics,
    sys_a: System,
    x,
    sys_b: System,
    y,
    depth: int,
    cap: int = 4096,
) -> Tuple[bool, Optional[Formula]]:
    """Whether every formula value at x is below its value at y, scanning
    uniform depths 0..depth; returns a counterexample formula if not."""
    check_compatible(logic, sem)
    beh_a = BehaviourMap(sem, sys_a)
    beh_b = BehaviourMap(sem, sys_b)
    if logic.lattice == "unit":
        for n in range(depth + 1):
            bx, by = beh_a.at(x, n), beh_b.at(y, n)
            for phi in _trace_formulas(tuple(sem.labels), n):
                if not omega_leq("unit", evaluate(logic, phi, bx), evaluate(logic, phi, by)):
                    return False, phi
        return True, None
    positions_by_depth = []
    for n in range(depth + 1):
        seen, positions = set(), []
        for sys_, beh in ((sys_a, beh_a), (sys_b, beh_b)):
            for z in sys_.states.elements:
                b = beh.at(z, n)
                if b not in seen:
                    seen.add(b)
                    positions.append(b)
            if sem.kind == "readysim":
                for z in beh.sys.states.elements:
                    b = beh.at(z, n)
                    if b not in seen:
                        seen.add(b)
                        positions.append(b)
        positions_by_depth.append(positions)
    levels = formula_levels(logic, sem, positions_by_depth, cap)
    for n, level in enumerate(levels):
        bx, by = beh_a.at(x, n), beh_b.at(y, n)
        ix, iy = level.index[bx], level.index[by]
        dead_x = bool(level.dead_mask >> ix & 1)
        dead_y = bool(level.dead_mask >> iy & 1)
        if dead_x != dead_y:
            if level.entries:
                return False, level.entries[0][1]
            continue
        if dead_x:
            continue
        for mask, phi in level.entries:
            if mask >> ix & 1 and not mask >> iy & 1:
                return False, phi
    return True, None


# ---------------------------------------------------------------------------
# distinguishing formulas

def _label_modality(label) -> Tuple:
    if label == DEAD_LABEL:
        return ("ddia",)
    if isinstance(label, tuple) and label[0] == "rdy":
        return ("rdia", label[2], label[1])
    return ("dia", label)


def _sim_witness(b1: Behaviour, b2: Behaviour) -> Formula:
    """Constructive separation for down-set layers: pick an undominated
    generator and conjoin recursive witnesses against all same-label
    blockers."""
    assert b1.depth >= 1
    for a, c1 in sorted(b1.payload, key=repr):
        blockers = [c2 for b, c2 in b2.payload if b == a]
        if all(not beh_leq(c1, c2) for c2 in blockers):
            sub = [_sim_witness(c1, c2) for c2 in blockers]
            return modal(_label_modality(a), conj(sub))
    raise NoWitnessWithinBounds("no undominated successor; layers are ordered")


def _any_formula(logic: LogicSpec, sem: Semantics, depth: int) -> Formula:
    phi = const(TT)
    name = logic.modalities(sem)[0]
    for _ in range(depth):
        phi = modal(name, phi)
    return phi


def _em_witness(b1: Behaviour, b2: Behaviour) -> Formula:
    """Constructive separation for Egli-Milner layers (bisim and live sync
    layers): returns a formula true at b1 and false at b2.  Children of
    sync layers are live, so the recursion never crosses a deadlock."""
    assert b1.depth >= 1 and not b1.is_dead and not b2.is_dead
    pairs1 = b1.payload[1] if b1.kind == "sync" else b1.payload
    pairs2 = b2.payload[1] if b2.kind == "sync" else b2.payload
    for a, c1 in sorted(pairs1, key=repr):
        blockers = [c2 for b, c2 in pairs2 if b == a]
        if all(not beh_leq(c1, c2) for c2 in blockers):
            sub = [_em_witness(c1, c2) for c2 in blockers]
            return modal(("dia", a), conj(sub))
    for b, c2 in sorted(pairs2, key=repr):
        supporters = [c1 for a, c1 in pairs1 if a == b]
        if all(not beh_leq(c1, c2) for c1 in supporters):
            sub = [_em_witness(c1, c2) for c1 in supporters]
            return modal(("box", b), disj(sub))
    raise NoWitnessWithinBounds("both Egli-Milner clauses hold; layers are ordered")


def separating_witness(
    logic: LogicSpec, sem: Semantics, b1: Behaviour, b2: Behaviour
) -> Formula:
    """A formula of the behaviours' depth whose value at b1 is not below
    its value at b2; requires b1 not below b2."""
    if b1.kind == "sync" and (b1.is_dead or b2.is_dead):
        # deadlock is order-isolated, so any formula of this depth works
        return _any_formula(logic, sem, b1.depth)
    if sem.layer_kind == "sim":
        return _sim_witness(b1, b2)
    return _em_witness(b1, b2)


def distinguish(
    logic: LogicSpec,
    sem: Semantics,
    sys_a: System,
    x,
    sys_b: System,
    y,
    depth: int,
    cap: int = 4096,
) -> Optional[Tuple[Formula, object, object]]:
    """A formula whose value at x is not below its value at y, or None
    when y refines x up to the given depth."""
    check_compatible(logic, sem)
    verdict = refines(sem, sys_a, x, sys_b, y, depth)
    if verdict.holds_all:
        return None
    n = verdict.first_failure
    if sem.kind in ("sim", "readysim"):
        beh_a = BehaviourMap(sem, sys_a)
        beh_b = BehaviourMap(sem, sys_b)
        phi = _sim_witness(beh_a.at(x, n), beh_b.at(y, n))
    else:
        ok, phi = theory_included(logic, sem, sys_a, x, sys_b, y, n, cap)
        if ok or phi is None:
            raise NoWitnessWithinBounds(
                "refinement fails but no witness found within bounds"
            )
    vx = eval_in_system(logic, sem, phi, sys_a, x)
    vy = eval_in_system(logic, sem, phi, sys_b, y)
    assert not omega_leq(logic.lattice, vx, vy)
    return phi, vx, vy


# ---------------------------------------------------------------------------
# separation checks

@dataclass
class SeparationReport:
    depth0_ok: bool
    depth1_ok: bool
    levels_checked: int
    detail: str = ""
    counterexample: Optional[Tuple] = None


def check_separation(
    logic: LogicSpec,
    sem: Semantics,
    max_level: int,
    cap: int = 100_000,
    rng=None,
    samples: int = 200,
) -> SeparationReport:
    """Depth-0: the truth constants jointly reflect the order on the
    depth-0 behaviour space.  Depth-1 (per level n < max_level): with all
    depth-n evaluation vectors closed under the propositional operators,
    the modalities applied to them (again prop-closed) reflect the order
    one level up.  For the trace logic the check runs on subdistribution
    representatives, sampled."""
    check_compatible(logic, sem)
    if logic.lattice == "unit":
        return _check_separation_prob(logic, sem, max_level, rng, samples)
    carriers = [enumerate_mn1(sem, n, cap) for n in range(max_level + 1)]

    def reflected(n: int, b1: Behaviour, b2: Behaviour) -> bool:
        # construct an explicit member of the modal/propositional closure
        # of the depth-(n-1) evaluations and verify that it distinguishes
        try:
            phi = (
                _const_witness(logic, b1, b2)
                if n == 0
                else separating_witness(logic, sem, b1, b2)
            )
        except NoWitnessWithinBounds:
            return False
        return not omega_leq(
            logic.lattice, evaluate(logic, phi, b1), evaluate(logic, phi, b2)
        )

    depth0_ok = True
    counterexample = None
    for b1 in carriers[0]:
        for b2 in carriers[0]:
            if not beh_leq(b1, b2) and not reflected(0, b1, b2):
                depth0_ok = False
                counterexample = (0, b1, b2)
    depth1_ok = True
    for n in range(1, max_level + 1):
        for b1 in carriers[n]:
            for b2 in carriers[n]:
                if not beh_leq(b1, b2) and not reflected(n, b1, b2):
                    depth1_ok = False
                    counterexample = counterexample or (n, b1, b2)
    return SeparationReport(depth0_ok, depth1_ok, max_level, counterexample=counterexample)


def _const_witness(logic: LogicSpec, b1: Behaviour, b2: Behaviour) -> Formula:
    for c in logic.constants:
        if not omega_leq(
            logic.lattice, evaluate(logic, const(c), b1), evaluate(logic, const(c), b2)
        ):
            return const(c)
    raise NoWitnessWithinBounds("no truth constant reflects this pair")


def _check_separation_prob(
    logic: LogicSpec, sem: Semantics, max_level: int, rng, samples: int
) -> SeparationReport:
    import random as _random

    from .behaviours import ptrace_node, random_behaviour

    rng = rng or _random.Random(7)
    # depth 0: the sole constant evaluates to total mass, the identity on
    # masses, which reflects the order of the unit interval.
    depth0_ok = True
    counterexample = None
    for _ in range(samples):
        b1 = random_behaviour(sem, 0, rng, [UNIT])
        b2 = random_behaviour(sem, 0, rng, [UNIT])
        v1 = evaluate(logic, const(TT), b1)
        v2 = evaluate(logic, const(TT), b2)
        if omega_leq("unit", v1, v2) and not beh_leq(b1, b2):
            depth0_ok = False
            counterexample = (0, b1, b2)
    depth1_ok = True
    for n in range(1, max_level + 1):
        formulas = _trace_formulas(tuple(sem.labels), n)
        for _ in range(samples):
            b1 = random_behaviour(sem, n, rng, [UNIT])
            b2 = random_behaviour(sem, n, rng, [UNIT])
            dominated = all(
                omega_leq(
                    "unit", evaluate(logic, phi, b1), evaluate(logic, phi, b2)
                )
                for phi in formulas
            )
            if dominated and not beh_leq(b1, b2):
                depth1_ok = False
                counterexample = counterexample or (n, b1, b2)
    return SeparationReport(depth0_ok, depth1_ok, max_level, counterexample=counterexample)


# ---------------------------------------------------------------------------
# the modality square (tested, never used as the algorithm)

def modal_square_violations(
    logic: LogicSpec,
    sem: Semantics,
    n: int,
    nested_elements: Sequence[Behaviour],
    depth_n_formulas: Sequence[Formula],
) -> List[Tuple]:
    """Check evaluate(L(phi)) . mu^{1,n} == [L] . M_1(evaluate(phi)) on
    the given elements of M_1(M_n 1)."""
    check_compatible(logic, sem)
    out = []
    mods = logic.modalities(sem)
    for nested in nested_elements:
        grafted = m_mult(sem, 1, n, nested)
        for phi in depth_n_formulas:
            if sem.kind == "ptrace":
                mapped = [
                    ((word[0], evaluate(logic, phi, inner)), w)
                    for (word, inner), w in nested.payload
                ]
                layer = _merge_weighted(mapped)
            elif nested.kind == "sync":
                if nested.is_dead:
                    layer = ("dead",)
                else:
                    layer = [
                        (lab, evaluate(logic, phi, inner.payload[1]))
                        for lab, inner in nested.payload[1]
                    ]
            else:
                layer = [
                    (lab, evaluate(logic, phi, inner.payload))
                    for lab, inner in nested.payload
                ]
            for name in mods:
                lhs = evaluate(logic, modal(name, phi), grafted)
                rhs = raw_modal_apply(logic, name, layer)
                if lhs != rhs:
                    out.append((name, phi, nested, lhs, rhs))
    return out


def _merge_weighted(items: List[Tuple]) -> List[Tuple]:
    acc: Dict = {}
    for key, w in items:
        acc[key] = acc.get(key, ZERO) + w
    return list(acc.items())
