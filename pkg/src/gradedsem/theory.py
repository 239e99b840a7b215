"""Graded signatures, uniform-depth terms, and inequational derivation.

Operations carry a depth (how many transition steps they consume) and a
finite poset as arity.  Terms have a uniform depth: all leaves sit at
the same distance from the root, except that constants float (a constant
is a term of every depth at or above its own).

Derivability of inequations-in-context is a semi-decision implemented as
forward saturation under the six rules

    Var   context pairs at depth 0
    Ar    an operation applied to arity-respecting arguments is defined
    Trans transitivity
    Mon   operations are monotone
    Ax1   axiom instances under uniform substitutions that derivably
          respect the axiom's context
    Ax2   arity constraints of operations occurring inside axioms,
          instantiated the same way

bounded by a term-size limit and a step budget.  A positive answer comes
with a replayable trace; a negative one means "not proved within budget"
and is deliberately inconclusive.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .posets import FinPoset, discrete_poset, validate_poset
from .subdist import format_rational, parse_rational


class TheoryError(ValueError):
    pass


class NonUniform(TheoryError):
    pass


class NonUniformSubstitution(TheoryError):
    pass


class MalformedGoal(TheoryError):
    pass


class EmptyLabelSet(TheoryError):
    pass


class BudgetTooSmall(TheoryError):
    pass


class DepthOutOfRange(TheoryError):
    pass


# ---------------------------------------------------------------------------
# signatures and terms

@dataclass(frozen=True)
class Operation:
    name: str
    arity: FinPoset
    depth: int
    meta: Tuple = ()  # interpretation hint for builtin theories

    @property
    def slots(self) -> Tuple:
        return self.arity.elements


@dataclass(frozen=True)
class GradedSignature:
    operations: Tuple[Operation, ...]

    def __post_init__(self):
        names = [op.name for op in self.operations]
        if len(names) != len(set(names)):
            raise TheoryError("operation names must be unique")

    def op(self, name: str) -> Operation:
        for op in self.operations:
            if op.name == name:
                return op
        raise TheoryError(f"unknown operation {name!r}")

    def __contains__(self, name: str) -> bool:
        return any(op.name == name for op in self.operations)


class Term:
    """Var(name) or App(op, args); args follow the arity's element order."""

    __slots__ = ("op", "args", "var", "_hash", "_size")

    def __init__(self, var=None, op: str = None, args: Tuple["Term", ...] = ()):
        self.var = var
        self.op = op
        self.args = args
        self._size = 1 + sum(a._size for a in args)
        self._hash = hash((var, op, args))

    @staticmethod
    def variable(name) -> "Term":
        return Term(var=name)

    @staticmethod
    def app(op: str, args: Sequence["Term"]) -> "Term":
        return Term(op=op, args=tuple(args))

    @property
    def is_var(self) -> bool:
        return self.op is None

    @property
    def size(self) -> int:
        return self._size

    def __eq__(self, other):
        return (
            isinstance(other, Term)
            and self._hash == other._hash
            and self.var == other.var
            and self.op == other.op
            and self.args == other.args
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Term({format_sexpr(self)})"


def format_sexpr(t: Term) -> str:
    if t.is_var:
        return str(t.var)
    if not t.args:
        return f"({t.op})"
    return "(" + t.op + " " + " ".join(format_sexpr(a) for a in t.args) + ")"


def depth_profile(t: Term, sig: GradedSignature) -> Tuple[int, bool]:
    """(minimal admissible depth, floats?).  A term floats iff every leaf
    is a constant; it is then a term of every depth at or above the
    minimum.  Raises NonUniform if arguments cannot share a depth."""
    if t.is_var:
        return 0, False
    op = sig.op(t.op)
    if not t.args:
        return op.depth, True
    profiles = [depth_profile(a, sig) for a in t.args]
    rigid = [d for d, flex in profiles if not flex]
    if rigid:
        m = rigid[0]
        if any(d != m for d in rigid) or any(
            flex and d > m for d, flex in profiles
        ):
            raise NonUniform(f"arguments of {t.op} do not share a uniform depth")
        return m + op.depth, False
    return max(d for d, _ in profiles) + op.depth, True


def term_depth(t: Term, sig: GradedSignature) -> int:
    """The uniform depth (minimal admissible depth for floating terms)."""
    return depth_profile(t, sig)[0]


def admits_depth(t: Term, sig: GradedSignature, k: int) -> bool:
    d, flex = depth_profile(t, sig)
    return d == k or (flex and k >= d)


def subterms(t: Term) -> Set[Term]:
    out = {t}
    for a in t.args:
        out |= subterms(a)
    return out


def free_vars(t: Term) -> Set:
    if t.is_var:
        return {t.var}
    out: Set = set()
    for a in t.args:
        out |= free_vars(a)
    return out


def uniform_substitute(
    gamma: Dict, t: Term, sig: GradedSignature
) -> Tuple[Term, int]:
    """Apply a substitution whose images all share one uniform depth k.
    Returns (result, k); the result has depth(t) + k."""
    images = [gamma[v] for v in sorted(free_vars(t), key=repr) if v in gamma]
    missing = free_vars(t) - set(gamma)
    if missing:
        raise NonUniformSubstitution(f"substitution missing {sorted(map(repr, missing))}")
    k = common_depth([depth_profile(im, sig) for im in images])
    return substitute(gamma, t), k


def common_depth(profiles: Sequence[Tuple[int, bool]]) -> int:
    rigid = [d for d, flex in profiles if not flex]
    if rigid:
        m = rigid[0]
        if any(d != m for d in rigid) or any(
            flex and d > m for d, flex in profiles
        ):
            raise NonUniformSubstitution("images do not share a uniform depth")
        return m
    return max((d for d, _ in profiles), default=0)


def substitute(gamma: Dict, t: Term) -> Term:
    if t.is_var:
        return gamma.get(t.var, t)
    return Term.app(t.op, tuple(substitute(gamma, a) for a in t.args))


@dataclass(frozen=True)
class Inequation:
    context: FinPoset
    depth: int
    lhs: Term
    rhs: Term

    def validate(self, sig: GradedSignature) -> None:
        for side in (self.lhs, self.rhs):
            if not admits_depth(side, sig, self.depth):
                raise MalformedGoal(
                    f"term {format_sexpr(side)} does not admit depth {self.depth}"
                )
            for v in free_vars(side):
                if v not in self.context:
                    raise MalformedGoal(f"free variable {v!r} is not in the context")


@dataclass(frozen=True)
class GradedTheory:
    name: str
    signature: GradedSignature
    axioms: Tuple[Inequation, ...]
    flavor: str = "custom"  # "jsl" | "pt" | "custom" (term syntax family)

    def __post_init__(self):
        for ax in self.axioms:
            ax.validate(self.signature)


# ---------------------------------------------------------------------------
# builtin theories

def _sum_op(labels: Tuple) -> Operation:
    name = "0" if not labels else "+".join(map(str, labels))
    return Operation(
        name,
        discrete_poset(range(len(labels))),
        1,
        meta=("sum", tuple(labels)),
    )


def _cc_op(coeffs: Tuple[Fraction, ...]) -> Operation:
    name = "cc[" + ",".join(format_rational(c) for c in coeffs) + "]"
    return Operation(
        name,
        discrete_poset(range(len(coeffs))),
        0,
        meta=("cc", tuple(coeffs)),
    )


def _act_op(label) -> Operation:
    return Operation(f"act:{label}", discrete_poset([0]), 1, meta=("act", label))


_VARS = ["x1", "x2", "x3", "x4", "x5", "x6"]


def _jsl_equalities(labels: Tuple, width: int, with_empty: bool) -> List[Inequation]:
    """All equations between choice terms whose (label, argument) pair sets
    agree, over a canonical variable pool, contexts discrete."""

    def all_sum_terms():
        for n in range(0 if with_empty else 1, width + 1):
            for labs in itertools.product(labels, repeat=n):
                for vs in itertools.product(_VARS[:width], repeat=n):
                    yield labs, vs

    seen = set()
    out: List[Inequation] = []
    for labs1, vs1 in all_sum_terms():
        for labs2, vs2 in all_sum_terms():
            if set(zip(labs1, vs1)) != set(zip(labs2, vs2)):
                continue
            if labs1 == labs2 and vs1 == vs2:
                continue
            used = sorted(set(vs1) | set(vs2))
            # canonical renaming by first occurrence keeps one copy per shape
            order = []
            for v in vs1 + vs2:
                if v not in order:
                    order.append(v)
            ren = {v: _VARS[i] for i, v in enumerate(order)}
            key = (labs1, tuple(ren[v] for v in vs1), labs2, tuple(ren[v] for v in vs2))
            if key in seen or (key[2], key[3], key[0], key[1]) in seen:
                continue
            seen.add(key)
            ctx = discrete_poset(ren[v] for v in used)
            lhs = Term.app(_sum_op(labs1).name, [Term.variable(ren[v]) for v in vs1])
            rhs = Term.app(_sum_op(labs2).name, [Term.variable(ren[v]) for v in vs2])
            out.append(Inequation(ctx, 1, lhs, rhs))
            out.append(Inequation(ctx, 1, rhs, lhs))
    return out


def _grid(max_denominator: int, with_zero: bool) -> List[Fraction]:
    vals = {
        Fraction(k, d)
        for d in range(1, max_denominator + 1)
        for k in range(1, d + 1)
    }
    if with_zero:
        vals.add(Fraction(0))
    return sorted(vals)


def _cc_ops(width: int, max_denominator: int) -> List[Operation]:
    grid = _grid(max_denominator, with_zero=True)
    ops = []
    for n in range(0, width + 1):
        for coeffs in itertools.product(grid, repeat=n):
            if sum(coeffs, Fraction(0)) <= 1:
                ops.append(_cc_op(coeffs))
    return ops


def _subconvex_axioms(width: int, max_denominator: int, ops: List[Operation]) -> List[Inequation]:
    available = {op.meta[1] for op in ops if op.meta[0] == "cc"}
    out: List[Inequation] = []
    # unit: the Kronecker combination projects onto one argument
    for n in range(1, width + 1):
        ctx = discrete_poset(_VARS[:n])
        for i in range(n):
            delta = tuple(Fraction(1 if j == i else 0) for j in range(n))
            if delta not in available:
                continue
            lhs = Term.app(_cc_op(delta).name, [Term.variable(v) for v in _VARS[:n]])
            rhs = Term.variable(_VARS[i])
            out.append(Inequation(ctx, 0, lhs, rhs))
            out.append(Inequation(ctx, 0, rhs, lhs))
    # flattening: mixtures of mixtures collapse to product coefficients
    for n in range(1, width + 1):
        for outer in available:
            if len(outer) != n:
                continue
            for m in range(1, width + 1):
                ctx = discrete_poset(_VARS[:m])
                for inners in itertools.product(
                    [c for c in available if len(c) == m], repeat=n
                ):
                    combined = tuple(
                        sum((outer[i] * inners[i][k] for i in range(n)), Fraction(0))
                        for k in range(m)
                    )
                    if combined not in available:
                        continue
                    xs = [Term.variable(v) for v in _VARS[:m]]
                    lhs = Term.app(
                        _cc_op(outer).name,
                        [Term.app(_cc_op(inners[i]).name, xs) for i in range(n)],
                    )
                    rhs = Term.app(_cc_op(combined).name, xs)
                    out.append(Inequation(ctx, 0, lhs, rhs))
                    out.append(Inequation(ctx, 0, rhs, lhs))
    # pointwise-larger coefficients give larger combinations
    for n in range(1, width + 1):
        ctx = discrete_poset(_VARS[:n])
        for lo in available:
            if len(lo) != n:
                continue
            for hi in available:
                if len(hi) != n or lo == hi:
                    continue
                if all(p <= q for p, q in zip(lo, hi)):
                    xs = [Term.variable(v) for v in _VARS[:n]]
                    out.append(
                        Inequation(
                            ctx,
                            0,
                            Term.app(_cc_op(lo).name, xs),
                            Term.app(_cc_op(hi).name, xs),
                        )
                    )
    return out


def builtin_theory(
    name: str,
    labels: Iterable,
    width: int = 2,
    max_denominator: int = 2,
) -> GradedTheory:
    """The five stock theories: JSL (bisimilarity), JSL_DOWN (similarity),
    JSL_SYNC (synchronous bisimilarity), SUBCONVEX (subdistributions),
    and PT (probabilistic trace inclusion).  Axiom schemes are
    instantiated up to the width bound; PT coefficients range over the
    grid of rationals with denominators up to the given bound."""
    labels = tuple(sorted(set(labels), key=repr))
    if not labels:
        raise EmptyLabelSet("label set must be nonempty")
    if width < 2:
        raise TheoryError("width bound must be at least 2")
    key = name.strip().lower()
    if key == "jsl":
        ops = [
            _sum_op(labs)
            for n in range(0, width + 1)
            for labs in itertools.product(labels, repeat=n)
        ]
        axioms = _jsl_equalities(labels, width, with_empty=True)
        return GradedTheory("jsl", GradedSignature(tuple(ops)), tuple(axioms), "jsl")
    if key in ("jsl_down", "jsl-down", "jsldown"):
        ops = [
            _sum_op(labs)
            for n in range(0, width + 1)
            for labs in itertools.product(labels, repeat=n)
        ]
        axioms = _jsl_equalities(labels, width, with_empty=True)
        for a in labels:
            for k in range(0, width - 1):
                for rest in itertools.product(labels, repeat=k):
                    ctx = validate_poset(["x1", "x2"] + _VARS[2 : 2 + k], [("x1", "x2")])
                    zs = [Term.variable(v) for v in _VARS[2 : 2 + k]]
                    lhs = Term.app(
                        _sum_op((a, a) + rest).name,
                        [Term.variable("x1"), Term.variable("x2")] + zs,
                    )
                    rhs = Term.app(_sum_op((a,) + rest).name, [Term.variable("x2")] + zs)
                    axioms.append(Inequation(ctx, 1, lhs, rhs))
                    axioms.append(Inequation(ctx, 1, rhs, lhs))
        return GradedTheory(
            "jsl_down", GradedSignature(tuple(ops)), tuple(axioms), "jsl"
        )
    if key in ("jsl_sync", "jsl-sync", "jslsync", "sync"):
        zero = Operation("0", discrete_poset([]), 0, meta=("const0",))
        ops = [zero] + [
            _sum_op(labs)
            for n in range(1, width + 1)
            for labs in itertools.product(labels, repeat=n)
        ]
        axioms = _jsl_equalities(labels, width, with_empty=False)
        for a in labels:
            for k in range(0, width - 1):
                for rest in itertools.product(labels, repeat=k):
                    ctx = discrete_poset(_VARS[:k])
                    zs = [Term.variable(v) for v in _VARS[:k]]
                    lhs = Term.app(
                        _sum_op((a,) + rest).name, [Term.app("0", ())] + zs
                    )
                    rhs = (
                        Term.app(_sum_op(rest).name, zs) if k else Term.app("0", ())
                    )
                    axioms.append(Inequation(ctx, 1, lhs, rhs))
                    axioms.append(Inequation(ctx, 1, rhs, lhs))
        return GradedTheory(
            "jsl_sync", GradedSignature(tuple(ops)), tuple(axioms), "jsl"
        )
    if key == "subconvex":
        ops = _cc_ops(width, max_denominator)
        axioms = _subconvex_axioms(width, max_denominator, ops)
        return GradedTheory(
            "subconvex", GradedSignature(tuple(ops)), tuple(axioms), "pt"
        )
    if key == "pt":
        ops = _cc_ops(width, max_denominator) + [_act_op(a) for a in labels]
        axioms = _subconvex_axioms(width, max_denominator, ops)
        available = {
            op.meta[1] for op in ops if op.meta[0] == "cc"
        }
        for a in labels:
            for coeffs in sorted(available):
                if not coeffs:
                    continue
                m = len(coeffs)
                ctx = discrete_poset(_VARS[:m])
                xs = [Term.variable(v) for v in _VARS[:m]]
                lhs = Term.app(f"act:{a}", [Term.app(_cc_op(coeffs).name, xs)])
                rhs = Term.app(
                    _cc_op(coeffs).name, [Term.app(f"act:{a}", [x]) for x in xs]
                )
                axioms.append(Inequation(ctx, 1, lhs, rhs))
                axioms.append(Inequation(ctx, 1, rhs, lhs))
        return GradedTheory("pt", GradedSignature(tuple(ops)), tuple(axioms), "pt")
    raise TheoryError(f"unknown builtin theory {name!r}")


# ---------------------------------------------------------------------------
# derivation engine

@dataclass(frozen=True)
class Budget:
    max_term_size: int = 7
    max_facts: int = 400_000


@dataclass
class DerivationVerdict:
    proved: bool
    trace: Optional[List[Tuple]] = None  # (depth, lhs, rhs, rule, premises)
    facts_used: int = 0
    budget_exhausted: bool = False

    @property
    def status(self) -> str:
        if self.proved:
            return "proved"
        return "unknown (budget)" if self.budget_exhausted else "unknown"


class _BudgetExceeded(Exception):
    pass


class Saturation:
    """Forward closure of the derivable-inequality relation over a bounded
    term universe at depths 0..max_depth in a fixed context."""

    def __init__(
        self,
        theory: GradedTheory,
        context: FinPoset,
        max_depth: int,
        budget: Budget = Budget(),
    ):
        self.theory = theory
        self.sig = theory.signature
        self.context = context
        self.max_depth = max_depth
        self.budget = budget
        self.terms: List[List[Term]] = [[] for _ in range(max_depth + 1)]
        self.index: List[Dict[Term, int]] = [{} for _ in range(max_depth + 1)]
        self.up: List[List[int]] = [[] for _ in range(max_depth + 1)]
        self.dn: List[List[int]] = [[] for _ in range(max_depth + 1)]
        self.prov: Dict[Tuple[int, int, int], Tuple] = {}
        self.fact_count = 0
        self.exhausted = False
        self._seen_subst: Set[Tuple] = set()
        self._populate_universe()
        try:
            self._saturate()
        except _BudgetExceeded:
            self.exhausted = True

    # -- universe ----------------------------------------------------------

    def register(self, k: int, t: Term) -> int:
        idx = self.index[k]
        if t in idx:
            return idx[t]
        i = len(self.terms[k])
        idx[t] = i
        self.terms[k].append(t)
        self.up[k].append(0)
        self.dn[k].append(0)
        return i

    def _populate_universe(self) -> None:
        size_cap = self.budget.max_term_size
        ops = self.sig.operations
        for k in range(self.max_depth + 1):
            by_size: Dict[int, List[Term]] = {}

            def put(s: int, t: Term):
                by_size.setdefault(s, []).append(t)

            if k == 0:
                for v in self.context.elements:
                    put(1, Term.variable(v))
            for op in ops:
                if not op.slots and op.depth <= k:
                    put(1, Term.app(op.name, ()))
            # depth-1 operations draw arguments from the previous level
            if k >= 1:
                prev = self.terms[k - 1]
                for op in ops:
                    if op.depth != 1 or not op.slots:
                        continue
                    r = len(op.slots)
                    pools = [
                        [t for t in prev if t.size <= size_cap - r]
                    ] * r
                    for args in itertools.product(*pools):
                        s = 1 + sum(a.size for a in args)
                        if s <= size_cap:
                            put(s, Term.app(op.name, args))
            # depth-0 operations nest within the level: close by size
            zero_ops = [op for op in ops if op.depth == 0 and op.slots]
            for s in range(2, size_cap + 1):
                for op in zero_ops:
                    r = len(op.slots)
                    smaller = [
                        t for sz in range(1, s) for t in by_size.get(sz, [])
                    ]
                    for args in itertools.product(smaller, repeat=r):
                        if 1 + sum(a.size for a in args) == s:
                            put(s, Term.app(op.name, args))
            for s in sorted(by_size):
                for t in by_size[s]:
                    self.register(k, t)

    # -- fact bookkeeping ---------------------------------------------------

    def has(self, k: int, i: int, j: int) -> bool:
        return bool(self.up[k][i] >> j & 1)

    def holds(self, k: int, s: Term, t: Term) -> bool:
        idx = self.index[k]
        return s in idx and t in idx and self.has(k, idx[s], idx[t])

    def add(self, k: int, i: int, j: int, rule: str, premises: Tuple) -> bool:
        """Insert a fact and keep the relation transitively closed."""
        if self.has(k, i, j):
            return False
        self.prov[(k, i, j)] = (rule, premises)
        below = self.dn[k][i] | (1 << i)
        above = self.up[k][j] | (1 << j)
        added = False
        x_mask = below
        x = 0
        while x_mask:
            if x_mask & 1:
                new = above & ~self.up[k][x]
                if new:
                    self.up[k][x] |= new
                    y = 0
                    y_mask = new
                    while y_mask:
                        if y_mask & 1:
                            self.dn[k][y] |= 1 << x
                            if (k, x, y) not in self.prov:
                                self.prov[(k, x, y)] = (
                                    "Trans",
                                    ((k, x, i), (k, i, j), (k, j, y)),
                                )
                            self.fact_count += 1
                            added = True
                        y_mask >>= 1
                        y += 1
            x_mask >>= 1
            x += 1
        if self.fact_count > self.budget.max_facts:
            raise _BudgetExceeded()
        return added

    def defined_mask(self, k: int) -> int:
        mask = 0
        for i in range(len(self.terms[k])):
            if self.has(k, i, i):
                mask |= 1 << i
        return mask

    # -- rules --------------------------------------------------------------

    def _saturate(self) -> None:
        # (Var)
        for x, y in self.context.pairs():
            i = self.register(0, Term.variable(x))
            j = self.register(0, Term.variable(y))
            self.add(0, i, j, "Var", ())
        changed = True
        while changed:
            changed = False
            if self._pass_ar():
                changed = True
            if self._pass_mon():
                changed = True
            if self._pass_axioms():
                changed = True

    def _arity_premises_hold(self, k: int, op: Operation, args: Tuple[Term, ...]) -> bool:
        q = k - op.depth
        if q < 0:
            return False
        slot_of = {e: n for n, e in enumerate(op.slots)}
        for e1, e2 in op.arity.pairs():
            a1, a2 = args[slot_of[e1]], args[slot_of[e2]]
            if not self.holds(q, a1, a2):
                return False
        return True

    def _pass_ar(self) -> bool:
        changed = False
        for k in range(self.max_depth + 1):
            for i, t in enumerate(list(self.terms[k])):
                if t.is_var or self.has(k, i, i):
                    continue
                op = self.sig.op(t.op)
                if not admits_depth(t, self.sig, k):
                    continue
                if self._arity_premises_hold(k, op, t.args):
                    prem = tuple(
                        (k - op.depth, self.index[k - op.depth][a1], self.index[k - op.depth][a2])
                        for e1, e2 in op.arity.pairs()
                        for a1, a2 in [
                            (
                                t.args[list(op.slots).index(e1)],
                                t.args[list(op.slots).index(e2)],
                            )
                        ]
                    )
                    if self.add(k, i, i, "Ar", prem):
                        changed = True
        return changed

    def _pass_mon(self) -> bool:
        changed = False
        for k in range(self.max_depth + 1):
            by_op: Dict[str, List[int]] = {}
            for i, t in enumerate(self.terms[k]):
                if not t.is_var and self.has(k, i, i):
                    by_op.setdefault(t.op, []).append(i)
            for opname, idxs in by_op.items():
                op = self.sig.op(opname)
                q = k - op.depth
                for i in idxs:
                    ti = self.terms[k][i]
                    for j in idxs:
                        if self.has(k, i, j):
                            continue
                        tj = self.terms[k][j]
                        ok = True
                        prem = []
                        for a, b in zip(ti.args, tj.args):
                            ia, ib = self.index[q].get(a), self.index[q].get(b)
                            if ia is None or ib is None or not self.has(q, ia, ib):
                                ok = False
                                break
                            prem.append((q, ia, ib))
                        if ok:
                            prem.append((k, i, i))
                            prem.append((k, j, j))
                            if self.add(k, i, j, "Mon", tuple(prem)):
                                changed = True
        return changed

    def _substitutions(self, axiom: Inequation, k: int):
        """Uniform substitutions |context| -> defined depth-k terms whose
        required context inequalities are already derived."""
        vars_ = list(axiom.context.elements)
        defined = [
            t
            for t, i in self.index[k].items()
            if self.has(k, i, i)
        ]
        order_pairs = [(x, y) for x, y in axiom.context.pairs() if x != y]

        def extend(partial: Dict, rest: List):
            if not rest:
                yield dict(partial)
                return
            v = rest[0]
            for cand in defined:
                partial[v] = cand
                ok = True
                for x, y in order_pairs:
                    if x in partial and y in partial:
                        if not self.holds(k, partial[x], partial[y]):
                            ok = False
                            break
                if ok:
                    yield from extend(partial, rest[1:])
            partial.pop(v, None)

        if not vars_:
            yield {}
            return
        yield from extend({}, vars_)

    def _pass_axioms(self) -> bool:
        changed = False
        for ax_id, axiom in enumerate(self.theory.axioms):
            for k in range(0, self.max_depth - axiom.depth + 1):
                for gamma in self._substitutions(axiom, k):
                    key = (
                        ax_id,
                        k,
                        tuple(sorted((v, t) for v, t in gamma.items())),
                    )
                    if key in self._seen_subst:
                        continue
                    self._seen_subst.add(key)
                    prem = tuple(
                        (k, self.index[k][gamma[x]], self.index[k][gamma[y]])
                        for x, y in axiom.context.pairs()
                    )
                    depth_out = axiom.depth + k
                    lhs = substitute(gamma, axiom.lhs)
                    rhs = substitute(gamma, axiom.rhs)
                    i = self.register(depth_out, lhs)
                    j = self.register(depth_out, rhs)
                    if self.add(depth_out, i, j, "Ax1", prem):
                        changed = True
                    # (Ax2): arity constraints inside the axiom's terms
                    for sub in subterms(axiom.lhs) | subterms(axiom.rhs):
                        if sub.is_var or not sub.args:
                            continue
                        op = self.sig.op(sub.op)
                        strict = [
                            (x, y) for x, y in op.arity.pairs() if x != y
                        ]
                        if not strict:
                            continue
                        m = depth_profile(sub.args[0], self.sig)[0]
                        slot_of = {e: n for n, e in enumerate(op.slots)}
                        for e1, e2 in strict:
                            u = substitute(gamma, sub.args[slot_of[e1]])
                            v = substitute(gamma, sub.args[slot_of[e2]])
                            iu = self.register(m + k, u)
                            iv = self.register(m + k, v)
                            if self.add(m + k, iu, iv, "Ax2", prem):
                                changed = True
        return changed

    # -- reporting -----------------------------------------------------------

    def facts(self):
        for k in range(self.max_depth + 1):
            for i, t in enumerate(self.terms[k]):
                mask = self.up[k][i]
                j = 0
                while mask:
                    if mask & 1:
                        yield k, t, self.terms[k][j]
                    mask >>= 1
                    j += 1

    def trace_of(self, k: int, s: Term, t: Term) -> List[Tuple]:
        i, j = self.index[k][s], self.index[k][t]
        out: List[Tuple] = []
        seen: Set[Tuple[int, int, int]] = set()

        def walk(key):
            if key in seen:
                return
            seen.add(key)
            rule, premises = self.prov[key]
            for p in premises:
                if p in self.prov:
                    walk(p)
            kk, ii, jj = key
            out.append(
                (kk, self.terms[kk][ii], self.terms[kk][jj], rule, premises)
            )

        walk((k, i, j))
        return out


def derivable(
    theory: GradedTheory,
    goal: Inequation,
    budget: Budget = Budget(),
    saturation: Saturation = None,
) -> DerivationVerdict:
    goal.validate(theory.signature)
    sat = saturation or Saturation(theory, goal.context, goal.depth, budget)
    i = sat.register(goal.depth, goal.lhs)
    j = sat.register(goal.depth, goal.rhs)
    if sat.has(goal.depth, i, j):
        return DerivationVerdict(
            True, sat.trace_of(goal.depth, goal.lhs, goal.rhs), sat.fact_count
        )
    return DerivationVerdict(False, None, sat.fact_count, sat.exhausted)


def check_defined(
    theory: GradedTheory,
    context: FinPoset,
    t: Term,
    budget: Budget = Budget(),
    depth: int = None,
) -> DerivationVerdict:
    """Definedness of a term: its own arity constraints, recursively."""
    if depth is None:
        depth = term_depth(t, theory.signature)
    goal = Inequation(context, depth, t, t)
    return derivable(theory, goal, budget)


def replay_trace(theory: GradedTheory, goal: Inequation, trace: List[Tuple]) -> bool:
    """Check that a trace is a genuine derivation ending at the goal."""
    sig = theory.signature
    proved: Set[Tuple[int, Term, Term]] = set()
    for k, s, t, rule, _ in trace:
        if rule == "Var":
            ok = (
                k == 0
                and s.is_var
                and t.is_var
                and goal.context.leq(s.var, t.var)
            )
        elif rule == "Ar":
            ok = s == t and not s.is_var and _ar_ok(sig, goal.context, proved, k, s)
        elif rule == "Trans":
            ok = any(
                (k, s, u) in proved and (k, u, t) in proved
                for u in {q for (kk, p, q) in proved if kk == k and p == s}
            )
        elif rule == "Mon":
            ok = (
                not s.is_var
                and not t.is_var
                and s.op == t.op
                and (k, s, s) in proved
                and (k, t, t) in proved
                and all(
                    (k - sig.op(s.op).depth, a, b) in proved
                    for a, b in zip(s.args, t.args)
                )
            )
        elif rule in ("Ax1", "Ax2"):
            ok = _axiom_instance_ok(theory, goal.context, proved, k, s, t, rule)
        else:
            ok = False
        if not ok:
            return False
        proved.add((k, s, t))
    return bool(trace) and (goal.depth, goal.lhs, goal.rhs) in proved


def _ar_ok(sig, context, proved, k, s) -> bool:
    op = sig.op(s.op)
    q = k - op.depth
    slot_of = {e: n for n, e in enumerate(op.slots)}
    return q >= 0 and all(
        (q, s.args[slot_of[e1]], s.args[slot_of[e2]]) in proved
        for e1, e2 in op.arity.pairs()
    )


def _axiom_instance_ok(theory, context, proved, k, s, t, rule) -> bool:
    sig = theory.signature
    for axiom in theory.axioms:
        for shift in range(0, k + 1):
            if rule == "Ax1":
                pairs = [(axiom.lhs, s), (axiom.rhs, t)]
                if axiom.depth + shift != k:
                    continue
            else:
                pairs = None
            candidates = []
            if rule == "Ax1":
                gamma = {}
                if _match(axiom.lhs, s, gamma) and _match(axiom.rhs, t, gamma):
                    candidates.append(gamma)
            else:
                for sub in subterms(axiom.lhs) | subterms(axiom.rhs):
                    if sub.is_var or not sub.args:
                        continue
                    op = sig.op(sub.op)
                    slot_of = {e: n for n, e in enumerate(op.slots)}
                    for e1, e2 in op.arity.pairs():
                        if e1 == e2:
                            continue
                        gamma = {}
                        if _match(sub.args[slot_of[e1]], s, gamma) and _match(
                            sub.args[slot_of[e2]], t, gamma
                        ):
                            candidates.append(gamma)
            for gamma in candidates:
                if all(
                    (shift, gamma[x], gamma[y]) in proved
                    for x, y in axiom.context.pairs()
                    if x in gamma and y in gamma
                ):
                    return True
    return False


def _match(pattern: Term, target: Term, gamma: Dict) -> bool:
    if pattern.is_var:
        if pattern.var in gamma:
            return gamma[pattern.var] == target
        gamma[pattern.var] = target
        return True
    if target.is_var or pattern.op != target.op or len(pattern.args) != len(target.args):
        return False
    return all(_match(p, q, gamma) for p, q in zip(pattern.args, target.args))


# ---------------------------------------------------------------------------
# free models

@dataclass
class FreeModelLevel:
    depth: int
    classes: List[List[Term]]  # each class: derivably-equal defined terms
    leq: List[List[bool]]  # order between class representatives
    exact: bool  # False when the budget ran out


def free_model_elements(
    theory: GradedTheory,
    context: FinPoset,
    max_depth: int,
    budget: Budget = Budget(),
) -> List[FreeModelLevel]:
    sat = Saturation(theory, context, max_depth, budget)
    out = []
    for k in range(max_depth + 1):
        defined = [
            i for i in range(len(sat.terms[k])) if sat.has(k, i, i)
        ]
        class_of: Dict[int, int] = {}
        classes: List[List[int]] = []
        for i in defined:
            placed = False
            for c, members in enumerate(classes):
                rep = members[0]
                if sat.has(k, i, rep) and sat.has(k, rep, i):
                    members.append(i)
                    class_of[i] = c
                    placed = True
                    break
            if not placed:
                class_of[i] = len(classes)
                classes.append([i])
        leq = [
            [
                sat.has(k, members[0], other[0])
                for other in classes
            ]
            for members in classes
        ]
        out.append(
            FreeModelLevel(
                k,
                [[sat.terms[k][i] for i in members] for members in classes],
                leq,
                not sat.exhausted,
            )
        )
    return out


# ---------------------------------------------------------------------------
# models and satisfaction

class Model:
    """A graded algebra presented by carriers and operation actions.

    carrier(m) lists the available elements of the depth-m carrier (a
    finite enumeration, or a representative sample for intensional
    carriers); leq(m, u, v) compares; apply(op, m, args) interprets an
    operation whose arguments sit at carrier depth m.
    """

    depth: int = 0
    sampled: bool = False

    def carrier(self, m: int) -> Sequence:
        raise NotImplementedError

    def leq(self, m: int, u, v) -> bool:
        raise NotImplementedError

    def apply(self, op: Operation, m: int, args: Sequence):
        raise NotImplementedError


def evaluate_term(
    model: Model, sig: GradedSignature, t: Term, k: int, valuation: Dict, m: int
):
    """Partial evaluation of a depth-k term under a depth-m valuation.
    Returns None when undefined (an ordered-arity constraint fails)."""
    if t.is_var:
        return valuation[t.var]
    op = sig.op(t.op)
    q = k - op.depth
    vals = [evaluate_term(model, sig, a, q, valuation, m) for a in t.args]
    if any(v is None for v in vals):
        return None
    slot_of = {e: n for n, e in enumerate(op.slots)}
    for e1, e2 in op.arity.pairs():
        if e1 == e2:
            continue
        if not model.leq(m + q, vals[slot_of[e1]], vals[slot_of[e2]]):
            return None
    return model.apply(op, m + q, vals)


def satisfies(model: Model, sig: GradedSignature, ineq: Inequation) -> bool:
    """Satisfaction in a model: every monotone valuation makes both sides
    defined and ordered.  Valuations range over the model's carriers (the
    check is exhaustive for enumerated carriers, sampled otherwise)."""
    if ineq.depth > model.depth:
        raise DepthOutOfRange(
            f"inequation depth {ineq.depth} exceeds the model depth {model.depth}"
        )
    vars_ = list(ineq.context.elements)
    for m in range(model.depth - ineq.depth + 1):
        carrier = list(model.carrier(m))
        if not carrier:
            continue
        for images in itertools.product(carrier, repeat=len(vars_)):
            valuation = dict(zip(vars_, images))
            if not all(
                model.leq(m, valuation[x], valuation[y])
                for x, y in ineq.context.pairs()
                if x != y
            ):
                continue
            lhs = evaluate_term(model, sig, ineq.lhs, ineq.depth, valuation, m)
            rhs = evaluate_term(model, sig, ineq.rhs, ineq.depth, valuation, m)
            if lhs is None or rhs is None:
                return False
            if not model.leq(m + ineq.depth, lhs, rhs):
                return False
    return True
