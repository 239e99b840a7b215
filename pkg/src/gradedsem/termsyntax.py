"""Surface syntax for terms, contexts, goals, and theory files.

Term grammar (whitespace-insensitive)::

    term    ::= item ('+' item)*
    item    ::= rational atom          -- subconvex summand (pt theories)
              | atom
    atom    ::= '0' | ident | ident '(' term (',' term)* ')' | '(' term ')'
    rational::= '1' | 'p/q'

For the choice theories a sum  a(t1) + b(t2)  is one application of the
matching choice operation; for the trace theories  1/2 t1 + 1/2 t2  is a
subconvex combination and  a(t)  an action.  Goals read as
"lhs <= rhs : depth"; contexts as comma-separated entries "x" or
"x <= y <= z".
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Dict, List, Tuple

from .posets import FinPoset, discrete_poset, validate_poset
from .subdist import FormalSum, format_rational
from .theory import (
    GradedSignature,
    GradedTheory,
    Inequation,
    MalformedGoal,
    Operation,
    Term,
    TheoryError,
    format_sexpr,
)

_TERM_TOKEN = re.compile(r"\s*(\d+/\d+|\d+|[A-Za-z_][A-Za-z_0-9]*|\+|\(|\)|,)")


def _tokenize(text: str) -> List[str]:
    out, pos = [], 0
    while pos < len(text):
        m = _TERM_TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise MalformedGoal(f"unexpected input at {text[pos:]!r}")
            break
        out.append(m.group(1))
        pos = m.end()
    return out


class _TermParser:
    def __init__(self, tokens: List[str], theory: GradedTheory):
        self.toks = tokens
        self.i = 0
        self.theory = theory

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expect=None):
        tok = self.peek()
        if tok is None:
            raise MalformedGoal("unexpected end of term")
        if expect is not None and tok != expect:
            raise MalformedGoal(f"expected {expect!r}, found {tok!r}")
        self.i += 1
        return tok

    def term(self) -> Term:
        items = [self.item()]
        while self.peek() == "+":
            self.take()
            items.append(self.item())
        if len(items) == 1 and items[0][0] is None:
            return items[0][1]
        if self.theory.flavor == "pt":
            coeffs = tuple(Fraction(1) if c is None else c for c, _ in items)
            name = "cc[" + ",".join(format_rational(c) for c in coeffs) + "]"
            if name not in self.theory.signature:
                raise MalformedGoal(
                    f"no subconvex operation with coefficients {name}"
                )
            return Term.app(name, tuple(t for _, t in items))
        labels = []
        args = []
        for c, t in items:
            if c is not None:
                raise MalformedGoal("coefficients do not apply to choice terms")
            if t.is_var or not t.op.startswith("_app:"):
                raise MalformedGoal(
                    "summands of a choice term must be label applications"
                )
            labels.append(t.op[len("_app:"):])
            args.append(t.args[0])
        name = "+".join(labels)
        if name not in self.theory.signature:
            raise MalformedGoal(f"no choice operation {name!r} in this theory")
        return Term.app(name, tuple(args))

    def item(self) -> Tuple:
        tok = self.peek()
        if tok and re.fullmatch(r"\d+/\d+|\d+", tok) and tok != "0":
            self.take()
            return Fraction(tok), self.atom()
        if tok == "0" and self.theory.flavor == "pt":
            # "0" alone is the empty subconvex combination
            self.take()
            return None, Term.app("cc[]", ())
        return None, self.atom()

    def atom(self) -> Term:
        tok = self.take()
        if tok == "(":
            t = self.term()
            self.take(")")
            return t
        if tok == "0":
            if "0" not in self.theory.signature:
                raise MalformedGoal("this theory has no constant 0")
            return Term.app("0", ())
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", tok):
            raise MalformedGoal(f"unexpected token {tok!r}")
        if self.peek() == "(":
            self.take()
            args = [self.term()]
            while self.peek() == ",":
                self.take()
                args.append(self.term())
            self.take(")")
            # tag as a pending label application; the caller resolves it
            return Term.app(f"_app:{tok}", tuple(args))
        return Term.variable(tok)


def parse_term(text: str, theory: GradedTheory) -> Term:
    parser = _TermParser(_tokenize(text), theory)
    t = parser.term()
    if parser.peek() is not None:
        raise MalformedGoal(f"trailing input at {parser.peek()!r}")
    t = _resolve(t, theory)
    return t


def _resolve(t: Term, theory: GradedTheory) -> Term:
    if t.is_var:
        return t
    name = t.op
    if name.startswith("_app:"):
        label = name[len("_app:"):]
        name = f"act:{label}" if theory.flavor == "pt" else label
        if name not in theory.signature:
            raise MalformedGoal(f"unknown operation {label!r}")
    return Term.app(name, tuple(_resolve(a, theory) for a in t.args))


def print_term(t: Term, theory: GradedTheory) -> str:
    if t.is_var:
        return str(t.var)
    op = theory.signature.op(t.op)
    tag = op.meta[0] if op.meta else None
    if tag == "sum":
        if not op.meta[1]:
            return "0"
        return " + ".join(
            f"{a}({print_term(arg, theory)})" for a, arg in zip(op.meta[1], t.args)
        )
    if tag == "const0":
        return "0"
    if tag == "cc":
        if not op.meta[1]:
            return "0"
        return " + ".join(
            f"{format_rational(c)} {_paren(arg, theory)}"
            for c, arg in zip(op.meta[1], t.args)
        )
    if tag == "act":
        return f"{op.meta[1]}({print_term(t.args[0], theory)})"
    return format_sexpr(t)


def _paren(t: Term, theory: GradedTheory) -> str:
    body = print_term(t, theory)
    if t.is_var:
        return body
    return f"({body})"


def parse_context(text: str) -> FinPoset:
    """Comma-separated entries, each an id or a chain "x <= y <= z"."""
    elements: List[str] = []
    pairs: List[Tuple[str, str]] = []
    for entry in text.split(","):
        entry = entry.strip()
        if not entry:
            continue
        chain = [part.strip() for part in entry.split("<=")]
        if any(not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", p) for p in chain):
            raise MalformedGoal(f"malformed context entry {entry!r}")
        elements.extend(chain)
        pairs.extend(zip(chain, chain[1:]))
    if not elements:
        raise MalformedGoal("empty context")
    return validate_poset(elements, pairs)


def parse_goal(text: str, theory: GradedTheory, context: FinPoset) -> Inequation:
    """Parse "lhs <= rhs : depth" into an inequation over the context."""
    if ":" not in text:
        raise MalformedGoal('goal must end with ": depth"')
    body, _, depth_text = text.rpartition(":")
    try:
        depth = int(depth_text.strip())
    except ValueError:
        raise MalformedGoal(f"malformed depth {depth_text!r}") from None
    if "<=" not in body:
        raise MalformedGoal('goal must contain "<="')
    lhs_text, _, rhs_text = body.partition("<=")
    lhs = parse_term(lhs_text, theory)
    rhs = parse_term(rhs_text, theory)
    goal = Inequation(context, depth, lhs, rhs)
    goal.validate(theory.signature)
    return goal


def parse_formal_sum(text: str, base: FinPoset) -> FormalSum:
    """Formal sums "1/2 x + 1/2 y" over a poset's elements."""
    summands = []
    for part in text.split("+"):
        part = part.strip()
        if not part:
            raise MalformedGoal("empty summand")
        m = re.fullmatch(r"(?:(\d+/\d+|\d+)\s+)?([A-Za-z_][A-Za-z_0-9]*)", part)
        if not m:
            raise MalformedGoal(f"malformed summand {part!r}")
        coeff = Fraction(m.group(1)) if m.group(1) else Fraction(1)
        summands.append((coeff, m.group(2)))
    return FormalSum.make(base, summands)


# ---------------------------------------------------------------------------
# theory files

def parse_sexpr_term(text: str) -> Term:
    tokens = re.findall(r"\(|\)|[^\s()]+", text)
    pos = 0

    def parse() -> Term:
        nonlocal pos
        if pos >= len(tokens):
            raise MalformedGoal("unexpected end of s-expression")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            if pos >= len(tokens):
                raise MalformedGoal("unclosed s-expression")
            head = tokens[pos]
            pos += 1
            args = []
            while pos < len(tokens) and tokens[pos] != ")":
                args.append(parse())
            if pos >= len(tokens):
                raise MalformedGoal("unclosed s-expression")
            pos += 1
            return Term.app(head, tuple(args))
        if tok == ")":
            raise MalformedGoal("unexpected )")
        return Term.variable(tok)

    t = parse()
    if pos != len(tokens):
        raise MalformedGoal("trailing input in s-expression")
    return t


def _poset_from_doc(doc: Dict) -> FinPoset:
    return validate_poset(
        doc.get("elements", []), [tuple(p) for p in doc.get("order", [])]
    )


def load_theory(doc: Dict) -> GradedTheory:
    """Custom theory files: operations with named arity posets and depths,
    axioms as s-expression term strings with a context block."""
    if not isinstance(doc, dict) or "operations" not in doc:
        raise TheoryError('theory document needs an "operations" list')
    ops = []
    for op_doc in doc["operations"]:
        ops.append(
            Operation(
                op_doc["name"],
                _poset_from_doc(op_doc.get("arity", {})),
                int(op_doc["depth"]),
            )
        )
    sig = GradedSignature(tuple(ops))
    axioms = []
    for ax in doc.get("axioms", []):
        axioms.append(
            Inequation(
                _poset_from_doc(ax.get("context", {})),
                int(ax["depth"]),
                parse_sexpr_term(ax["lhs"]),
                parse_sexpr_term(ax["rhs"]),
            )
        )
        if ax.get("equation"):
            axioms.append(
                Inequation(
                    _poset_from_doc(ax.get("context", {})),
                    int(ax["depth"]),
                    parse_sexpr_term(ax["rhs"]),
                    parse_sexpr_term(ax["lhs"]),
                )
            )
    return GradedTheory(doc.get("name", "custom"), sig, tuple(axioms), "custom")
