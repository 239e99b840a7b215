"""Command-line front end.

Five commands: ``check`` (behavioural refinement), ``eval`` (formula
value at a state), ``distinguish`` (witness formula search), ``derive``
(inequational derivation), ``order`` (subdistribution comparison).

Exit codes: 0 = positive verdict, 1 = negative verdict, 2 = usage or
validation error.  Output is deterministic text, or JSON with
``--output json``.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Dict, Optional, Tuple

from .behaviours import Semantics, semantics
from .logics import (
    DEFAULT_LOGIC,
    LogicError,
    builtin_logic,
    distinguish,
    eval_in_system,
    format_formula,
    format_omega,
    parse_formula,
)
from .posets import PosetError, validate_poset
from .subdist import SubDistError, sdist_leq_flow
from .systems import System, SystemError_, default_depth, load_system, refines
from .termsyntax import (
    load_theory,
    parse_context,
    parse_formal_sum,
    parse_goal,
    parse_term,
    print_term,
)
from .theory import Budget, GradedTheory, TheoryError, builtin_theory, derivable


class UsageError(Exception):
    pass


def _read_json(path: str) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _parse_state_ref(ref: str) -> Tuple[str, str]:
    if ":" not in ref:
        raise UsageError(f"state reference {ref!r} must look like path.json:state")
    path, _, state = ref.rpartition(":")
    return path, state


def _semantics_for(name: str, labels) -> Semantics:
    try:
        return semantics(name, labels)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_two_systems(args, sem_name: str):
    path_a, state_a = _parse_state_ref(args.left)
    path_b, state_b = _parse_state_ref(args.right)
    doc_a, doc_b = _read_json(path_a), _read_json(path_b)
    labels = set(doc_a.get("labels", [])) | set(doc_b.get("labels", []))
    sem = _semantics_for(sem_name, labels)
    sys_a = load_system(doc_a, sem, validate=not args.no_validate)
    sys_b = load_system(doc_b, sem, validate=not args.no_validate)
    return sem, sys_a, state_a, sys_b, state_b


def _emit(args, text_lines, json_doc) -> None:
    if args.output == "json":
        print(json.dumps(json_doc, indent=2, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def cmd_check(args) -> int:
    sem, sys_a, x, sys_b, y, = _load_two_systems(args, args.sem)
    depth = args.depth if args.depth is not None else default_depth(sys_a, sys_b)
    verdict = refines(sem, sys_a, x, sys_b, y, depth)
    lines = [
        f"n={n}: {'holds' if ok else 'fails'}" for n, ok in enumerate(verdict.depths)
    ]
    if verdict.holds_all:
        lines.append(f"refines: yes (n=0..{depth})")
    else:
        lines.append(f"refines: no (first failure at n={verdict.first_failure})")
    _emit(
        args,
        lines,
        {
            "command": "check",
            "semantics": sem.kind,
            "depth": depth,
            "per_depth": list(verdict.depths),
            "refines": verdict.holds_all,
            "first_failure": verdict.first_failure,
        },
    )
    return 0 if verdict.holds_all else 1


def cmd_eval(args) -> int:
    path, state = _parse_state_ref(args.state)
    doc = _read_json(path)
    sem = _semantics_for(args.sem, doc.get("labels", []))
    logic = builtin_logic(args.logic or DEFAULT_LOGIC[sem.kind], sem.labels)
    sys_ = load_system(doc, sem, validate=not args.no_validate)
    phi = parse_formula(args.formula, logic)
    value = eval_in_system(logic, sem, phi, sys_, state)
    _emit(
        args,
        [format_omega(value)],
        {
            "command": "eval",
            "semantics": sem.kind,
            "logic": logic.name,
            "formula": format_formula(phi),
            "value": format_omega(value),
        },
    )
    return 0


def cmd_distinguish(args) -> int:
    sem, sys_a, x, sys_b, y = _load_two_systems(args, args.sem)
    logic = builtin_logic(args.logic or DEFAULT_LOGIC[sem.kind], sem.labels)
    depth = args.depth if args.depth is not None else default_depth(sys_a, sys_b)
    result = distinguish(logic, sem, sys_a, x, sys_b, y, depth, cap=args.max_vectors)
    if result is None:
        _emit(
            args,
            ["none (refines)"],
            {"command": "distinguish", "refines": True, "formula": None},
        )
        return 0
    phi, vx, vy = result
    _emit(
        args,
        [
            f"formula: {format_formula(phi)}",
            f"value at {args.left}: {format_omega(vx)}",
            f"value at {args.right}: {format_omega(vy)}",
        ],
        {
            "command": "distinguish",
            "refines": False,
            "formula": format_formula(phi),
            "value_left": format_omega(vx),
            "value_right": format_omega(vy),
        },
    )
    return 1


def _theory_from_args(args) -> GradedTheory:
    if args.theory_file:
        return load_theory(_read_json(args.theory_file))
    if not args.theory:
        raise UsageError("either --theory or --theory-file is required")
    labels = args.labels.split(",") if args.labels else ["a", "b"]
    return builtin_theory(
        args.theory, labels, width=args.width, max_denominator=args.max_denominator
    )


def cmd_derive(args) -> int:
    theory = _theory_from_args(args)
    context = parse_context(args.ctx) if args.ctx else validate_poset(["x"], [])
    goal = parse_goal(args.goal, theory, context)
    verdict = derivable(
        theory, goal, Budget(max_term_size=args.max_size, max_facts=args.max_facts)
    )
    lines = [verdict.status]
    trace_doc = None
    if verdict.proved and args.trace:
        trace_doc = []
        for depth, lhs, rhs, rule, _ in verdict.trace:
            line = f"  [{rule}] |-_{depth} {print_term(lhs, theory)} <= {print_term(rhs, theory)}"
            lines.append(line)
            trace_doc.append(
                {
                    "rule": rule,
                    "depth": depth,
                    "lhs": print_term(lhs, theory),
                    "rhs": print_term(rhs, theory),
                }
            )
    _emit(
        args,
        lines,
        {
            "command": "derive",
            "status": verdict.status,
            "proved": verdict.proved,
            "trace": trace_doc,
        },
    )
    return 0 if verdict.proved else 1


def cmd_order(args) -> int:
    doc = _read_json(args.poset)
    base = validate_poset(
        doc.get("elements", []), [tuple(p) for p in doc.get("order", [])]
    )
    lo = parse_formal_sum(args.left, base).collapse()
    hi = parse_formal_sum(args.right, base).collapse()
    below = sdist_leq_flow(base, lo, hi)
    _emit(
        args,
        ["below" if below else "not below"],
        {"command": "order", "below": below},
    )
    return 0 if below else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradedsem",
        description="Decide behavioural preorders on finite ordered transition systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_logic=False):
        p.add_argument("--sem", required=True,
                       choices=["bisim", "sim", "readysim", "sync", "ptrace"])
        if with_logic:
            p.add_argument("--logic", choices=["hml", "pos-hml", "sync", "prob"])
        p.add_argument("--depth", type=int, default=None,
                       help="depth bound (default: |states| * |states|)")
        p.add_argument("--no-validate", action="store_true",
                       help="skip the per-semantics monotonicity check")
        p.add_argument("--output", choices=["text", "json"], default="text")

    p = sub.add_parser("check", help="does the right state refine the left one?")
    common(p)
    p.add_argument("left", help="A.json:state")
    p.add_argument("right", help="B.json:state")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("eval", help="evaluate a formula at a state")
    common(p, with_logic=True)
    p.add_argument("state", help="S.json:state")
    p.add_argument("formula")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("distinguish", help="find a distinguishing formula")
    common(p, with_logic=True)
    p.add_argument("--max-vectors", type=int, default=4096,
                   help="cap on the formula-family enumeration")
    p.add_argument("left", help="A.json:state")
    p.add_argument("right", help="B.json:state")
    p.set_defaults(func=cmd_distinguish)

    p = sub.add_parser("derive", help="derive an inequation in context")
    p.add_argument("--theory",
                   choices=["jsl", "jsl_down", "jsl_sync", "pt", "subconvex"])
    p.add_argument("--theory-file")
    p.add_argument("--labels", help="comma-separated label set (default a,b)")
    p.add_argument("--width", type=int, default=2, help="axiom-scheme width bound")
    p.add_argument("--max-denominator", type=int, default=2,
                   help="coefficient grid bound for pt/subconvex")
    p.add_argument("--ctx", help='context, e.g. "x<=y, z"')
    p.add_argument("--max-size", type=int, default=7, help="term-size bound")
    p.add_argument("--max-facts", type=int, default=400_000, help="step budget")
    p.add_argument("--trace", action="store_true", help="print the derivation")
    p.add_argument("--output", choices=["text", "json"], default="text")
    p.add_argument("goal", help='"lhs <= rhs : depth"')
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("order", help="compare two formal sums over a poset")
    p.add_argument("--output", choices=["text", "json"], default="text")
    p.add_argument("poset", help="poset.json with elements/order")
    p.add_argument("left", help='formal sum, e.g. "1/2 x + 1/2 y"')
    p.add_argument("right", help='formal sum, e.g. "1 y"')
    p.set_defaults(func=cmd_order)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        UsageError,
        PosetError,
        SubDistError,
        SystemError_,
        TheoryError,
        LogicError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
