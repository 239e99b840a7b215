"""Normal-form models of the builtin theories.

Each builtin theory is interpreted into the matching behaviour space
over a chosen finite base poset: choice operations build layers, the
deadlock constant is the dead behaviour, subconvex combinations mix
subdistributions, and actions prepend a letter to every trace.  These
models are the semantic ground truth against which derivations are
checked for soundness.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

from .behaviours import (
    Behaviour,
    CarrierTooLarge,
    Semantics,
    beh_leq,
    enumerate_mn1,
    node,
    semantics,
    sync_dead,
)
from .posets import FinPoset, ONE, product_with_discrete
from .subdist import SubDist, ZERO, all_subdists, sdist_leq_flow
from .theory import GradedTheory, Model, Operation

THEORY_SEMANTICS = {
    "jsl": "bisim",
    "jsl_down": "sim",
    "jsl_sync": "sync",
    "pt": "ptrace",
    "subconvex": "ptrace",
}


class LayerModel(Model):
    """Behaviour-space model for the choice theories (jsl family)."""

    def __init__(self, theory: GradedTheory, base: FinPoset, depth: int,
                 carrier_cap: int = 4096):
        kind = THEORY_SEMANTICS[theory.name]
        labels = sorted(
            {op.meta[1] for op in theory.signature.operations if op.meta[0] == "sum"},
            key=len,
        )
        alphabet = sorted({a for labs in labels for a in labs}, key=repr)
        self.sem = semantics(kind, alphabet)
        self.base = base
        self.depth = depth
        self.carrier_cap = carrier_cap
        self._carriers: Dict[int, List[Behaviour]] = {}

    def carrier(self, m: int) -> Sequence[Behaviour]:
        if m not in self._carriers:
            try:
                self._carriers[m] = enumerate_mn1(
                    self.sem, m, self.carrier_cap, self.base
                )
            except CarrierTooLarge:
                self._carriers[m] = []
                self.sampled = True
        return self._carriers[m]

    def leq(self, m: int, u: Behaviour, v: Behaviour) -> bool:
        return beh_leq(u, v, self.base)

    def apply(self, op: Operation, m: int, args: Sequence[Behaviour]) -> Behaviour:
        tag = op.meta[0]
        if tag == "sum":
            return node(
                self.sem.layer_kind, m + 1, list(zip(op.meta[1], args)), self.base
            )
        if tag == "const0":
            return sync_dead(m)
        raise ValueError(f"operation {op.name!r} has no layer interpretation")


class TraceModel(Model):
    """Subdistribution model for the subconvex and trace theories.

    Depth-m carrier: subdistributions over (length-m words x base), the
    word component discrete.  Carriers are infinite in spirit; we expose
    a deterministic bounded family for valuation enumeration.
    """

    sampled = True

    def __init__(self, theory: GradedTheory, base: FinPoset, depth: int,
                 max_support: int = 2, max_denominator: int = 2):
        alphabet = sorted(
            {op.meta[1] for op in theory.signature.operations if op.meta[0] == "act"},
            key=repr,
        )
        self.with_actions = bool(alphabet)
        self.alphabet = alphabet or ["a"]
        self.base = base
        self.depth = depth
        self.max_support = max_support
        self.max_denominator = max_denominator
        self._posets: Dict[int, FinPoset] = {}
        self._carriers: Dict[int, List[SubDist]] = {}

    def level_poset(self, m: int) -> FinPoset:
        if m not in self._posets:
            if not self.with_actions:
                m_eff = 0
            else:
                m_eff = m
            words = list(itertools.product(self.alphabet, repeat=m_eff))
            self._posets[m] = product_with_discrete(words, self.base)
        return self._posets[m]

    def carrier(self, m: int) -> Sequence[SubDist]:
        if m not in self._carriers:
            self._carriers[m] = list(
                all_subdists(self.level_poset(m), self.max_support, self.max_denominator)
            )
        return self._carriers[m]

    def leq(self, m: int, u: SubDist, v: SubDist) -> bool:
        return sdist_leq_flow(self.level_poset(m), u, v)

    def apply(self, op: Operation, m: int, args: Sequence[SubDist]) -> SubDist:
        tag = op.meta[0]
        if tag == "cc":
            acc: Dict = {}
            for p, arg in zip(op.meta[1], args):
                for key, w in arg.weights:
                    acc[key] = acc.get(key, ZERO) + p * w
            return SubDist.make(self.level_poset(m), acc)
        if tag == "act":
            a = op.meta[1]
            target = self.level_poset(m + 1)
            acc = {}
            for (word, x), w in args[0].weights:
                key = ((a,) + word, x)
                acc[key] = acc.get(key, ZERO) + w
            return SubDist.make(target, acc)
        raise ValueError(f"operation {op.name!r} has no trace interpretation")


def normal_form_model(theory: GradedTheory, base: FinPoset, depth: int, **kw) -> Model:
    if theory.name in ("jsl", "jsl_down", "jsl_sync"):
        return LayerModel(theory, base, depth, **kw)
    if theory.name in ("pt", "subconvex"):
        return TraceModel(theory, base, depth, **kw)
    raise ValueError(f"no normal-form model for theory {theory.name!r}")


def interpret_closed_term(model: Model, theory: GradedTheory, t, k: int):
    """Interpretation of a depth-k term over the model's base: variables
    map to depth-0 units of elements they NAME (used for the free-model
    agreement checks, where the context is the base poset itself)."""
    from .theory import Term, evaluate_term

    base = model.base  # type: ignore[attr-defined]
    if isinstance(model, LayerModel):
        units = {
            x: (
                Behaviour("sync", 0, ("live", x))
                if model.sem.layer_kind == "sync"
                else Behaviour(model.sem.layer_kind, 0, x)
            )
            for x in base.elements
        }
    else:
        units = {
            x: SubDist.make(model.level_poset(0), {((), x): Fraction(1)})
            for x in base.elements
        }
    return evaluate_term(model, theory.signature, t, k, units, 0)
