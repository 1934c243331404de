"""Fragment and shape analyses on formulas and inductive definitions.

Three syntactic checks gate the pipeline: membership in the fragment whose
encoding collapses heaplet quantification (outer existentials over a
disjunction of universally quantified quantifier-free conjunctive blocks),
well-formedness of definition systems, and the heap-reducing property
(every recursive case carries a top-level points-to separating conjunct).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .slast import (
    And,
    ATOMS,
    Emp,
    Exists,
    Forall,
    Implies,
    Or,
    PointsTo,
    PredApp,
    SepConj,
    SID,
    SLFormula,
    children,
    flatten_case,
    free_vars,
)


@dataclass(frozen=True)
class FragmentReport:
    verdict: bool
    category: str  # "EDH" | "well-formed-SID" | "heap-reducing"
    witness: Optional[str] = None  # path to the offending subformula

    def __post_init__(self):
        if not self.verdict and self.witness is None:
            raise ValueError("negative verdicts must carry a witness path")

    def __bool__(self) -> bool:
        return self.verdict


def _path(parts: list[str]) -> str:
    return "/".join(parts) if parts else "<root>"


def is_qf_conjunctive(phi: SLFormula) -> Optional[str]:
    """None if phi is quantifier-free and disjunction-free, else a witness path."""
    return _qfc(phi, [])


def _qfc(phi: SLFormula, at: list[str]) -> Optional[str]:
    if isinstance(phi, ATOMS):
        return None
    if isinstance(phi, (And, SepConj)):
        op = "And" if isinstance(phi, And) else "SepConj"
        for i, a in enumerate(phi.args):
            w = _qfc(a, at + [f"{op}[{i}]"])
            if w is not None:
                return w
        return None
    return _path(at + [type(phi).__name__])


def check_edh(phi: SLFormula) -> FragmentReport:
    """Shape check: ∃y⃗. ⋁_i ∀u⃗_i. (quantifier-free conjunctive).

    Degenerate prefixes are fine: plain quantifier-free conjunctive
    formulas, a single disjunct, or missing quantifier blocks all pass.
    """
    at: list[str] = []
    while isinstance(phi, Exists):
        at.append(f"Exists {phi.var.name}")
        phi = phi.body
    disjuncts = [(phi, at)] if not isinstance(phi, Or) else [
        (d, at + [f"Or[{i}]"]) for i, d in enumerate(phi.args)
    ]
    for d, dat in disjuncts:
        here = list(dat)
        while isinstance(d, Forall):
            here.append(f"Forall {d.var.name}")
            d = d.body
        w = _qfc(d, here)
        if w is not None:
            return FragmentReport(False, "EDH", w)
    return FragmentReport(True, "EDH")


def check_sid(sid: SID) -> FragmentReport:
    """Every case must be quantifier-free conjunctive, with free variables
    scoped by the parameters and existentials, over declared predicates."""
    declared = set(sid.preds)
    for d in sid:
        scope = set(d.params) | set(d.exists)
        for j, case in enumerate(d.cases):
            at = [f"{d.name}[{j}]"]
            w = _qfc(case, at)
            if w is not None:
                return FragmentReport(False, "well-formed-SID", w)
            loose = free_vars(case) - scope
            if loose:
                v = min(loose, key=lambda v: v.name)
                return FragmentReport(
                    False, "well-formed-SID", _path(at + [f"unbound {v.name}"])
                )
            for k, part in enumerate(flatten_case(case)):
                if isinstance(part, PredApp) and part.pred not in declared:
                    return FragmentReport(
                        False,
                        "well-formed-SID",
                        _path(at + [f"[{k}]", f"undeclared {part.pred}"]),
                    )
    return FragmentReport(True, "well-formed-SID")


def check_heap_reducing(sid: SID) -> FragmentReport:
    """True iff each case either has no predicate atoms or has a top-level
    points-to among its separating conjuncts (up to AC-flattening of * and ∧)."""
    for d in sid:
        for j, case in enumerate(d.cases):
            parts = flatten_case(case)
            has_pred = any(isinstance(p, PredApp) for p in parts)
            has_pto = any(isinstance(p, PointsTo) for p in parts)
            if has_pred and not has_pto:
                return FragmentReport(
                    False, "heap-reducing", _path([f"{d.name}[{j}]", "no points-to"])
                )
    return FragmentReport(True, "heap-reducing")
