"""First-order sentences over the encoding vocabulary, finite FO structures,
and the correspondence between heap structures and FO structures.

The encoding vocabulary has the two sorts of the source logic, one constant
per program constant (plus skolem and unfolding constants), field functions
m_1..m_n from locations to the record field sorts, and per inductive
predicate P a pair of relations: P_fo over P's signature and P_eta over the
signature extended by one location (the heaplet membership relation).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Union

from .slast import (
    Add,
    Const,
    FieldTerm,
    INT,
    IntLit,
    LOC,
    NIL,
    Sub,
    Term,
    Var,
    subst_term,
    term_vars,
)
from .finite import NULL, HeapStructure, UnboundedIntError

# the distinguished heaplet variable
HP = Var("_hp", LOC)


@dataclass(frozen=True)
class FOTrue:
    pass


@dataclass(frozen=True)
class FOFalse:
    pass


@dataclass(frozen=True)
class FOEq:
    left: Term
    right: Term


@dataclass(frozen=True)
class FOLt:
    left: Term
    right: Term


@dataclass(frozen=True)
class FORel:
    name: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class FONot:
    arg: "FOFormula"


@dataclass(frozen=True)
class FOAnd:
    args: tuple["FOFormula", ...]


@dataclass(frozen=True)
class FOOr:
    args: tuple["FOFormula", ...]


@dataclass(frozen=True)
class FOImplies:
    left: "FOFormula"
    right: "FOFormula"


@dataclass(frozen=True)
class FOIff:
    left: "FOFormula"
    right: "FOFormula"


@dataclass(frozen=True)
class FOForall:
    vars: tuple[Var, ...]
    body: "FOFormula"


@dataclass(frozen=True)
class FOExists:
    vars: tuple[Var, ...]
    body: "FOFormula"


FOFormula = Union[
    FOTrue, FOFalse, FOEq, FOLt, FORel, FONot, FOAnd, FOOr, FOImplies, FOIff,
    FOForall, FOExists,
]
FOSentence = FOFormula  # closed by convention; enforced where it matters


def fo_and(args: list[FOFormula]) -> FOFormula:
    flat: list[FOFormula] = []
    for a in args:
        if isinstance(a, FOTrue):
            continue
        if isinstance(a, FOFalse):
            return FOFalse()
        flat.extend(a.args) if isinstance(a, FOAnd) else flat.append(a)
    if not flat:
        return FOTrue()
    return flat[0] if len(flat) == 1 else FOAnd(tuple(flat))


def fo_or(args: list[FOFormula]) -> FOFormula:
    flat: list[FOFormula] = []
    for a in args:
        if isinstance(a, FOFalse):
            continue
        if isinstance(a, FOTrue):
            return FOTrue()
        flat.extend(a.args) if isinstance(a, FOOr) else flat.append(a)
    if not flat:
        return FOFalse()
    return flat[0] if len(flat) == 1 else FOOr(tuple(flat))


def fo_not(a: FOFormula) -> FOFormula:
    if isinstance(a, FOTrue):
        return FOFalse()
    if isinstance(a, FOFalse):
        return FOTrue()
    if isinstance(a, FONot):
        return a.arg
    return FONot(a)


def fo_forall(vs: tuple[Var, ...], body: FOFormula) -> FOFormula:
    if not vs or isinstance(body, (FOTrue, FOFalse)):
        return body
    if isinstance(body, FOForall):
        return FOForall(vs + body.vars, body.body)
    return FOForall(vs, body)


def fo_exists(vs: tuple[Var, ...], body: FOFormula) -> FOFormula:
    if not vs or isinstance(body, (FOTrue, FOFalse)):
        return body
    if isinstance(body, FOExists):
        return FOExists(vs + body.vars, body.body)
    return FOExists(vs, body)


def fo_subst(phi: FOFormula, mapping: Mapping[Var, Term]) -> FOFormula:
    mapping = {v: t for v, t in mapping.items() if t != v}
    if not mapping:
        return phi
    if isinstance(phi, (FOTrue, FOFalse)):
        return phi
    if isinstance(phi, (FOEq, FOLt)):
        return type(phi)(subst_term(phi.left, mapping), subst_term(phi.right, mapping))
    if isinstance(phi, FORel):
        return FORel(phi.name, tuple(subst_term(a, mapping) for a in phi.args))
    if isinstance(phi, FONot):
        return FONot(fo_subst(phi.arg, mapping))
    if isinstance(phi, (FOAnd, FOOr)):
        return type(phi)(tuple(fo_subst(a, mapping) for a in phi.args))
    if isinstance(phi, (FOImplies, FOIff)):
        return type(phi)(fo_subst(phi.left, mapping), fo_subst(phi.right, mapping))
    if isinstance(phi, (FOForall, FOExists)):
        inner = {v: t for v, t in mapping.items() if v not in phi.vars}
        clash = {w for t in inner.values() for w in term_vars(t)} & set(phi.vars)
        if clash:
            renames = {}
            taken = {v.name for v in phi.vars} | {
                w.name for t in inner.values() for w in term_vars(t)
            }
            for v in clash:
                k = 0
                while f"{v.name}~{k}" in taken:
                    k += 1
                nv = Var(f"{v.name}~{k}", v.sort)
                taken.add(nv.name)
                renames[v] = nv
            new_vars = tuple(renames.get(v, v) for v in phi.vars)
            return type(phi)(new_vars, fo_subst(fo_subst(phi.body, renames), inner))
        return type(phi)(phi.vars, fo_subst(phi.body, inner))
    raise TypeError(f"not an FO formula: {phi!r}")


def fo_free_vars(phi: FOFormula) -> frozenset[Var]:
    if isinstance(phi, (FOTrue, FOFalse)):
        return frozenset()
    if isinstance(phi, (FOEq, FOLt)):
        return term_vars(phi.left) | term_vars(phi.right)
    if isinstance(phi, FORel):
        out: frozenset[Var] = frozenset()
        for a in phi.args:
            out |= term_vars(a)
        return out
    if isinstance(phi, FONot):
        return fo_free_vars(phi.arg)
    if isinstance(phi, (FOAnd, FOOr)):
        out = frozenset()
        for a in phi.args:
            out |= fo_free_vars(a)
        return out
    if isinstance(phi, (FOImplies, FOIff)):
        return fo_free_vars(phi.left) | fo_free_vars(phi.right)
    if isinstance(phi, (FOForall, FOExists)):
        return fo_free_vars(phi.body) - set(phi.vars)
    raise TypeError(f"not an FO formula: {phi!r}")


def fo_rel_names(phi: FOFormula) -> frozenset[str]:
    if isinstance(phi, FORel):
        return frozenset((phi.name,))
    out: frozenset[str] = frozenset()
    if isinstance(phi, FONot):
        return fo_rel_names(phi.arg)
    if isinstance(phi, (FOAnd, FOOr)):
        for a in phi.args:
            out |= fo_rel_names(a)
        return out
    if isinstance(phi, (FOImplies, FOIff)):
        return fo_rel_names(phi.left) | fo_rel_names(phi.right)
    if isinstance(phi, (FOForall, FOExists)):
        return fo_rel_names(phi.body)
    return out


@dataclass(frozen=True)
class FOVocabulary:
    constants: dict  # name -> sort
    field_sorts: tuple[str, ...]
    rels: dict  # name -> tuple of argument sorts (includes P_fo and P_eta)

    def __post_init__(self):
        self.constants.setdefault(NIL, LOC)

    def with_constants(self, extra: dict) -> "FOVocabulary":
        return FOVocabulary({**self.constants, **extra}, self.field_sorts, self.rels)


@dataclass(frozen=True)
class Obligation:
    vocab: FOVocabulary
    sentences: tuple[FOSentence, ...]
    provenance: tuple[str, ...]  # per sentence: "sid" | "antecedent" |
    #                              "refutation-clause" | "axiom"

    def __post_init__(self):
        if len(self.sentences) != len(self.provenance):
            raise ValueError("provenance must annotate every sentence")


def field_fn_name(i: int) -> str:
    return f"m{i}"


def fo_name(pred: str) -> str:
    return f"{pred}_fo"


def eta_name(pred: str) -> str:
    return f"{pred}_eta"


# ---------------------------------------------------------------------------
# Finite FO structures and evaluation


@dataclass(frozen=True, eq=False)
class FOStructure:
    locs: tuple[str, ...]
    ints: tuple[int, ...] = ()
    ints_exhaustive: bool = False
    consts: dict = field(default_factory=dict)  # name -> element
    funcs: dict = field(default_factory=dict)  # name -> {args tuple: element}
    rels: dict = field(default_factory=dict)  # name -> frozenset of tuples

    def __post_init__(self):
        if NULL not in self.locs:
            raise ValueError("location domain must contain null")
        self.consts.setdefault(NIL, NULL)

    def carrier(self, sort: str) -> tuple:
        return self.locs if sort == LOC else self.ints


def fo_eval_term(M: FOStructure, v: Mapping, t: Term):
    if isinstance(t, Const):
        return M.consts[t.name]
    if isinstance(t, Var):
        return v[t]
    if isinstance(t, IntLit):
        return t.value
    if isinstance(t, Add):
        return fo_eval_term(M, v, t.left) + fo_eval_term(M, v, t.right)
    if isinstance(t, Sub):
        return fo_eval_term(M, v, t.left) - fo_eval_term(M, v, t.right)
    if isinstance(t, FieldTerm):
        arg = fo_eval_term(M, v, t.arg)
        return M.funcs[field_fn_name(t.index)][(arg,)]
    raise TypeError(f"not a term: {t!r}")


def eval_fo(M: FOStructure, v: Mapping, phi: FOFormula) -> bool:
    """Standard FO satisfaction over explicit finite carriers."""
    if isinstance(phi, FOTrue):
        return True
    if isinstance(phi, FOFalse):
        return False
    if isinstance(phi, FOEq):
        return fo_eval_term(M, v, phi.left) == fo_eval_term(M, v, phi.right)
    if isinstance(phi, FOLt):
        return fo_eval_term(M, v, phi.left) < fo_eval_term(M, v, phi.right)
    if isinstance(phi, FORel):
        args = tuple(fo_eval_term(M, v, a) for a in phi.args)
        return args in M.rels.get(phi.name, frozenset())
    if isinstance(phi, FONot):
        return not eval_fo(M, v, phi.arg)
    if isinstance(phi, FOAnd):
        return all(eval_fo(M, v, a) for a in phi.args)
    if isinstance(phi, FOOr):
        return any(eval_fo(M, v, a) for a in phi.args)
    if isinstance(phi, FOImplies):
        return (not eval_fo(M, v, phi.left)) or eval_fo(M, v, phi.right)
    if isinstance(phi, FOIff):
        return eval_fo(M, v, phi.left) == eval_fo(M, v, phi.right)
    if isinstance(phi, (FOForall, FOExists)):
        doms = []
        for var in phi.vars:
            if var.sort == INT and not M.ints_exhaustive:
                raise UnboundedIntError(
                    f"quantifier over int variable {var.name} but the integer "
                    "window is not exhaustive"
                )
            doms.append(M.carrier(var.sort))
        vals = (
            eval_fo(M, {**v, **dict(zip(phi.vars, combo))}, phi.body)
            for combo in itertools.product(*doms)
        )
        return all(vals) if isinstance(phi, FOForall) else any(vals)
    raise TypeError(f"not an FO formula: {phi!r}")


# ---------------------------------------------------------------------------
# Structure correspondence


def fo_of_heap_structure(
    M: HeapStructure, field_sorts: Optional[tuple[str, ...]] = None
) -> FOStructure:
    """The FO structure corresponding to a determined-heap structure:
    field functions read the heap (any fixed value at null), P_fo holds where
    some heaplet supports P, and P_eta relates a tuple to the members of its
    (unique) heaplet."""
    if field_sorts is None:
        recs = list(M.heap.values())
        shape = recs[0] if recs else ()
        field_sorts = tuple(INT if isinstance(x, int) else LOC for x in shape)
    funcs: dict = {}
    for i, sort in enumerate(field_sorts, start=1):
        table = {(l,): rec[i - 1] for l, rec in M.heap.items()}
        table[(NULL,)] = 0 if sort == INT else NULL
        funcs[field_fn_name(i)] = table
    rels: dict = {}
    for p, interp in M.preds.items():
        seen: dict = {}
        for args, eta in interp:
            if args in seen and seen[args] != eta:
                raise ValueError(
                    f"structure is not determined-heap at {p}{args}"
                )
            seen[args] = eta
        rels[fo_name(p)] = frozenset(seen)
        rels[eta_name(p)] = frozenset(
            args + (l,) for args, eta in seen.items() for l in eta
        )
    return FOStructure(
        locs=M.locs,
        ints=M.ints,
        ints_exhaustive=M.ints_exhaustive,
        consts=dict(M.consts),
        funcs=funcs,
        rels=rels,
    )
