"""Core data model: terms, separation-logic formulas, vocabularies, and
inductive definition systems.

All values are immutable (frozen dataclasses) and hashable, so they can be
shared freely between pipeline stages and threads.

Sorts are plain strings; the two sorts in play are ``loc`` and ``int``.
The integer theory vocabulary is fixed to 0, 1, + and <; every other
comparison is normalized away by the frontend.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Union

LOC = "loc"
INT = "int"
NIL = "nil"


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Const:
    name: str
    sort: str


@dataclass(frozen=True)
class Var:
    name: str
    sort: str


@dataclass(frozen=True)
class IntLit:
    value: int

    @property
    def sort(self) -> str:
        return INT


@dataclass(frozen=True)
class Add:
    left: "Term"
    right: "Term"

    @property
    def sort(self) -> str:
        return INT


@dataclass(frozen=True)
class Sub:
    left: "Term"
    right: "Term"

    @property
    def sort(self) -> str:
        return INT


@dataclass(frozen=True)
class FieldTerm:
    """Marker term m_i(t): the i-th record field of location t.

    Produced by the points-to inlining rewrite and by the encoder; never
    part of user-facing surface syntax.
    """

    index: int  # 1-based field position
    arg: "Term"
    sort: str


Term = Union[Const, Var, IntLit, Add, Sub, FieldTerm]


def term_sort(t: Term) -> str:
    return t.sort


def term_vars(t: Term) -> frozenset[Var]:
    if isinstance(t, Var):
        return frozenset((t,))
    if isinstance(t, (Add, Sub)):
        return term_vars(t.left) | term_vars(t.right)
    if isinstance(t, FieldTerm):
        return term_vars(t.arg)
    return frozenset()


def term_consts(t: Term) -> frozenset[Const]:
    if isinstance(t, Const):
        return frozenset((t,))
    if isinstance(t, (Add, Sub)):
        return term_consts(t.left) | term_consts(t.right)
    if isinstance(t, FieldTerm):
        return term_consts(t.arg)
    return frozenset()


def subst_term(t: Term, mapping: Mapping[Var, Term]) -> Term:
    if isinstance(t, Var):
        return mapping.get(t, t)
    if isinstance(t, Add):
        return Add(subst_term(t.left, mapping), subst_term(t.right, mapping))
    if isinstance(t, Sub):
        return Sub(subst_term(t.left, mapping), subst_term(t.right, mapping))
    if isinstance(t, FieldTerm):
        return FieldTerm(t.index, subst_term(t.arg, mapping), t.sort)
    return t


# ---------------------------------------------------------------------------
# Formulas


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term


@dataclass(frozen=True)
class Neq:
    left: Term
    right: Term


@dataclass(frozen=True)
class Lt:
    """Strict integer comparison; the only theory atom after normalization."""

    left: Term
    right: Term


@dataclass(frozen=True)
class Emp:
    pass


@dataclass(frozen=True)
class PointsTo:
    source: Term
    fields: tuple[Term, ...]


@dataclass(frozen=True)
class PredApp:
    pred: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class And:
    args: tuple["SLFormula", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["SLFormula", ...]


@dataclass(frozen=True)
class SepConj:
    args: tuple["SLFormula", ...]


@dataclass(frozen=True)
class Exists:
    var: Var
    body: "SLFormula"


@dataclass(frozen=True)
class Forall:
    var: Var
    body: "SLFormula"


@dataclass(frozen=True)
class Implies:
    """Classical implication; only legal inside fold/unfold axioms."""

    left: "SLFormula"
    right: "SLFormula"


SLFormula = Union[
    Eq, Neq, Lt, Emp, PointsTo, PredApp, And, Or, SepConj, Exists, Forall, Implies
]

ATOMS = (Eq, Neq, Lt, Emp, PointsTo, PredApp)
PURE_ATOMS = (Eq, Neq, Lt)


def conj(args: list["SLFormula"]) -> "SLFormula":
    """n-ary ∧ smart constructor; flattens nested Ands."""
    flat: list[SLFormula] = []
    for a in args:
        flat.extend(a.args) if isinstance(a, And) else flat.append(a)
    if not flat:
        raise ValueError("empty conjunction")
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def disj(args: list["SLFormula"]) -> "SLFormula":
    flat: list[SLFormula] = []
    for a in args:
        flat.extend(a.args) if isinstance(a, Or) else flat.append(a)
    if not flat:
        raise ValueError("empty disjunction")
    return flat[0] if len(flat) == 1 else Or(tuple(flat))


def sep(args: list["SLFormula"]) -> "SLFormula":
    flat: list[SLFormula] = []
    for a in args:
        flat.extend(a.args) if isinstance(a, SepConj) else flat.append(a)
    if not flat:
        raise ValueError("empty separating conjunction")
    return flat[0] if len(flat) == 1 else SepConj(tuple(flat))


def children(phi: SLFormula) -> tuple[SLFormula, ...]:
    if isinstance(phi, (And, Or, SepConj)):
        return phi.args
    if isinstance(phi, (Exists, Forall)):
        return (phi.body,)
    if isinstance(phi, Implies):
        return (phi.left, phi.right)
    return ()


def subformulas(phi: SLFormula) -> Iterator[SLFormula]:
    yield phi
    for c in children(phi):
        yield from subformulas(c)


def atom_terms(phi: SLFormula) -> tuple[Term, ...]:
    if isinstance(phi, (Eq, Neq, Lt)):
        return (phi.left, phi.right)
    if isinstance(phi, PointsTo):
        return (phi.source,) + phi.fields
    if isinstance(phi, PredApp):
        return phi.args
    return ()


def free_vars(phi: SLFormula) -> frozenset[Var]:
    if isinstance(phi, ATOMS):
        out: frozenset[Var] = frozenset()
        for t in atom_terms(phi):
            out |= term_vars(t)
        return out
    if isinstance(phi, (Exists, Forall)):
        return free_vars(phi.body) - {phi.var}
    out = frozenset()
    for c in children(phi):
        out |= free_vars(c)
    return out


def formula_consts(phi: SLFormula) -> frozenset[Const]:
    out: frozenset[Const] = frozenset()
    for sub in subformulas(phi):
        for t in atom_terms(sub):
            out |= term_consts(t)
    return out


def _fresh_like(v: Var, taken: set[str]) -> Var:
    k = 0
    while f"{v.name}~{k}" in taken:
        k += 1
    return Var(f"{v.name}~{k}", v.sort)


def subst(phi: SLFormula, mapping: Mapping[Var, Term]) -> SLFormula:
    """Capture-avoiding substitution of terms for free variables."""
    mapping = {v: t for v, t in mapping.items() if t != v}
    if not mapping:
        return phi
    if isinstance(phi, (Eq, Neq, Lt)):
        return type(phi)(subst_term(phi.left, mapping), subst_term(phi.right, mapping))
    if isinstance(phi, Emp):
        return phi
    if isinstance(phi, PointsTo):
        return PointsTo(
            subst_term(phi.source, mapping),
            tuple(subst_term(f, mapping) for f in phi.fields),
        )
    if isinstance(phi, PredApp):
        return PredApp(phi.pred, tuple(subst_term(a, mapping) for a in phi.args))
    if isinstance(phi, (And, Or, SepConj)):
        return type(phi)(tuple(subst(a, mapping) for a in phi.args))
    if isinstance(phi, Implies):
        return Implies(subst(phi.left, mapping), subst(phi.right, mapping))
    if isinstance(phi, (Exists, Forall)):
        inner = {v: t for v, t in mapping.items() if v != phi.var}
        if not inner:
            return phi
        clash = {
            w.name for t in inner.values() for w in term_vars(t)
        }
        var, body = phi.var, phi.body
        if var.name in clash:
            taken = clash | {v.name for v in free_vars(body)} | {v.name for v in inner}
            var = _fresh_like(phi.var, taken)
            body = subst(body, {phi.var: var})
        return type(phi)(var, subst(body, inner))
    raise TypeError(f"not an SL formula: {phi!r}")


def alpha_equal(a: SLFormula, b: SLFormula) -> bool:
    """Structural equality up to renaming of bound variables."""
    return _alpha(a, b, {}, {})


def _alpha(a, b, env_a: dict, env_b: dict) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, ATOMS):
        ta, tb = atom_terms(a), atom_terms(b)
        if isinstance(a, PredApp) and a.pred != b.pred:
            return False
        return len(ta) == len(tb) and all(
            _alpha_term(x, y, env_a, env_b) for x, y in zip(ta, tb)
        )
    if isinstance(a, (And, Or, SepConj)):
        return len(a.args) == len(b.args) and all(
            _alpha(x, y, env_a, env_b) for x, y in zip(a.args, b.args)
        )
    if isinstance(a, Implies):
        return _alpha(a.left, b.left, env_a, env_b) and _alpha(
            a.right, b.right, env_a, env_b
        )
    if isinstance(a, (Exists, Forall)):
        if a.var.sort != b.var.sort:
            return False
        tag = len(env_a)
        return _alpha(
            a.body, b.body, {**env_a, a.var: tag}, {**env_b, b.var: tag}
        )
    raise TypeError(f"not an SL formula: {a!r}")


def _alpha_term(x: Term, y: Term, env_a: dict, env_b: dict) -> bool:
    if isinstance(x, Var) or isinstance(y, Var):
        if not (isinstance(x, Var) and isinstance(y, Var)):
            return False
        if x in env_a or y in env_b:
            return env_a.get(x, ("f", x)) == env_b.get(y, ("f", y))
        return x == y
    if type(x) is not type(y):
        return False
    if isinstance(x, (Const, IntLit)):
        return x == y
    if isinstance(x, Add):
        return _alpha_term(x.left, y.left, env_a, env_b) and _alpha_term(
            x.right, y.right, env_a, env_b
        )
    if isinstance(x, FieldTerm):
        return x.index == y.index and _alpha_term(x.arg, y.arg, env_a, env_b)
    return False


# ---------------------------------------------------------------------------
# Vocabulary and inductive definitions


@dataclass(frozen=True)
class Vocabulary:
    """Signature of a problem: one global record shape, constants, predicates."""

    record_shape: tuple[str, ...]
    constants: dict[str, str] = field(default_factory=dict)  # name -> sort
    preds: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if NIL not in self.constants:
            self.constants[NIL] = LOC
        if self.constants[NIL] != LOC:
            raise ValueError("nil must have the location sort")
        for s in self.record_shape:
            if s not in (LOC, INT):
                raise ValueError(f"unknown field sort {s!r}")
        for p in self.preds:
            if p in ("<", "+", "0", "1"):
                raise ValueError(f"predicate name {p!r} collides with theory symbol")

    def __hash__(self):
        return hash((self.record_shape, tuple(sorted(self.constants.items())),
                     tuple(sorted(self.preds.items()))))


def nil_const() -> Const:
    return Const(NIL, LOC)


@dataclass(frozen=True)
class PredDef:
    name: str
    params: tuple[Var, ...]
    exists: tuple[Var, ...]
    cases: tuple[SLFormula, ...]


@dataclass(frozen=True)
class SID:
    preds: dict[str, PredDef]

    def __hash__(self):
        return hash(tuple(sorted(self.preds)))

    def __iter__(self) -> Iterator[PredDef]:
        return iter(self.preds.values())


def flatten_case(phi: SLFormula) -> list[SLFormula]:
    """AC-flatten a QF conjunctive formula over * and ∧ into its conjuncts."""
    if isinstance(phi, (SepConj, And)):
        out: list[SLFormula] = []
        for a in phi.args:
            out.extend(flatten_case(a))
        return out
    return [phi]
