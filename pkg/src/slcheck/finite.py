"""Explicit finite heap structures and the brute-force oracle semantics.

This module is the ground truth the rest of the pipeline is validated
against: the satisfaction relation evaluated literally (separating
conjunction enumerates all heaplet partitions), the definition transformer
with Kleene iteration to the least fixpoint, and a bounded decision
procedure for theory-free quantifier-free entailments that enumerates
determined-heap structures.

Location elements are strings (with ``"null"`` designated), integer
elements are Python ints; sorts never mix because the element types differ.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

from .slast import (
    Add,
    And,
    ATOMS,
    Const,
    Emp,
    Eq,
    Exists,
    FieldTerm,
    Forall,
    Implies,
    INT,
    IntLit,
    LOC,
    Lt,
    Neq,
    NIL,
    Or,
    PointsTo,
    PredApp,
    SepConj,
    SID,
    SLFormula,
    Term,
    Var,
    subformulas,
)

NULL = "null"

Elem = object  # str for loc, int for int
Heaplet = frozenset
Assignment = dict  # Var -> Elem


class UnboundedIntError(Exception):
    """Quantification over int against a non-exhaustive window."""


class ResourceError(Exception):
    """Enumeration exceeded the configured budget."""


@dataclass(frozen=True, eq=False)
class HeapStructure:
    locs: tuple[str, ...]  # includes "null"
    ints: tuple[int, ...] = ()
    ints_exhaustive: bool = False
    heap: dict = field(default_factory=dict)  # non-null loc -> record tuple
    consts: dict = field(default_factory=dict)  # name -> element
    preds: dict = field(default_factory=dict)  # name -> frozenset[(args, eta)]

    def __post_init__(self):
        if NULL not in self.locs:
            raise ValueError("location domain must contain null")
        missing = set(self.locs) - {NULL} - set(self.heap)
        if missing:
            raise ValueError(f"heap not total: missing {sorted(missing)}")
        if self.consts.get(NIL, NULL) != NULL:
            raise ValueError("nil must denote null")
        self.consts.setdefault(NIL, NULL)

    def carrier(self, sort: str) -> tuple:
        return self.locs if sort == LOC else self.ints

    def nonnull(self) -> tuple[str, ...]:
        return tuple(l for l in self.locs if l != NULL)


def eval_term(M: HeapStructure, v: Assignment, t: Term) -> Elem:
    if isinstance(t, Const):
        return M.consts[t.name]
    if isinstance(t, Var):
        return v[t]
    if isinstance(t, IntLit):
        return t.value
    if isinstance(t, Add):
        return eval_term(M, v, t.left) + eval_term(M, v, t.right)
    if isinstance(t, FieldTerm):
        loc = eval_term(M, v, t.arg)
        return M.heap[loc][t.index - 1]
    raise TypeError(f"not a term: {t!r}")


def satisfies(M: HeapStructure, v: Assignment, eta: Heaplet, phi: SLFormula) -> bool:
    """The satisfaction relation, evaluated literally.

    Pure atoms and emp hold only at the empty heaplet; points-to at exactly
    the singleton of its source; * tries every split of the heaplet; the
    implication connective (axioms) is classical at the same heaplet.
    """
    if isinstance(phi, (Eq, Neq)):
        a, b = eval_term(M, v, phi.left), eval_term(M, v, phi.right)
        same = a == b
        return eta == frozenset() and (same if isinstance(phi, Eq) else not same)
    if isinstance(phi, Lt):
        return eta == frozenset() and eval_term(M, v, phi.left) < eval_term(
            M, v, phi.right
        )
    if isinstance(phi, Emp):
        return eta == frozenset()
    if isinstance(phi, PointsTo):
        src = eval_term(M, v, phi.source)
        if src == NULL or eta != frozenset((src,)):
            return False
        return M.heap[src] == tuple(eval_term(M, v, f) for f in phi.fields)
    if isinstance(phi, PredApp):
        args = tuple(eval_term(M, v, a) for a in phi.args)
        return (args, eta) in M.preds.get(phi.pred, frozenset())
    if isinstance(phi, And):
        return all(satisfies(M, v, eta, a) for a in phi.args)
    if isinstance(phi, Or):
        return any(satisfies(M, v, eta, a) for a in phi.args)
    if isinstance(phi, SepConj):
        return _sep_sat(M, v, eta, phi.args)
    if isinstance(phi, Implies):
        return (not satisfies(M, v, eta, phi.left)) or satisfies(M, v, eta, phi.right)
    if isinstance(phi, (Exists, Forall)):
        dom = _quant_domain(M, phi.var)
        vals = (satisfies(M, {**v, phi.var: d}, eta, phi.body) for d in dom)
        return any(vals) if isinstance(phi, Exists) else all(vals)
    raise TypeError(f"not an SL formula: {phi!r}")


def _quant_domain(M: HeapStructure, var: Var) -> tuple:
    if var.sort == LOC:
        return M.locs
    if not M.ints_exhaustive:
        raise UnboundedIntError(
            f"quantifier over int variable {var.name} but the integer window "
            "is not exhaustive"
        )
    return M.ints


def _sep_sat(M, v, eta, args) -> bool:
    if len(args) == 1:
        return satisfies(M, v, eta, args[0])
    items = tuple(eta)
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            part = frozenset(combo)
            if satisfies(M, v, part, args[0]) and _sep_sat(
                M, v, eta - part, args[1:]
            ):
                return True
    return False


# ---------------------------------------------------------------------------
# Fast heaplet-set evaluation (quantifier-free formulas)
#
# Heaplets over n non-null locations are bitmasks 0..2^n-1; the set of
# satisfying heaplets of a subformula is itself a bitmask over those 2^n
# heaplet indices.  This is what makes brute-force entailment checking and
# transformer iteration affordable.


class _BitCtx:
    def __init__(self, M: HeapStructure):
        self.M = M
        self.slots = M.nonnull()
        self.index = {l: i for i, l in enumerate(self.slots)}
        n = 1 << len(self.slots)
        self.n_heaplets = n
        self.universe = (1 << n) - 1
        # disjoint-union table: for each heaplet pair with empty intersection,
        # the index of their union
        self.du = [
            [(a | b) if (a & b) == 0 else -1 for b in range(n)] for a in range(n)
        ]

    def heaplet_of_mask(self, mask: int) -> Heaplet:
        return frozenset(
            self.slots[i] for i in range(len(self.slots)) if mask & (1 << i)
        )

    def mask_of_heaplet(self, eta: Iterable) -> int:
        m = 0
        for l in eta:
            m |= 1 << self.index[l]
        return m


def _sat_mask(ctx: _BitCtx, v: Assignment, phi: SLFormula) -> int:
    """Bitmask of heaplet indices at which phi holds (QF formulas only)."""
    M = ctx.M
    if isinstance(phi, (Eq, Neq, Lt, Emp)):
        if isinstance(phi, Emp):
            ok = True
        elif isinstance(phi, Lt):
            ok = eval_term(M, v, phi.left) < eval_term(M, v, phi.right)
        else:
            same = eval_term(M, v, phi.left) == eval_term(M, v, phi.right)
            ok = same if isinstance(phi, Eq) else not same
        return 1 if ok else 0  # bit 0 is the empty heaplet
    if isinstance(phi, PointsTo):
        src = eval_term(M, v, phi.source)
        if src == NULL:
            return 0
        if M.heap[src] != tuple(eval_term(M, v, f) for f in phi.fields):
            return 0
        return 1 << (1 << ctx.index[src])
    if isinstance(phi, PredApp):
        args = tuple(eval_term(M, v, a) for a in phi.args)
        out = 0
        for targs, eta in M.preds.get(phi.pred, frozenset()):
            if targs == args:
                out |= 1 << ctx.mask_of_heaplet(eta)
        return out
    if isinstance(phi, And):
        out = ctx.universe
        for a in phi.args:
            out &= _sat_mask(ctx, v, a)
        return out
    if isinstance(phi, Or):
        out = 0
        for a in phi.args:
            out |= _sat_mask(ctx, v, a)
        return out
    if isinstance(phi, Implies):
        return (ctx.universe & ~_sat_mask(ctx, v, phi.left)) | _sat_mask(
            ctx, v, phi.right
        )
    if isinstance(phi, SepConj):
        out = _sat_mask(ctx, v, phi.args[0])
        for a in phi.args[1:]:
            out = _sep_mask(ctx, out, _sat_mask(ctx, v, a))
            if not out:
                return 0
        return out
    raise TypeError(f"quantifier-free formula expected, got {phi!r}")


def _sep_mask(ctx: _BitCtx, A: int, B: int) -> int:
    out = 0
    du = ctx.du
    a = A
    while a:
        i = (a & -a).bit_length() - 1
        a &= a - 1
        row = du[i]
        b = B
        while b:
            j = (b & -b).bit_length() - 1
            b &= b - 1
            u = row[j]
            if u >= 0:
                out |= 1 << u
    return out


# ---------------------------------------------------------------------------
# Transformer, fixpoints


def transformer_step(M: HeapStructure, sid: SID) -> dict:
    """One application of the definition transformer to M's interpretations."""
    ctx = _BitCtx(M)
    new: dict = {}
    for d in sid:
        tuples = set()
        doms = [M.carrier(p.sort) for p in d.params]
        edoms = [M.carrier(p.sort) for p in d.exists]
        for args in itertools.product(*doms):
            for wit in itertools.product(*edoms):
                v = dict(zip(d.params, args))
                v.update(zip(d.exists, wit))
                for case in d.cases:
                    mask = _sat_mask(ctx, v, case)
                    m = mask
                    while m:
                        h = (m & -m).bit_length() - 1
                        m &= m - 1
                        tuples.add((args, ctx.heaplet_of_mask(h)))
        new[d.name] = frozenset(tuples)
    return new


def lfp_interpret(M0: HeapStructure, sid: SID) -> tuple[HeapStructure, int]:
    """Kleene iteration from empty interpretations; returns (M, iterations)."""
    M = replace(M0, preds={d.name: frozenset() for d in sid})
    iters = 0
    while True:
        new = transformer_step(M, sid)
        iters += 1
        if new == M.preds:
            return M, iters
        M = replace(M, preds=new)


def is_fixpoint(M: HeapStructure, sid: SID) -> bool:
    return transformer_step(M, sid) == {d.name: M.preds.get(d.name, frozenset())
                                        for d in sid}


def is_determined_heap(M: HeapStructure) -> bool:
    for interp in M.preds.values():
        seen: dict = {}
        for args, eta in interp:
            if seen.setdefault(args, eta) != eta:
                return False
    return True


# ---------------------------------------------------------------------------
# Bounded entailment oracle


@dataclass(frozen=True)
class Countermodel:
    M: HeapStructure
    v: Assignment
    eta: Heaplet


@dataclass(frozen=True)
class ValidUpTo:
    bound: int


OracleVerdict = object  # ValidUpTo | Countermodel


def _check_theory_free(phis: Iterable[SLFormula]):
    for phi in phis:
        for sub in subformulas(phi):
            if isinstance(sub, (Lt, Exists, Forall)):
                raise ValueError(
                    f"oracle input must be theory-free and quantifier-free, "
                    f"found {type(sub).__name__}"
                )
            for t in _atom_terms_deep(sub):
                if isinstance(t, (IntLit, Add)):
                    raise ValueError("oracle input must be theory-free")


def _atom_terms_deep(phi):
    from .slast import atom_terms

    for t in atom_terms(phi):
        stack = [t]
        while stack:
            x = stack.pop()
            yield x
            if isinstance(x, Add):
                stack.extend((x.left, x.right))
            elif isinstance(x, FieldTerm):
                stack.append(x.arg)


def decide_qf_entailment(
    gamma: list[SLFormula],
    psi: SLFormula,
    bound: int = 3,
    budget: int = 20_000_000,
):
    """Bounded-model entailment check for theory-free QF formulas.

    Enumerates determined-heap structures with up to `bound` non-null
    locations (the weak-semantics model class is determined-heap, so this
    loses no counter-models), assignments of the mentioned constants, and
    heaplets.  Formulas in gamma that contain an implication are treated as
    axioms and must hold at every heaplet; the rest constrain the candidate
    heaplet directly.  Returns ValidUpTo(bound) or the first Countermodel.

    Predicate interpretations are enumerated only over argument tuples that
    the formulas can actually query (the evaluations of predicate-atom
    argument vectors), one heaplet choice or absence per tuple; satisfaction
    never inspects other tuples, so this is exhaustive up to the bound.
    """
    _check_theory_free(list(gamma) + [psi])
    all_phis = list(gamma) + [psi]
    consts = sorted(
        {t.name for phi in all_phis for sub in subformulas(phi)
         for t in _atom_terms_deep(sub) if isinstance(t, Const)} - {NIL}
    )
    pred_arity: dict[str, int] = {}
    pred_atoms: list[PredApp] = []
    n_fields: Optional[int] = None
    for phi in all_phis:
        for sub in subformulas(phi):
            if isinstance(sub, PredApp):
                pred_arity[sub.pred] = len(sub.args)
                pred_atoms.append(sub)
            if isinstance(sub, PointsTo):
                if n_fields is None:
                    n_fields = len(sub.fields)
                elif n_fields != len(sub.fields):
                    raise ValueError("mixed record arities")
    if n_fields is None:
        n_fields = 1
    axioms = [g for g in gamma if any(isinstance(s, Implies) for s in subformulas(g))]
    plain = [g for g in gamma if g not in axioms]

    work = 0
    for n in range(0, bound + 1):
        locs = (NULL,) + tuple(f"l{i + 1}" for i in range(n))
        n_heaplets = 1 << n
        for cvals in itertools.product(locs, repeat=len(consts)):
            cmap = {NIL: NULL, **dict(zip(consts, cvals))}
            for hvals in itertools.product(
                itertools.product(locs, repeat=n_fields), repeat=n
            ):
                heap = dict(zip(locs[1:], hvals))
                base = HeapStructure(locs=locs, heap=heap, consts=cmap)
                ctx = _BitCtx(base)
                # argument tuples the formulas can query, per predicate
                relevant: dict[str, list] = {p: [] for p in pred_arity}
                for atom in pred_atoms:
                    args = tuple(eval_term(base, {}, a) for a in atom.args)
                    if args not in relevant[atom.pred]:
                        relevant[atom.pred].append(args)
                slots = [(p, args) for p in sorted(relevant) for args in relevant[p]]
                # per slot: -1 = tuple absent, otherwise the heaplet index
                for choice in itertools.product(range(-1, n_heaplets),
                                                repeat=len(slots)):
                    work += 1
                    if work > budget:
                        raise ResourceError(
                            f"oracle budget exceeded after {work} structures"
                        )
                    preds: dict[str, set] = {p: set() for p in pred_arity}
                    for (p, args), c in zip(slots, choice):
                        if c >= 0:
                            preds[p].add((args, ctx.heaplet_of_mask(c)))
                    M = replace(
                        base, preds={p: frozenset(s) for p, s in preds.items()}
                    )
                    mctx = _BitCtx(M)
                    if any(
                        _sat_mask(mctx, {}, ax) != mctx.universe for ax in axioms
                    ):
                        continue
                    lhs = mctx.universe
                    for g in plain:
                        lhs &= _sat_mask(mctx, {}, g)
                        if not lhs:
                            break
                    if not lhs:
                        continue
                    bad = lhs & ~_sat_mask(mctx, {}, psi)
                    if bad:
                        h = (bad & -bad).bit_length() - 1
                        return Countermodel(M, {}, mctx.heaplet_of_mask(h))
    return ValidUpTo(bound)
