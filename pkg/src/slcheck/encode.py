"""Model-preserving first-order encoding.

Universal-conjunctive formulas translate into a pair (phi_fo, phi_eta):
phi_fo constrains the structure and phi_eta characterizes the unique
candidate heaplet via the distinguished variable x* (here `_hp`).  A
definition system translates into one closed sentence tying each P_fo /
P_eta pair to its cases; an entailment translates into an obligation set
whose unsatisfiability is equivalent to validity under the weak semantics.

Also here: the fold/unfold axiom encodings and the rewrite that inlines
existentials bound by a points-to field (replacing the witness u with the
field function applied to the source, and dropping the quantifier).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .fol import (
    FOAnd,
    FOEq,
    FOExists,
    FOFalse,
    FOForall,
    FOFormula,
    FOIff,
    FOImplies,
    FOLt,
    FONot,
    FOOr,
    FORel,
    FOSentence,
    FOTrue,
    FOVocabulary,
    HP,
    Obligation,
    eta_name,
    field_fn_name,
    fo_and,
    fo_exists,
    fo_forall,
    fo_name,
    fo_not,
    fo_or,
    fo_subst,
)
from .slast import (
    And,
    Const,
    Emp,
    Eq,
    Exists,
    FieldTerm,
    Forall,
    Implies,
    LOC,
    Lt,
    Neq,
    Or,
    PointsTo,
    PredApp,
    PredDef,
    SepConj,
    SID,
    SLFormula,
    Term,
    Var,
    Vocabulary,
    flatten_case,
    free_vars,
    nil_const,
    subst,
    term_vars,
)


class NotUniversalConjunctive(Exception):
    pass


def build_fo_vocab(vocab: Vocabulary) -> FOVocabulary:
    rels = {}
    for p, sig in vocab.preds.items():
        rels[fo_name(p)] = tuple(sig)
        rels[eta_name(p)] = tuple(sig) + (LOC,)
    return FOVocabulary(dict(vocab.constants), vocab.record_shape, rels)


# ---------------------------------------------------------------------------
# Formula translation (Table of universal-conjunctive rows)


def encode_uc(phi: SLFormula) -> tuple[FOFormula, FOFormula]:
    """Translate a universal-conjunctive formula into (phi_fo, phi_eta).

    phi_eta has the heaplet variable `_hp` free (unless statically false);
    statically-false heaplet formulas propagate so the equivalence and
    disjointness side conditions simplify.
    """
    if isinstance(phi, Eq):
        return FOEq(phi.left, phi.right), FOFalse()
    if isinstance(phi, Neq):
        return fo_not(FOEq(phi.left, phi.right)), FOFalse()
    if isinstance(phi, Lt):
        return FOLt(phi.left, phi.right), FOFalse()
    if isinstance(phi, Emp):
        return FOTrue(), FOFalse()
    if isinstance(phi, PredApp):
        return (
            FORel(fo_name(phi.pred), phi.args),
            FORel(eta_name(phi.pred), phi.args + (HP,)),
        )
    if isinstance(phi, PointsTo):
        t = phi.source
        conjuncts: list[FOFormula] = [fo_not(FOEq(t, nil_const()))]
        for i, f in enumerate(phi.fields, start=1):
            conjuncts.append(FOEq(f, FieldTerm(i, t, f.sort)))
        return fo_and(conjuncts), FOEq(HP, t)
    if isinstance(phi, And):
        fo, eta = encode_uc(phi.args[0])
        for a in phi.args[1:]:
            afo, aeta = encode_uc(a)
            fo = fo_and([fo, afo, _same_heaplet(eta, aeta)])
            if isinstance(eta, FOFalse) or isinstance(aeta, FOFalse):
                eta = FOFalse()
        return fo, eta
    if isinstance(phi, SepConj):
        fo, eta = encode_uc(phi.args[0])
        for a in phi.args[1:]:
            afo, aeta = encode_uc(a)
            disjoint: FOFormula = FOTrue()
            if not isinstance(eta, FOFalse) and not isinstance(aeta, FOFalse):
                disjoint = fo_not(fo_exists((HP,), fo_and([eta, aeta])))
            fo = fo_and([fo, afo, disjoint])
            eta = fo_or([eta, aeta])
        return fo, eta
    if isinstance(phi, Forall):
        afo, aeta = encode_uc(phi.body)
        x = phi.var
        fo: FOFormula = fo_forall((x,), afo)
        if not isinstance(aeta, FOFalse):
            x1 = Var(x.name + "~1", x.sort)
            x2 = Var(x.name + "~2", x.sort)
            indep = fo_forall(
                (x1, x2, HP),
                FOIff(fo_subst(aeta, {x: x1}), fo_subst(aeta, {x: x2})),
            )
            fo = fo_and([fo, indep])
            # the heaplet does not depend on x, so any witness describes it
            aeta = fo_exists((x,), aeta)
        return fo, aeta
    raise NotUniversalConjunctive(f"not universal-conjunctive: {type(phi).__name__}")


def _same_heaplet(a_eta: FOFormula, b_eta: FOFormula) -> FOFormula:
    """forall x*. a_eta <-> b_eta, simplified when a side is statically false."""
    a_false, b_false = isinstance(a_eta, FOFalse), isinstance(b_eta, FOFalse)
    if a_false and b_false:
        return FOTrue()
    if a_false:
        return fo_not(fo_exists((HP,), b_eta))
    if b_false:
        return fo_not(fo_exists((HP,), a_eta))
    return fo_forall((HP,), FOIff(a_eta, b_eta))


# ---------------------------------------------------------------------------
# System encoding


def encode_sid(sid: SID) -> FOSentence:
    parts: list[FOFormula] = []
    for d in sorted(sid.preds.values(), key=lambda d: d.name):
        cases = [encode_uc(c) for c in d.cases]
        p_fo = FORel(fo_name(d.name), d.params)
        p_eta = FORel(eta_name(d.name), d.params + (HP,))
        phi_fo = FOIff(
            p_fo, fo_exists(d.exists, fo_or([cfo for cfo, _ in cases]))
        )
        eta_clauses = [
            FOImplies(cfo, _pred_heaplet_eq(p_eta, ceta)) for cfo, ceta in cases
        ]
        phi_eta = fo_forall(d.exists, fo_and(eta_clauses))
        parts.append(fo_forall(d.params, fo_and([phi_fo, phi_eta])))
    return fo_and(parts)


def _pred_heaplet_eq(p_eta: FORel, case_eta: FOFormula) -> FOFormula:
    if isinstance(case_eta, FOFalse):
        return fo_not(fo_exists((HP,), p_eta))
    return fo_forall((HP,), FOIff(p_eta, case_eta))


# ---------------------------------------------------------------------------
# Entailment obligations


def encode_entailment_parts(
    antecedent: SLFormula,
    u_vars: tuple[Var, ...],
    disjuncts: tuple[SLFormula, ...],
) -> tuple[FOFormula, FOFormula]:
    """(phi_fo of the antecedent, the refutation clause).

    The refutation clause asserts that no consequent disjunct both matches
    the antecedent's heaplet and holds; a model of it together with phi_fo
    (and the system sentence) is a counter-model to the entailment.
    """
    phi_fo, phi_eta = encode_uc(antecedent)
    clauses = []
    for psi in disjuncts:
        psi_fo, psi_eta = encode_uc(psi)
        clauses.append(FOImplies(_same_heaplet(phi_eta, psi_eta), fo_not(psi_fo)))
    return phi_fo, fo_forall(u_vars, fo_and(clauses))


def encode_entailment(
    antecedent: SLFormula,
    u_vars: tuple[Var, ...],
    disjuncts: tuple[SLFormula, ...],
    sid: SID,
    vocab: Vocabulary,
    include_sid: bool = True,
    axioms: tuple[FOSentence, ...] = (),
) -> Obligation:
    phi_fo, refutation = encode_entailment_parts(antecedent, u_vars, disjuncts)
    sentences: list[FOSentence] = []
    provenance: list[str] = []
    if include_sid:
        sentences.append(encode_sid(sid))
        provenance.append("sid")
    for ax in axioms:
        sentences.append(ax)
        provenance.append("axiom")
    sentences += [phi_fo, refutation]
    provenance += ["antecedent", "refutation-clause"]
    return Obligation(
        build_fo_vocab(vocab), tuple(sentences), tuple(provenance)
    )


# ---------------------------------------------------------------------------
# Fold / unfold axioms


def _case_subst(d: PredDef, args: tuple[Term, ...], wits: tuple[Term, ...]):
    if len(args) != len(d.params) or len(wits) != len(d.exists):
        raise ValueError(
            f"arity mismatch instantiating {d.name}: "
            f"{len(args)} args, {len(wits)} witnesses"
        )
    m = dict(zip(d.params, args))
    m.update(zip(d.exists, wits))
    return m


def encode_fold_axiom(
    sid: SID, pred: str, args: tuple[Term, ...], wits: tuple[Term, ...]
) -> tuple[FOSentence, SLFormula]:
    """FO encoding and SL rendering of fold(Phi(P), args, wits):
    each instantiated case implies the predicate (with the heaplet tied to
    the case's heaplet formula on the FO side)."""
    d = sid.preds[pred]
    m = _case_subst(d, args, wits)
    p_fo = FORel(fo_name(pred), args)
    p_eta = FORel(eta_name(pred), args + (HP,))
    fo_parts: list[FOFormula] = []
    sl_parts: list[SLFormula] = []
    for case in d.cases:
        inst = subst(case, m)
        cfo, ceta = encode_uc(inst)
        fo_parts.append(
            FOImplies(cfo, fo_and([p_fo, _pred_heaplet_eq(p_eta, ceta)]))
        )
        sl_parts.append(Implies(inst, PredApp(pred, args)))
    fo = fo_and(fo_parts)
    sl = sl_parts[0] if len(sl_parts) == 1 else And(tuple(sl_parts))
    if not sl_parts:  # a predicate with no cases: the axiom is vacuous
        sl = Implies(Emp(), Emp())
    return fo, sl


def encode_unfold_axiom(
    sid: SID, pred: str, args: tuple[Term, ...], fresh: tuple[Const, ...]
) -> tuple[FOSentence, SLFormula]:
    """FO encoding and SL rendering of unfold(Phi(P), args, fresh):
    the predicate implies the disjunction of its cases with the existential
    witnesses replaced by the fresh constants."""
    d = sid.preds[pred]
    m = _case_subst(d, args, tuple(fresh))
    p_fo = FORel(fo_name(pred), args)
    p_eta = FORel(eta_name(pred), args + (HP,))
    fo_disjuncts: list[FOFormula] = []
    sl_disjuncts: list[SLFormula] = []
    for case in d.cases:
        inst = subst(case, m)
        cfo, ceta = encode_uc(inst)
        fo_disjuncts.append(fo_and([cfo, _pred_heaplet_eq(p_eta, ceta)]))
        sl_disjuncts.append(inst)
    fo = FOImplies(p_fo, fo_or(fo_disjuncts))
    sl_rhs: SLFormula
    if not sl_disjuncts:
        sl_rhs = Neq(nil_const(), nil_const())  # no case: predicate is empty
    elif len(sl_disjuncts) == 1:
        sl_rhs = sl_disjuncts[0]
    else:
        sl_rhs = Or(tuple(sl_disjuncts))
    return fo, Implies(PredApp(pred, args), sl_rhs)


# ---------------------------------------------------------------------------
# Points-to inlining of existentials


def inline_points_to_existentials(phi: SLFormula) -> SLFormula:
    """Rewrite ∃u.(… * t↦⟨…,u,…⟩ * …) by replacing u with the field term of
    t and dropping the quantifier; applied bottom-up wherever the pattern
    matches in every disjunct under the quantifier.  Non-matching
    quantifiers are left in place."""
    if isinstance(phi, (And, Or, SepConj)):
        return type(phi)(tuple(inline_points_to_existentials(a) for a in phi.args))
    if isinstance(phi, Forall):
        return Forall(phi.var, inline_points_to_existentials(phi.body))
    if isinstance(phi, Implies):
        return Implies(
            inline_points_to_existentials(phi.left),
            inline_points_to_existentials(phi.right),
        )
    if isinstance(phi, Exists):
        body = inline_points_to_existentials(phi.body)
        inlined = _inline_var(body, phi.var)
        return inlined if inlined is not None else Exists(phi.var, body)
    return phi


def _inline_var(body: SLFormula, u: Var) -> Optional[SLFormula]:
    if isinstance(body, Or):
        parts = [_inline_var(a, u) for a in body.args]
        if any(p is None for p in parts):
            return None
        return Or(tuple(parts))
    repl = _find_binding(body, u)
    if repl is None:
        return None
    return subst(body, {u: repl})


def _find_binding(conjunctive: SLFormula, u: Var) -> Optional[Term]:
    for part in flatten_case(conjunctive):
        if isinstance(part, PointsTo) and u not in term_vars(part.source):
            for i, f in enumerate(part.fields, start=1):
                if f == u:
                    return FieldTerm(i, part.source, u.sort)
    return None


def inline_sid(sid: SID) -> SID:
    """Apply the points-to inlining to every definition case, shrinking the
    existential witness lists; unbindable witnesses are kept."""
    out: dict[str, PredDef] = {}
    for d in sid:
        new_cases: list[SLFormula] = []
        used: set[Var] = set()
        for case in d.cases:
            cur = case
            changed = True
            while changed:
                changed = False
                for v in d.exists:
                    if v not in free_vars(cur):
                        continue
                    repl = _find_binding(cur, v)
                    if repl is not None and v not in term_vars(repl):
                        cur = subst(cur, {v: repl})
                        changed = True
            used |= free_vars(cur) & set(d.exists)
            new_cases.append(cur)
        remaining = tuple(v for v in d.exists if v in used)
        out[d.name] = PredDef(d.name, d.params, remaining, tuple(new_cases))
    return SID(out)
