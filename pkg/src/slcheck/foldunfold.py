"""Fold/unfold proof search for theory-free quantifier-free entailments.

Rather than committing to a proof strategy, the prover enumerates cumulative
finite sets of fold and unfold axioms by breadth-first closure over the
ground terms of the problem (unfold steps contribute fresh constants that
join the term universe for the next round), and after each round asks the
solver whether the axioms together with the antecedent contradict the
refutation clause of the consequent.  The first unsatisfiable round yields a
proof; the reported axiom set is shrunk to the solver's unsat core.

The base check deliberately omits the inductive-definition sentence: the
axioms alone are sound for arbitrary fixpoint interpretations, which is what
makes the verdict meaningful for the weak semantics as well.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from .encode import (
    encode_entailment,
    encode_fold_axiom,
    encode_unfold_axiom,
)
from .fol import FOSentence, Obligation
from .slast import (
    Add,
    And,
    Const,
    Emp,
    Eq,
    Exists,
    FieldTerm,
    Forall,
    Implies,
    IntLit,
    Lt,
    Neq,
    Or,
    PointsTo,
    PredApp,
    SepConj,
    SID,
    SLFormula,
    Sub,
    Term,
    Vocabulary,
    atom_terms,
    formula_consts,
    sep,
    subformulas,
)
from . import smt

FRESH_PREFIX = "_c"


class NotTheoryFreeQF(Exception):
    """The entailment falls outside the fragment the prover covers."""


@dataclass(frozen=True)
class FoldUnfoldAxiom:
    kind: str  # "fold" | "unfold"
    pred: str
    args: tuple[Term, ...]
    wits: tuple[Term, ...]  # fold witnesses, or the unfold's fresh constants
    sentence: FOSentence
    sl: SLFormula  # quantifier-free rendering with the implication connective


@dataclass(frozen=True)
class AxiomRound:
    """One element of the cumulative axiom stream."""

    index: int
    axioms: tuple[FoldUnfoldAxiom, ...]
    terms: tuple[Term, ...]  # ground universe after this round
    fresh: tuple[Const, ...]  # all fresh constants introduced so far


@dataclass(frozen=True)
class ProofObject:
    axioms: tuple[FoldUnfoldAxiom, ...]  # unsat-core subset of the round
    round_index: int
    round_size: int  # axioms enumerated in the successful round
    obligation: Obligation  # minimized base check; replaying it gives unsat
    transcript: str  # solver output of the minimized replay


@dataclass(frozen=True)
class Exhausted:
    rounds: int
    last_round: Optional[AxiomRound]
    reason: str  # "budget" | "inconclusive"


def check_theory_free_qf(phi: SLFormula, allow_quantified: bool = False) -> None:
    for sub in subformulas(phi):
        if isinstance(sub, Lt):
            raise NotTheoryFreeQF("integer comparison outside the fragment")
        if isinstance(sub, (Exists, Forall)) and not allow_quantified:
            raise NotTheoryFreeQF("quantifier outside the fragment")
        for t in atom_terms(sub):
            for x in _term_parts(t):
                if isinstance(x, (IntLit, Add, Sub)):
                    raise NotTheoryFreeQF("arithmetic outside the fragment")


def _term_parts(t: Term):
    yield t
    if isinstance(t, (Add, Sub)):
        yield from _term_parts(t.left)
        yield from _term_parts(t.right)
    elif isinstance(t, FieldTerm):
        yield from _term_parts(t.arg)


def seed_terms(
    vocab: Vocabulary, gammas: Sequence[SLFormula], psi: SLFormula
) -> tuple[Const, ...]:
    """Depth-0 ground terms: every constant of the problem, nil included."""
    names: dict[str, str] = dict(vocab.constants)
    for phi in list(gammas) + [psi]:
        for c in formula_consts(phi):
            names.setdefault(c.name, c.sort)
    return tuple(Const(n, s) for n, s in sorted(names.items()))


def enumerate_axioms(
    sid: SID,
    vocab: Vocabulary,
    seeds: Sequence[Term],
    budget: int,
    max_axioms: int = 4000,
) -> Iterator[AxiomRound]:
    """Cumulative rounds of fold/unfold axioms over a growing term universe.

    Each round instantiates every predicate at every argument tuple over the
    current terms: one unfold per application (with fresh constants for the
    case witnesses) and one fold per choice of witness terms.  Rounds are
    monotone; the stream ends after `budget` rounds or at the axiom cap.
    """
    terms: list[Term] = list(seeds)
    seen_terms = set(terms)
    axioms: dict[tuple, FoldUnfoldAxiom] = {}
    fresh_all: list[Const] = []
    counter = 0
    capped = False
    for i in range(1, budget + 1):
        new_terms: list[Term] = []
        for name in sorted(sid.preds):
            d = sid.preds[name]
            sig = vocab.preds[name]
            pools = [[t for t in terms if t.sort == s] for s in sig]
            wit_sorts = [v.sort for v in d.exists]
            for args in itertools.product(*pools):
                ukey = ("unfold", name, args)
                if ukey not in axioms:
                    fresh = tuple(
                        Const(f"{FRESH_PREFIX}{counter + j}", s)
                        for j, s in enumerate(wit_sorts)
                    )
                    counter += len(fresh)
                    fo, sl = encode_unfold_axiom(sid, name, args, fresh)
                    axioms[ukey] = FoldUnfoldAxiom(
                        "unfold", name, args, fresh, fo, sl
                    )
                    for c in fresh:
                        new_terms.append(c)
                        fresh_all.append(c)
                wit_pools = [[t for t in terms if t.sort == s] for s in wit_sorts]
                for wits in itertools.product(*wit_pools):
                    fkey = ("fold", name, args, wits)
                    if fkey in axioms:
                        continue
                    fo, sl = encode_fold_axiom(sid, name, args, wits)
                    axioms[fkey] = FoldUnfoldAxiom("fold", name, args, wits, fo, sl)
                if len(axioms) >= max_axioms:
                    capped = True
                    break
            if capped:
                break
        for t in new_terms:
            if t not in seen_terms:
                seen_terms.add(t)
                terms.append(t)
        yield AxiomRound(i, tuple(axioms.values()), tuple(terms), tuple(fresh_all))
        if capped:
            return


def _base_obligation(
    gammas: Sequence[SLFormula],
    psi: SLFormula,
    sid: SID,
    vocab: Vocabulary,
    axioms: Sequence[FoldUnfoldAxiom],
    fresh: Sequence[Const],
) -> Obligation:
    disjuncts = psi.args if isinstance(psi, Or) else (psi,)
    o = encode_entailment(
        sep(list(gammas)),
        (),
        tuple(disjuncts),
        sid,
        vocab,
        include_sid=False,
        axioms=tuple(a.sentence for a in axioms),
    )
    extra = {c.name: c.sort for c in fresh}
    return Obligation(o.vocab.with_constants(extra), o.sentences, o.provenance)


def prove(
    gammas: Sequence[SLFormula],
    psi: SLFormula,
    sid: SID,
    vocab: Vocabulary,
    budget: int = 3,
    per_check_timeout: float = 30.0,
    solver_cmd=None,
    cancel: Optional[threading.Event] = None,
    max_axioms: int = 4000,
):
    """Search for a fold/unfold proof of `gammas |- psi`.

    Returns a ProofObject on success and Exhausted when the budget runs out;
    an inconclusive solver answer on some round does not abort the search.
    Sound for the weak semantics; complete for this fragment given enough
    budget and solver time.
    """
    for phi in list(gammas) + [psi]:
        check_theory_free_qf(phi)
    for d in sid:
        for case in d.cases:
            check_theory_free_qf(case)
    seeds = seed_terms(vocab, gammas, psi)
    rounds = 0
    last: Optional[AxiomRound] = None
    inconclusive = False
    for rnd in enumerate_axioms(sid, vocab, seeds, budget, max_axioms):
        rounds, last = rnd.index, rnd
        if cancel is not None and cancel.is_set():
            break
        o = _base_obligation(gammas, psi, sid, vocab, rnd.axioms, rnd.fresh)
        v = smt.check(
            o,
            timeout=per_check_timeout,
            solver_cmd=solver_cmd,
            cancel=cancel,
            get_core=True,
        )
        if not v.is_unsat:
            inconclusive = inconclusive or v.status == "unknown"
            continue
        kept = _core_axioms(rnd.axioms, v.core)
        fresh = [c for c in rnd.fresh if _mentions(kept, c)]
        o2 = _base_obligation(gammas, psi, sid, vocab, kept, fresh)
        v2 = smt.check(
            o2,
            timeout=per_check_timeout,
            solver_cmd=solver_cmd,
            cancel=cancel,
        )
        if not v2.is_unsat:
            # the core should replay; if the solver wobbles, fall back to
            # the full round rather than report an unreplayable proof
            kept, o2, v2 = rnd.axioms, o, v
        return ProofObject(
            axioms=tuple(kept),
            round_index=rnd.index,
            round_size=len(rnd.axioms),
            obligation=o2,
            transcript=v2.raw,
        )
    return Exhausted(
        rounds=rounds,
        last_round=last,
        reason="inconclusive" if inconclusive else "budget",
    )


def _core_axioms(axioms: Sequence[FoldUnfoldAxiom], core) -> list[FoldUnfoldAxiom]:
    if core is None:
        return list(axioms)
    # sentence order in the base obligation: axioms first, then the
    # antecedent and the refutation clause
    return [axioms[i] for i in core if i < len(axioms)]


def _mentions(axioms: Sequence[FoldUnfoldAxiom], c: Const) -> bool:
    return any(c in formula_consts(a.sl) for a in axioms)


def axiom_to_dict(a: FoldUnfoldAxiom) -> dict:
    from .frontend import print_formula, print_term

    return {
        "kind": a.kind,
        "predicate": a.pred,
        "args": [print_term(t) for t in a.args],
        "witnesses": [print_term(t) for t in a.wits],
        "formula": print_formula(a.sl),
    }


def proof_to_dict(p: ProofObject, transcript_path: Optional[str] = None) -> dict:
    doc = {
        "axioms": [axiom_to_dict(a) for a in p.axioms],
        "round": p.round_index,
        "round_size": p.round_size,
    }
    if transcript_path is not None:
        doc["transcript_path"] = transcript_path
    return doc
