"""Fold/unfold prover: axiom enumeration fairness and base checks."""

import pytest

from slcheck import foldunfold, smt
from slcheck.encode import inline_points_to_existentials
from slcheck.normalize import skolemize
from slcheck.slast import Const, Exists, IntLit, LOC, Lt, Eq, Var
from tests.conftest import make_problem

a = Const("a", LOC)
b = Const("b", LOC)
c = Const("c", LOC)


def _inputs(problem):
    gammas = [inline_points_to_existentials(g) for g in problem.antecedents]
    psi = inline_points_to_existentials(problem.consequent)
    gammas, _, _ = skolemize(gammas)
    return gammas, psi


# -- fragment gate -----------------------------------------------------------------


def test_gate_rejects_theory_atoms():
    i = Const("i", "int")
    with pytest.raises(foldunfold.NotTheoryFreeQF):
        foldunfold.check_theory_free_qf(Lt(i, IntLit(3)))


def test_gate_rejects_quantifiers():
    x = Var("x", LOC)
    with pytest.raises(foldunfold.NotTheoryFreeQF):
        foldunfold.check_theory_free_qf(Exists(x, Eq(x, x)))


def test_gate_accepts_qf_heap_formula():
    p = make_problem("fold-step")
    for g in p.antecedents:
        foldunfold.check_theory_free_qf(g)


# -- enumeration --------------------------------------------------------------------


def test_budget_zero_empty_stream():
    p = make_problem("unfold-step")
    seeds = foldunfold.seed_terms(p.vocabulary, list(p.antecedents), p.consequent)
    rounds = list(
        foldunfold.enumerate_axioms(p.sid, p.vocabulary, seeds, budget=0)
    )
    assert rounds == []


def test_round_one_contains_the_unfold_step():
    # for constants {a, b, nil} the first round unfolds lseg at (a, b)
    p = make_problem("unfold-step")
    gammas, psi = _inputs(p)
    seeds = foldunfold.seed_terms(p.vocabulary, gammas, psi)
    (round1,) = foldunfold.enumerate_axioms(p.sid, p.vocabulary, seeds, budget=1)
    unfolds = [
        ax for ax in round1.axioms
        if ax.kind == "unfold" and ax.pred == "lseg" and ax.args == (a, b)
    ]
    assert len(unfolds) == 1
    assert all(w.name.startswith("_c") for w in unfolds[0].wits)


def test_round_one_contains_the_fold_step():
    # for constants {a, b, c, nil} the first round folds lseg at (a, b)
    # with witness c
    p = make_problem("fold-step")
    gammas, psi = _inputs(p)
    seeds = foldunfold.seed_terms(p.vocabulary, gammas, psi)
    assert {a, b, c} <= set(seeds)
    (round1,) = foldunfold.enumerate_axioms(p.sid, p.vocabulary, seeds, budget=1)
    folds = [
        ax for ax in round1.axioms
        if ax.kind == "fold" and ax.args == (a, b) and ax.wits == (c,)
    ]
    assert len(folds) == 1


def test_rounds_monotone_and_fresh_constants_join():
    p = make_problem("unfold-step")
    gammas, psi = _inputs(p)
    seeds = foldunfold.seed_terms(p.vocabulary, gammas, psi)
    rounds = list(
        foldunfold.enumerate_axioms(p.sid, p.vocabulary, seeds, budget=2,
                                    max_axioms=10_000)
    )
    assert [r.index for r in rounds] == [1, 2]
    assert set(rounds[0].terms) < set(rounds[1].terms)
    assert set(rounds[0].fresh) <= set(t for t in rounds[1].terms)
    # cumulative stream: U_1 is contained in U_2
    keys1 = {(ax.kind, ax.pred, ax.args, ax.wits) for ax in rounds[0].axioms}
    keys2 = {(ax.kind, ax.pred, ax.args, ax.wits) for ax in rounds[1].axioms}
    assert keys1 < keys2


# -- proving ------------------------------------------------------------------------


def test_prove_unfold_step_single_axiom():
    p = make_problem("unfold-step")
    gammas, psi = _inputs(p)
    res = foldunfold.prove(gammas, psi, p.sid, p.vocabulary, budget=2)
    assert isinstance(res, foldunfold.ProofObject)
    assert len(res.axioms) <= 2
    assert any(ax.kind == "unfold" for ax in res.axioms)


def test_prove_fold_step_single_axiom():
    p = make_problem("fold-step")
    gammas, psi = _inputs(p)
    res = foldunfold.prove(gammas, psi, p.sid, p.vocabulary, budget=2)
    assert isinstance(res, foldunfold.ProofObject)
    assert len(res.axioms) <= 2
    assert any(ax.kind == "fold" for ax in res.axioms)


def test_proof_replays():
    # replaying the base check with exactly the kept axioms reproduces unsat
    p = make_problem("fold-step")
    gammas, psi = _inputs(p)
    res = foldunfold.prove(gammas, psi, p.sid, p.vocabulary, budget=2)
    assert isinstance(res, foldunfold.ProofObject)
    assert smt.check(res.obligation, timeout=30).is_unsat


def test_no_proof_for_invalid_entailment():
    p = make_problem("lseg-compose")
    gammas, psi = _inputs(p)
    res = foldunfold.prove(gammas, psi, p.sid, p.vocabulary, budget=1)
    assert isinstance(res, foldunfold.Exhausted)
    assert res.rounds == 1
    assert res.reason in ("budget", "inconclusive")


def test_serialization_shape():
    p = make_problem("unfold-step")
    gammas, psi = _inputs(p)
    res = foldunfold.prove(gammas, psi, p.sid, p.vocabulary, budget=2)
    doc = foldunfold.proof_to_dict(res)
    assert doc["axioms"]
    for ax in doc["axioms"]:
        assert ax["kind"] in ("fold", "unfold")
        assert "=>" in ax["formula"]
