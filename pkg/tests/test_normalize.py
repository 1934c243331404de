"""Entailment normalization: skolemization and disjunction splitting."""

import pytest

from slcheck.finite import ValidUpTo, decide_qf_entailment
from slcheck.normalize import (
    SplitBlowup,
    normalize_entailment,
    skolemize,
    split_entailment,
)
from slcheck.slast import (
    Const,
    Emp,
    Eq,
    Exists,
    Forall,
    LOC,
    Neq,
    Or,
    PointsTo,
    PredApp,
    SepConj,
    Var,
    sep,
    subst,
)

x = Var("x", LOC)
y = Var("y", LOC)
u = Var("u", LOC)
a = Const("a", LOC)
b = Const("b", LOC)
c = Const("c", LOC)


def test_skolemize_single_existential():
    out, consts, _ = skolemize([Exists(y, PointsTo(x, (y,)))])
    assert len(consts) == 1
    sk = consts[0]
    assert sk.name.startswith("_sk") and sk.sort == LOC
    assert out == [PointsTo(x, (sk,))]


def test_skolemize_qf_unchanged():
    phi = SepConj((Eq(a, b), Emp()))
    out, consts, counter = skolemize([phi], counter=7)
    assert out == [phi] and consts == () and counter == 7


def test_skolemize_preserves_inner_shape():
    phi = Exists(y, Or((PredApp("p", (y,)), Forall(u, Eq(y, u)))))
    out, consts, _ = skolemize([phi])
    (sk,) = consts
    assert out == [Or((PredApp("p", (sk,)), Forall(u, Eq(sk, u))))]


def test_skolem_constants_globally_fresh():
    _, c1, counter = skolemize([Exists(y, Eq(y, y))])
    _, c2, _ = skolemize([Exists(y, Eq(y, y))], counter)
    assert set(c1) & set(c2) == set()


def test_split_distributes_disjunction():
    gammas = [Or((Eq(a, b), Neq(a, b))), PointsTo(a, (c,))]
    psi = Emp()
    outs = split_entailment(gammas, psi)
    assert len(outs) == 2
    antecedents = {e.antecedent for e in outs}
    assert sep([Eq(a, b), PointsTo(a, (c,))]) in antecedents
    assert sep([Neq(a, b), PointsTo(a, (c,))]) in antecedents


def test_split_conjunctive_is_singleton():
    gammas = [Eq(a, b), PointsTo(a, (c,))]
    (e,) = split_entailment(gammas, Emp())
    assert e.antecedent == sep(gammas)
    assert e.disjuncts == (Emp(),)
    assert e.u_vars == ()


def test_split_keeps_consequent_existentials():
    psi = Exists(u, SepConj((PointsTo(a, (u,)), PredApp("lseg", (u, b)))))
    (e,) = split_entailment([Neq(a, b)], psi)
    assert e.u_vars == (u,)
    assert len(e.disjuncts) == 1


def test_split_blowup_guard():
    gammas = [Or((Eq(a, b), Neq(a, b)))] * 4
    with pytest.raises(SplitBlowup):
        split_entailment(gammas, Emp(), limit=8)


def test_normalize_preserves_oracle_verdict():
    # checking each split against the oracle agrees with checking the
    # original antecedent (theory-free QF instances, bound 3)
    cases = [
        ([Or((Eq(a, b), Neq(a, b))), PointsTo(a, (c,))], PointsTo(a, (c,))),
        ([Or((PointsTo(a, (b,)), PointsTo(a, (c,))))],
         Or((PointsTo(a, (b,)), PointsTo(a, (c,))))),
        ([Or((Emp(), Eq(a, b)))], PointsTo(a, (b,))),
    ]
    for gammas, psi in cases:
        whole = isinstance(
            decide_qf_entailment([sep(gammas) if len(gammas) > 1 else gammas[0]],
                                 psi, bound=3),
            ValidUpTo,
        )
        splits, _ = normalize_entailment(gammas, psi)
        split_verdict = all(
            isinstance(decide_qf_entailment([e.antecedent], psi, bound=3),
                       ValidUpTo)
            for e in splits
        )
        assert whole == split_verdict
