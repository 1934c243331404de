"""Core AST: substitution, smart constructors, AC flattening."""

from slcheck.slast import (
    And,
    Const,
    Emp,
    Eq,
    Exists,
    LOC,
    Neq,
    Or,
    PointsTo,
    PredApp,
    SepConj,
    Var,
    alpha_equal,
    conj,
    disj,
    flatten_case,
    free_vars,
    sep,
    subformulas,
    subst,
)

x = Var("x", LOC)
y = Var("y", LOC)
u = Var("u", LOC)
a = Const("a", LOC)
b = Const("b", LOC)


def test_subst_replaces_free_occurrences():
    phi = SepConj((PointsTo(x, (y,)), Eq(x, y)))
    got = subst(phi, {x: a})
    assert got == SepConj((PointsTo(a, (y,)), Eq(a, y)))


def test_subst_respects_binders():
    phi = Exists(x, PointsTo(x, (y,)))
    assert subst(phi, {x: a}) == phi


def test_subst_free_var_law_closed_term():
    # FV(phi[x := t]) == (FV(phi) \ {x}) | FV(t) for closed t
    cases = [
        Eq(x, y),
        SepConj((PointsTo(x, (y,)), PredApp("p", (x, u)))),
        Exists(y, And((Eq(x, y), Neq(y, b)))),
        Or((Emp(), Exists(x, Eq(x, x)))),
    ]
    for phi in cases:
        got = free_vars(subst(phi, {x: a}))
        assert got == free_vars(phi) - {x}


def test_subst_avoids_capture():
    # substituting a term mentioning the bound variable must rename it
    phi = Exists(y, Eq(x, y))
    got = subst(phi, {x: y})
    assert isinstance(got, Exists)
    assert got.var != y
    assert got.body == Eq(y, got.var)
    assert free_vars(got) == frozenset({y})


def test_alpha_equal_on_renamed_binders():
    assert alpha_equal(Exists(x, Eq(x, a)), Exists(u, Eq(u, a)))
    assert not alpha_equal(Exists(x, Eq(x, a)), Exists(u, Eq(u, b)))


def test_smart_constructors_flatten():
    phi = sep([sep([Emp(), Eq(x, y)]), PointsTo(x, (y,))])
    assert isinstance(phi, SepConj) and len(phi.args) == 3
    psi = conj([And((Eq(x, y), Neq(x, y))), Emp()])
    assert isinstance(psi, And) and len(psi.args) == 3
    chi = disj([Or((Emp(), Eq(x, y))), Neq(x, y)])
    assert isinstance(chi, Or) and len(chi.args) == 3


def test_singleton_constructors_unwrap():
    assert sep([Emp()]) == Emp()
    assert conj([Eq(x, y)]) == Eq(x, y)


def test_flatten_case_mixed_star_and_conj():
    phi = And((SepConj((Emp(), Eq(x, y))), Neq(x, y)))
    assert flatten_case(phi) == [Emp(), Eq(x, y), Neq(x, y)]


def test_subformulas_enumerates_all():
    phi = SepConj((Eq(x, y), Exists(u, PointsTo(u, (x,)))))
    subs = list(subformulas(phi))
    assert phi in subs
    assert Eq(x, y) in subs
    assert PointsTo(u, (x,)) in subs
