"""Fragment and shape analyses: quantifier-shape check, definition
well-formedness, and the heap-reducing classifier."""

from slcheck.fragments import check_edh, check_heap_reducing, check_sid
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
    PredDef,
    SepConj,
    SID,
    Var,
    nil_const,
    sep,
)

x = Var("x", LOC)
y = Var("y", LOC)
u = Var("u", LOC)


def lseg_sid() -> SID:
    rec = SepConj((Neq(x, y), PointsTo(x, (u,)), PredApp("lseg", (u, y))))
    return SID({"lseg": PredDef("lseg", (x, y), (u,), (Eq(x, y), rec))})


# -- quantifier-shape membership --------------------------------------------


def test_edh_rejects_forall_over_exists():
    phi = Forall(x, Exists(y, Eq(x, y)))
    rep = check_edh(phi)
    assert not rep
    assert rep.witness


def test_edh_accepts_disjunction_of_heaplet_atoms():
    phi = Or((Emp(), PointsTo(x, (nil_const(),))))
    assert check_edh(phi)


def test_edh_accepts_qf_conjunctive():
    phi = SepConj((Eq(x, y), PointsTo(x, (y,))))
    assert check_edh(phi)


def test_edh_accepts_full_prefix_shape():
    # exists, then a disjunction of universally quantified conjunctive blocks
    phi = Exists(y, Or((Forall(u, Eq(u, y)), Eq(x, y))))
    assert check_edh(phi)


def test_edh_alpha_invariance():
    z = Var("z", LOC)
    phi = Exists(y, Or((Forall(u, Eq(u, y)), Eq(x, y))))
    renamed = Exists(z, Or((Forall(x, Eq(x, z)), Eq(x, z))))
    assert bool(check_edh(phi)) == bool(check_edh(renamed))


# -- definition well-formedness ----------------------------------------------


def test_sid_accepts_lseg():
    assert check_sid(lseg_sid())


def test_sid_rejects_disjunctive_case():
    bad = SID({"p": PredDef("p", (x,), (), (Or((Eq(x, x), Emp())),))})
    rep = check_sid(bad)
    assert not rep
    assert rep.witness


def test_sid_rejects_undeclared_predicate():
    bad = SID({"p": PredDef("p", (x,), (), (PredApp("q", (x,)),))})
    assert not check_sid(bad)


def test_sid_rejects_unscoped_variable():
    bad = SID({"p": PredDef("p", (x,), (), (Eq(x, y),))})
    assert not check_sid(bad)


# -- heap-reducing classifier -------------------------------------------------


def test_heap_reducing_lseg():
    assert check_heap_reducing(lseg_sid())


def test_heap_reducing_rejects_uninterpreted_cycle():
    sid = SID({"p": PredDef("p", (x, y), (), (PredApp("p", (x, y)),))})
    assert not check_heap_reducing(sid)


def test_heap_reducing_base_only_sid():
    sid = SID({"p": PredDef("p", (x, y), (), (Eq(x, y),))})
    assert check_heap_reducing(sid)


def test_heap_reducing_invariant_under_conjunct_order():
    def mk(parts):
        return SID({"p": PredDef("p", (x, y), (u,), (sep(parts),))})

    parts = [Neq(x, y), PointsTo(x, (u,)), PredApp("p", (u, y))]
    fwd = mk(parts)
    rev = mk(list(reversed(parts)))
    assert bool(check_heap_reducing(fwd)) == bool(check_heap_reducing(rev)) is True
