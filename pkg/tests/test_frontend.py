"""Parser and printer: diagnostics, structure, and the round-trip law."""

import pytest
from hypothesis import given, settings, strategies as st

from slcheck.frontend import (
    SourceError,
    parse_problem,
    print_formula,
    print_problem,
)
from slcheck.slast import (
    Emp,
    INT,
    LOC,
    PointsTo,
    PredApp,
    SepConj,
    alpha_equal,
    sep,
)
from tests.conftest import ENTAILMENTS, LSEG_HDR


def test_parse_list_problem_shape():
    p = parse_problem(LSEG_HDR + ENTAILMENTS["lseg-compose"], "t")
    assert p.vocabulary.record_shape == (LOC,)
    assert set(p.sid.preds) == {"lseg"}
    assert len(p.antecedents) == 3
    assert isinstance(p.consequent, SepConj)


def test_parse_declares_constants_and_nil():
    p = parse_problem(LSEG_HDR + ENTAILMENTS["lseg-compose"], "t")
    assert p.vocabulary.constants["nil"] == LOC
    for c in ("a", "b", "c"):
        assert p.vocabulary.constants[c] == LOC


def test_parse_int_fields():
    src = (
        "data node { node next; int key; };\n"
        "checkentail a -> node{nil, 3} |- a != nil;"
    )
    p = parse_problem(src, "t")
    assert p.vocabulary.record_shape == (LOC, INT)


def test_empty_file_is_syntax_error():
    with pytest.raises(SourceError) as ei:
        parse_problem("", "t")
    assert ei.value.kind == "syntax"


def test_undeclared_predicate_is_sort_error():
    src = "data node { node next; };\ncheckentail q(a) |- emp;"
    with pytest.raises(SourceError) as ei:
        parse_problem(src, "t")
    assert ei.value.kind == "sort"
    assert "q" in ei.value.msg


def test_error_positions_lie_within_input():
    bad_inputs = [
        "",
        "data node { node next; }",
        "data node { node next; };\ncheckentail a -> |- emp;",
        "pred p() := emp;",
        "data node { node next; };\ncheckentail a -> node{b} * a = 3 |- emp;",
    ]
    for src in bad_inputs:
        with pytest.raises(SourceError) as ei:
            parse_problem(src, "t")
        lines = src.splitlines() or [""]
        assert 1 <= ei.value.line <= len(lines) + 1
        assert ei.value.col >= 1
        assert ":" in ei.value.render("f.sl")


def test_reserved_underscore_identifiers_rejected():
    src = "data node { node next; };\ncheckentail _sk0 = nil |- emp;"
    with pytest.raises(SourceError):
        parse_problem(src, "t")


def test_print_atoms():
    p = parse_problem(
        "data node { node next; };\ncheckentail emp |- a -> node{b};", "t"
    )
    assert print_formula(p.antecedents[0]) == "emp"
    assert print_formula(p.consequent, p.record_name) == "a->node{b}"


def test_round_trip_fixture():
    p = parse_problem(LSEG_HDR + ENTAILMENTS["unfold-step"], "t")
    q = parse_problem(print_problem(p), "t")
    assert q.vocabulary.record_shape == p.vocabulary.record_shape
    assert set(q.sid.preds) == set(p.sid.preds)
    assert alpha_equal(sep(list(q.antecedents)), sep(list(p.antecedents)))
    assert alpha_equal(q.consequent, p.consequent)


# -- generated round trips ----------------------------------------------------

_loc_term = st.sampled_from(["a", "b", "c", "nil"])


@st.composite
def _formula_text(draw, depth=2):
    if depth == 0:
        kind = draw(st.sampled_from(["emp", "eq", "neq", "pts", "pred"]))
        t1, t2 = draw(_loc_term), draw(_loc_term)
        if kind == "emp":
            return "emp"
        if kind == "eq":
            return f"{t1} = {t2}"
        if kind == "neq":
            return f"{t1} != {t2}"
        if kind == "pts":
            return f"{t1} -> node{{{t2}}}" if t1 != "nil" else "emp"
        return f"lseg({t1}, {t2})"
    op = draw(st.sampled_from(["*", "&", r"\/", "leaf"]))
    if op == "leaf":
        return draw(_formula_text(depth=0))
    lhs = draw(_formula_text(depth=depth - 1))
    rhs = draw(_formula_text(depth=depth - 1))
    return f"({lhs} {op} {rhs})"


@given(ante=_formula_text(), cons=_formula_text())
@settings(max_examples=60, deadline=None)
def test_round_trip_generated(ante, cons):
    # parse . print is the identity up to alpha-renaming: printing a parsed
    # problem and reparsing yields an alpha-equal AST
    src = LSEG_HDR + f"checkentail {ante} |- {cons};"
    p = parse_problem(src, "gen")
    q = parse_problem(print_problem(p), "gen2")
    assert alpha_equal(sep(list(q.antecedents)), sep(list(p.antecedents)))
    assert alpha_equal(q.consequent, p.consequent)
