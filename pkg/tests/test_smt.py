"""Solver wire format and process driver."""

from pathlib import Path

import pytest

from slcheck import pipeline, smt
from slcheck.encode import build_fo_vocab
from slcheck.fol import Obligation
from slcheck.slast import LOC, Vocabulary
from tests.conftest import make_problem

DATA = Path(__file__).resolve().parent / "data"


def compose_obligation():
    prep = pipeline.prepare(make_problem("lseg-compose"))
    assert len(prep.obligations) == 1
    return prep.obligations[0]


def empty_obligation():
    vocab = Vocabulary(record_shape=(LOC,), constants={"a": LOC})
    return Obligation(build_fo_vocab(vocab), (), ())


def test_emit_declares_sort_and_asserts():
    o = compose_obligation()
    text = smt.emit_smtlib(o)
    assert "(declare-sort Loc 0)" in text
    assert text.count("(assert ") == len(o.sentences)
    assert "(check-sat)" in text
    for tag in o.provenance:
        assert f"; {tag}" in text


def test_emit_deterministic():
    o1 = compose_obligation()
    o2 = compose_obligation()
    assert smt.emit_smtlib(o1) == smt.emit_smtlib(o2)


def test_emit_matches_golden():
    # byte-identical emission across runs, frozen as a golden file
    text = smt.emit_smtlib(compose_obligation())
    golden = (DATA / "compose_obligation.smt2").read_text()
    assert text == golden


def test_timeout_zero_is_unknown():
    v = smt.check(empty_obligation(), timeout=0)
    assert v.status == "unknown" and v.reason == "timeout"


def test_parse_response_verdicts():
    assert smt.parse_response("unsat\n", False).is_unsat
    assert smt.parse_response("sat\n", False).status == "sat"
    u = smt.parse_response("unknown\ntimeout\n", False)
    assert u.status == "unknown" and u.reason == "timeout"


def test_parse_response_error_before_verdict():
    with pytest.raises(smt.SolverOutputError):
        smt.parse_response('(error "something broke")\nunknown\n', False)


def test_parse_response_garbage():
    with pytest.raises(smt.SolverOutputError):
        smt.parse_response("segmentation fault\n", False)
    with pytest.raises(smt.SolverOutputError):
        smt.parse_response("", False)


def test_empty_obligation_is_sat():
    v = smt.check(empty_obligation(), timeout=10)
    assert v.status == "sat"


def test_valid_entailment_unsat_and_monotone():
    # unfold-step is valid: its obligation is unsatisfiable, and the verdict
    # persists at a larger timeout
    prep = pipeline.prepare(make_problem("unfold-step"))
    o = prep.obligations[0]
    v_small = smt.check(o, timeout=10)
    assert v_small.is_unsat
    v_large = smt.check(o, timeout=30)
    assert v_large.is_unsat


def test_missing_solver_reported():
    with pytest.raises(smt.SolverProcessError):
        smt.check(empty_obligation(), timeout=5,
                  solver_cmd=["/nonexistent/solver-binary"])
