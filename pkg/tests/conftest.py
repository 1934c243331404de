"""Shared fixtures: canonical problem sources and parsed corpus entries."""

from pathlib import Path

import pytest

from slcheck.frontend import parse_problem

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"

LSEG_HDR = """
data node { node next; };
pred lseg(x, y) := x = y \\/ (x != y * exists u. x -> node{u} * lseg(u, y));
"""

LS_HDR = """
data node { node next; };
pred ls(x) := x = nil \\/ (x != nil * exists u. x -> node{u} * ls(u));
"""

TREE_HDR = """
data node { node left; node right; };
pred tree(x) := x = nil \\/ (x != nil * exists l. exists r. x -> node{l, r} * tree(l) * tree(r));
"""

ENTAILMENTS = {
    "unfold-step": "checkentail a != b * lseg(a, b)"
    " |- exists v. a -> node{v} * lseg(v, b);",
    "fold-step": "checkentail a != b * a -> node{c} * lseg(c, b)"
    " |- lseg(a, b);",
    "lseg-compose": "checkentail lseg(a, c) * c -> node{b} * b -> node{nil}"
    " |- lseg(a, b) * b -> node{nil};",
    "lseg-compose-neq": "checkentail a != b * lseg(a, c) * c -> node{b}"
    " * b -> node{nil} |- lseg(a, b) * b -> node{nil};",
}


def make_problem(key: str):
    return parse_problem(LSEG_HDR + ENTAILMENTS[key], key)


@pytest.fixture(scope="session")
def unfold_problem():
    return make_problem("unfold-step")


@pytest.fixture(scope="session")
def fold_problem():
    return make_problem("fold-step")


@pytest.fixture(scope="session")
def compose_problem():
    return make_problem("lseg-compose")


@pytest.fixture(scope="session")
def compose_neq_problem():
    return make_problem("lseg-compose-neq")
