"""Entailment normalization: skolemize the antecedents, distribute their
disjunctions, and split into entailments with a universal-conjunctive
left-hand side and an existentially quantified disjunction on the right.

Fresh-name generation is an explicit counter threaded through the calls;
skolem constants use the reserved `_sk` prefix (the frontend rejects user
identifiers starting with `_`)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .slast import (
    Const,
    Exists,
    Forall,
    Or,
    SepConj,
    SLFormula,
    Var,
    sep,
    subst,
)


DEFAULT_SPLIT_LIMIT = 4096


class SplitBlowup(Exception):
    pass


@dataclass(frozen=True)
class NormalizedEntailment:
    antecedent: SLFormula  # universal-conjunctive
    u_vars: tuple[Var, ...]  # consequent existentials
    disjuncts: tuple[SLFormula, ...]  # universal-conjunctive
    skolem_consts: tuple[Const, ...]


def skolemize(
    gammas: list[SLFormula], counter: int = 0
) -> tuple[list[SLFormula], tuple[Const, ...], int]:
    """Replace the outer existentials of each formula by fresh constants."""
    out: list[SLFormula] = []
    consts: list[Const] = []
    for phi in gammas:
        while isinstance(phi, Exists):
            c = Const(f"_sk{counter}", phi.var.sort)
            counter += 1
            consts.append(c)
            phi = subst(phi.body, {phi.var: c})
        out.append(phi)
    return out, tuple(consts), counter


def split_entailment(
    gammas: list[SLFormula],
    psi: SLFormula,
    skolem_consts: tuple[Const, ...] = (),
    limit: int = DEFAULT_SPLIT_LIMIT,
) -> list[NormalizedEntailment]:
    """Distribute the antecedents' top-level disjunctions and emit one
    entailment per combination; the consequent stays ∃u⃗.⋁ψ_i."""
    choice_lists = [
        phi.args if isinstance(phi, Or) else (phi,) for phi in gammas
    ]
    count = 1
    for c in choice_lists:
        count *= len(c)
    if count > limit:
        raise SplitBlowup(
            f"antecedent splits into {count} cases (limit {limit})"
        )
    u_vars: list[Var] = []
    rhs = psi
    while isinstance(rhs, Exists):
        u_vars.append(rhs.var)
        rhs = rhs.body
    disjuncts = rhs.args if isinstance(rhs, Or) else (rhs,)
    out = []
    for combo in itertools.product(*choice_lists):
        out.append(
            NormalizedEntailment(
                antecedent=sep(list(combo)),
                u_vars=tuple(u_vars),
                disjuncts=tuple(disjuncts),
                skolem_consts=skolem_consts,
            )
        )
    return out


def normalize_entailment(
    gammas: list[SLFormula],
    psi: SLFormula,
    counter: int = 0,
    limit: int = DEFAULT_SPLIT_LIMIT,
) -> tuple[list[NormalizedEntailment], int]:
    sk, consts, counter = skolemize(gammas, counter)
    return split_entailment(sk, psi, consts, limit), counter
