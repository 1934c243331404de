"""Certification, classification, and rendering of counter-models.

A candidate counter-model, symbolic or finite, is only reported after every
sentence of the obligation has been model-checked against it.  Certified
structures are then matched against a small taxonomy of recurring heap
shapes; the label is advisory, the certificate is the authoritative output.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .fol import FOStructure, Obligation, eval_fo
from . import symbolic
from .symbolic import SymbolicStructure

ARCHETYPE_LABELS = {
    1: "list that never reaches null",
    2: "list that never reaches some location other than null",
    3: "two disjoint infinite lists",
    4: "tree with a path that never reaches null",
    5: "tree with a path that never reaches some location other than null",
    6: "tree with a path that never reaches a location that never reaches null",
}


class CertificationFailure(Exception):
    """Raised when a candidate fails a per-sentence model check."""

    def __init__(self, checks: dict):
        failed = [tag for tag, ok in checks.items() if not ok]
        super().__init__(f"model check failed for: {', '.join(failed)}")
        self.checks = checks


@dataclass(frozen=True)
class Certificate:
    structure: Union[SymbolicStructure, FOStructure]
    checks: dict  # provenance tag -> True (all true by construction)
    infinite_nodes: tuple[str, ...]  # empty for finite models
    evidence: str  # rogueness note
    archetype: Optional[int]
    disjuncts: tuple[str, ...] = ()  # consequent disjuncts, display only

    @property
    def archetype_label(self) -> str:
        if self.archetype is None:
            return "unknown"
        return f"archetype {self.archetype}: {ARCHETYPE_LABELS[self.archetype]}"


def _tagged(o: Obligation) -> list[tuple[str, object]]:
    tags: list[str] = []
    counts: dict[str, int] = {}
    for tag in o.provenance:
        k = counts.get(tag, 0)
        counts[tag] = k + 1
        tags.append(tag if k == 0 else f"{tag}#{k}")
    return list(zip(tags, o.sentences))


def certify(
    S: Union[SymbolicStructure, FOStructure],
    o: Obligation,
    solver_cmd=None,
    timeout: float = 30.0,
    cancel: Optional[threading.Event] = None,
    disjuncts: Sequence[str] = (),
) -> Certificate:
    """Model-check every obligation sentence; certify only if all hold.

    Symbolic structures are checked by compilation to arithmetic; finite
    structures by direct evaluation.  Raises CertificationFailure with the
    per-sentence verdicts otherwise.
    """
    checks: dict[str, bool] = {}
    if isinstance(S, SymbolicStructure):
        for tag, s in _tagged(o):
            checks[tag] = symbolic.model_check(
                S, s, solver_cmd=solver_cmd, timeout=timeout, cancel=cancel
            )
        inf = tuple(symbolic.infinite_nodes(S, solver_cmd=solver_cmd))
        evidence = (
            f"infinite location nodes: {', '.join(inf)}"
            if inf
            else "finite structure; fixpoint interpretation is not the least one"
        )
    else:
        for tag, s in _tagged(o):
            checks[tag] = eval_fo(S, {}, s)
        inf = ()
        evidence = "finite structure; fixpoint interpretation is not the least one"
    if not all(checks.values()):
        raise CertificationFailure(checks)
    archetype = (
        classify_archetype(S, inf) if isinstance(S, SymbolicStructure) else None
    )
    return Certificate(
        structure=S,
        checks=checks,
        infinite_nodes=inf,
        evidence=evidence,
        archetype=archetype,
        disjuncts=tuple(disjuncts),
    )


def classify_archetype(
    S: SymbolicStructure, infinite: Optional[Sequence[str]] = None
) -> Optional[int]:
    """Best-effort shape label for a certified structure.

    The signals are the number of location-valued field functions (one for
    list shapes, two for tree shapes), the number of infinite nodes, and the
    presence of a finite non-null node (the unreachable location of the
    segment-style shapes).  Returns None when no shape matches, in
    particular for all-finite structures.
    """
    if infinite is None:
        infinite = symbolic.infinite_nodes(S)
    loc_fields = 0
    for fn, table in S.func_interp.items():
        if any(tgt != symbolic.INT_NODE for tgt, _ in table.values()):
            loc_fields += 1
    if loc_fields not in (1, 2) or not infinite:
        return None
    extra_finite = [
        n for n in S.nodes if n != S.null_node and n not in infinite
    ]
    if len(infinite) >= 2:
        variant = 3
    elif extra_finite:
        variant = 2
    else:
        variant = 1
    return variant if loc_fields == 1 else variant + 3


def render(c: Certificate, fmt: str = "text") -> str:
    if fmt == "json":
        doc = {
            "checks": c.checks,
            "infinite_nodes": list(c.infinite_nodes),
            "evidence": c.evidence,
            "archetype": c.archetype,
            "archetype_label": c.archetype_label,
            "disjuncts": list(c.disjuncts),
        }
        if isinstance(c.structure, SymbolicStructure):
            doc["structure"] = json.loads(symbolic.to_json(c.structure))
        else:
            doc["structure"] = _finite_to_dict(c.structure)
        return json.dumps(doc, indent=2)
    if fmt == "dot":
        if isinstance(c.structure, SymbolicStructure):
            return symbolic.to_dot(c.structure, list(c.infinite_nodes))
        return _finite_to_dot(c.structure)
    if fmt == "text":
        lines = ["counter-model certificate"]
        lines.append(f"  shape: {c.archetype_label}")
        lines.append(f"  evidence: {c.evidence}")
        for tag, ok in c.checks.items():
            lines.append(f"  {tag}: {'holds' if ok else 'FAILS'}")
        if c.disjuncts:
            word = "disjunct" if len(c.disjuncts) == 1 else "disjuncts"
            lines.append(f"  violated consequent {word}:")
            for d in c.disjuncts:
                lines.append(f"    {d}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format: {fmt}")


def _finite_to_dict(M: FOStructure) -> dict:
    return {
        "locations": list(M.locs),
        "integers": list(M.ints),
        "constants": dict(M.consts),
        "functions": {
            fn: [{"args": list(k), "value": v} for k, v in table.items()]
            for fn, table in M.funcs.items()
        },
        "relations": {
            r: [list(t) for t in sorted(tups)] for r, tups in M.rels.items()
        },
    }


def _finite_to_dot(M: FOStructure) -> str:
    lines = ["digraph finite_structure {"]
    for loc in M.locs:
        consts = sorted(n for n, e in M.consts.items() if e == loc)
        label = loc if not consts else f"{loc}\\n({', '.join(consts)})"
        lines.append(f'  "{loc}" [label="{label}"];')
    for fn, table in M.funcs.items():
        for args, val in table.items():
            if args and args[0] in M.locs and val in M.locs:
                lines.append(f'  "{args[0]}" -> "{val}" [label="{fn}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
