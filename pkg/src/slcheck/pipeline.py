"""Orchestration: parse, gate, normalize, encode, race prover vs refuter.

The checking workflow runs two branches concurrently until one concludes or
both give up: the proving branch discharges the encoded obligation with the
solver (unsat answers mean the entailment holds under the weak semantics),
the refuting branch searches the symbolic templates for a certified
counter-model.  A certified refutation and an unsat answer are mutually
exclusive, so observing both is a hard error rather than a tie to break.
"""

from __future__ import annotations

import csv
import io
import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from . import report, smt, symbolic
from .encode import (
    build_fo_vocab,
    encode_entailment,
    inline_points_to_existentials,
    inline_sid,
)
from .fol import FOStructure, FOVocabulary, Obligation
from .fragments import FragmentReport, check_edh, check_sid
from .frontend import Problem, print_formula
from .normalize import NormalizedEntailment, SplitBlowup, normalize_entailment
from .report import Certificate
from .slast import SLFormula, Vocabulary
from .symbolic import SymbolicStructure, Template


class FragmentError(Exception):
    """The input falls outside the supported fragment; carries diagnostics."""

    def __init__(self, reports: list[FragmentReport]):
        msgs = [f"{r.category}: {r.witness}" for r in reports if not r]
        super().__init__("; ".join(msgs))
        self.reports = reports


class SoundnessBug(Exception):
    """Valid and certified-Refuted observed for the same problem."""


@dataclass
class RunConfig:
    timeout: float = 30.0  # global budget for a check
    solver_timeout: Optional[float] = None  # per solver call; default: global
    solver_cmd: Optional[list[str]] = None
    templates: Optional[list[str]] = None  # specs like "3:100" (k:shape bits)
    budget: int = 3  # fold/unfold rounds
    emit_smt: Optional[str] = None  # dump queries of the proving branch here
    depth: int = 5  # template search instantiation depth

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.solver_timeout is not None and self.solver_timeout <= 0:
            raise ValueError("solver timeout must be positive")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")

    @property
    def per_call(self) -> float:
        return self.solver_timeout or self.timeout


@dataclass(frozen=True)
class Valid:
    splits: int
    evidence: tuple[str, ...]  # per-split summaries


@dataclass(frozen=True)
class Refuted:
    certificate: Certificate
    split: int


@dataclass(frozen=True)
class Unknown:
    diagnostics: dict


Outcome = Union[Valid, Refuted, Unknown]


@dataclass(frozen=True)
class Prepared:
    problem: Problem
    entailments: tuple[NormalizedEntailment, ...]
    obligations: tuple[Obligation, ...]
    fo_vocab: FOVocabulary
    disjunct_texts: tuple[tuple[str, ...], ...]


def _extend_vocab(v: Vocabulary, consts) -> Vocabulary:
    merged = dict(v.constants)
    merged.update({c.name: c.sort for c in consts})
    return Vocabulary(v.record_shape, merged, dict(v.preds))


def prepare(prob: Problem, split_limit: int = 4096) -> Prepared:
    """Gate the fragment checks, normalize, and encode every split."""
    reports = [check_sid(prob.sid), check_edh(prob.consequent)]
    reports += [check_edh(g) for g in prob.antecedents]
    if not all(reports):
        raise FragmentError(reports)
    gammas = [inline_points_to_existentials(g) for g in prob.antecedents]
    psi = inline_points_to_existentials(prob.consequent)
    sid = inline_sid(prob.sid)
    norms, _ = normalize_entailment(gammas, psi, limit=split_limit)
    obligations = []
    texts = []
    vocab = prob.vocabulary
    for ne in norms:
        v = _extend_vocab(vocab, ne.skolem_consts)
        obligations.append(
            encode_entailment(ne.antecedent, ne.u_vars, ne.disjuncts, sid, v)
        )
        texts.append(
            tuple(print_formula(d, prob.record_name) for d in ne.disjuncts)
        )
    return Prepared(
        problem=prob,
        entailments=tuple(norms),
        obligations=tuple(obligations),
        fo_vocab=build_fo_vocab(_extend_vocab(vocab, norms[0].skolem_consts))
        if norms
        else build_fo_vocab(vocab),
        disjunct_texts=tuple(texts),
    )


# ---------------------------------------------------------------------------
# Templates


def default_template_specs(fov: FOVocabulary) -> list[str]:
    # one ray with room for two finite anchors first; it subsumes the
    # smaller shapes in practice and fails fast when no counter-model fits
    return ["3:100", "2:10", "3:110", "4:1000"]


def parse_template_spec(spec: str, fov: FOVocabulary) -> Template:
    """`k:bits` with one 0/1 per non-null node (1 = infinite ray)."""
    try:
        k_text, bits = spec.split(":")
        k = int(k_text)
        shapes = tuple(int(b) for b in bits)
        if k < 1 or len(shapes) != k or any(b not in (0, 1) for b in shapes):
            raise ValueError
    except ValueError:
        raise ValueError(
            f"bad template spec {spec!r}: expected k:bits, e.g. 3:100"
        ) from None
    return Template(f"k{k}-{bits}", k, fov, shapes=shapes)


def build_templates(cfg: RunConfig, fov: FOVocabulary) -> list[Template]:
    specs = cfg.templates or default_template_specs(fov)
    return [parse_template_spec(s, fov) for s in specs]


# ---------------------------------------------------------------------------
# Branches


def prove_branch(
    prep: Prepared, cfg: RunConfig, cancel: Optional[threading.Event] = None
):
    """Solver pass over every split: ('valid', evidence) when all obligations
    are unsat, ('candidate', split, finite model) on a parseable sat answer,
    ('unknown', diagnostics) otherwise."""
    evidence = []
    deadline = time.monotonic() + cfg.timeout
    for idx, ob in enumerate(prep.obligations):
        if cancel is not None and cancel.is_set():
            return ("unknown", {"prove": "canceled"})
        budget = min(cfg.per_call, deadline - time.monotonic())
        if budget <= 0:
            return ("unknown", {"prove": "timeout"})
        v = smt.check(
            ob,
            timeout=budget,
            solver_cmd=cfg.solver_cmd,
            get_model=True,
            cancel=cancel,
            scratch=cfg.emit_smt,
        )
        if v.is_unsat:
            evidence.append(f"split {idx}: unsat")
            continue
        if v.status == "sat" and v.model is not None:
            return ("candidate", idx, v.model)
        return ("unknown", {"prove": f"split {idx}: {v.status} ({v.reason})"})
    return ("valid", tuple(evidence))


def refute_branch(
    prep: Prepared, cfg: RunConfig, cancel: Optional[threading.Event] = None
):
    """Template search per split; one certified counter-model refutes the
    whole entailment. Returns ('refuted', split, structure) or
    ('unknown', diagnostics)."""
    templates = build_templates(cfg, prep.fo_vocab)
    deadline = time.monotonic() + cfg.timeout
    n = len(prep.obligations)
    for idx, ob in enumerate(prep.obligations):
        if cancel is not None and cancel.is_set():
            return ("unknown", {"refute": "canceled"})
        budget = (deadline - time.monotonic()) / (n - idx)
        if budget <= 0:
            return ("unknown", {"refute": "timeout"})
        S = symbolic.find_model(
            ob,
            templates,
            timeout=budget,
            solver_cmd=cfg.solver_cmd,
            cancel=cancel,
            depth=cfg.depth,
        )
        if S is not None:
            return ("refuted", idx, S)
    return ("unknown", {"refute": "no template admits a certified model"})


def _certify(prep: Prepared, idx: int, S, cfg: RunConfig) -> Certificate:
    return report.certify(
        S,
        prep.obligations[idx],
        solver_cmd=cfg.solver_cmd,
        timeout=cfg.per_call,
        disjuncts=prep.disjunct_texts[idx],
    )


# ---------------------------------------------------------------------------
# Racing


def run_check(prob: Problem, cfg: RunConfig) -> Outcome:
    """Race the proving and refuting branches; first certified result wins.

    Valid requires every split unsat; Refuted requires one certified
    counter-model.  If both branches conclude, that is a soundness bug and
    the run aborts hard instead of picking a winner.
    """
    prep = prepare(prob)
    q: queue.Queue = queue.Queue()
    cancels = {"prove": threading.Event(), "refute": threading.Event()}

    def runner(name, fn):
        try:
            q.put((name, fn(prep, cfg, cancels[name])))
        except Exception as e:  # propagated after the race settles
            q.put((name, ("error", e)))

    threads = [
        threading.Thread(target=runner, args=("prove", prove_branch), daemon=True),
        threading.Thread(target=runner, args=("refute", refute_branch), daemon=True),
    ]
    for t in threads:
        t.start()
    results: dict = {}
    deadline = time.monotonic() + cfg.timeout + 30.0  # grace for cleanup
    while len(results) < 2 and time.monotonic() < deadline:
        try:
            name, res = q.get(timeout=0.1)
        except queue.Empty:
            continue
        results[name] = res
        if res[0] in ("valid", "refuted", "candidate"):
            other = "refute" if name == "prove" else "prove"
            cancels[other].set()
    for c in cancels.values():
        c.set()
    for t in threads:
        t.join(timeout=10.0)
    while True:  # drain late arrivals
        try:
            name, res = q.get_nowait()
            results.setdefault(name, res)
        except queue.Empty:
            break
    return _resolve(prep, cfg, results)


def _resolve(prep: Prepared, cfg: RunConfig, results: dict) -> Outcome:
    for res in results.values():
        if res[0] == "error":
            raise res[1]
    pv = results.get("prove")
    rv = results.get("refute")

    refutation: Optional[tuple[int, object]] = None
    if rv is not None and rv[0] == "refuted":
        refutation = (rv[1], rv[2])
    if pv is not None and pv[0] == "candidate":
        # a finite sat model must certify, otherwise we misread the solver
        idx, M = pv[1], pv[2]
        try:
            cert = _certify(prep, idx, M, cfg)
        except report.CertificationFailure as e:
            raise SoundnessBug(
                f"solver model failed certification: {e}"
            ) from e
        if rv is not None and rv[0] == "valid":
            raise SoundnessBug("prover and refuter disagree")
        return Refuted(cert, idx)

    if pv is not None and pv[0] == "valid":
        if refutation is not None:
            # the refuter's structure is pre-certified by construction
            raise SoundnessBug("prover and refuter disagree")
        return Valid(len(prep.obligations), pv[1])
    if refutation is not None:
        idx, S = refutation
        cert = _certify(prep, idx, S, cfg)  # re-check; raises on failure
        return Refuted(cert, idx)
    diags = {}
    for res in (pv, rv):
        if res is not None and res[0] == "unknown":
            diags.update(res[1])
    if pv is None:
        diags.setdefault("prove", "no answer before the deadline")
    if rv is None:
        diags.setdefault("refute", "no answer before the deadline")
    return Unknown(diags)


def run_prove(prob: Problem, cfg: RunConfig) -> Outcome:
    """Proving branch only (still certifies a sat model if one appears)."""
    prep = prepare(prob)
    res = prove_branch(prep, cfg)
    return _resolve(prep, cfg, {"prove": res})


def run_refute(prob: Problem, cfg: RunConfig) -> Outcome:
    prep = prepare(prob)
    res = refute_branch(prep, cfg)
    return _resolve(prep, cfg, {"refute": res})


# ---------------------------------------------------------------------------
# Benchmark harness


@dataclass
class BenchRow:
    group: str
    examples: int = 0
    valid: int = 0
    countermodel: int = 0
    timeout: int = 0


@dataclass
class BenchResult:
    rows: list[BenchRow]
    mismatches: list[str]  # "file: expected X, got Y"
    errors: list[str]  # unreadable or rejected entries

    @property
    def clean(self) -> bool:
        return not self.mismatches

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["group", "examples", "valid", "countermodel", "timeout"])
        for r in self.rows:
            w.writerow([r.group, r.examples, r.valid, r.countermodel, r.timeout])
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'group':<16}{'# Examples':>12}{'# Valid':>10}{'# Counter-model':>18}{'# Timeout':>12}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.group:<16}{r.examples:>12}{r.valid:>10}"
                f"{r.countermodel:>18}{r.timeout:>12}"
            )
        for m in self.mismatches:
            lines.append(f"MISMATCH {m}")
        for e in self.errors:
            lines.append(f"ERROR {e}")
        return "\n".join(lines) + "\n"


def load_manifest(path: Path) -> dict:
    """{filename: {"expected": "valid"|"refuted", "group": str}}"""
    return json.loads(path.read_text())


def run_bench(directory: str, cfg: RunConfig) -> BenchResult:
    from .frontend import SourceError, parse_problem

    d = Path(directory)
    manifest = {}
    mpath = d / "manifest.json"
    if mpath.exists():
        manifest = load_manifest(mpath)
    rows: dict[str, BenchRow] = {}
    mismatches: list[str] = []
    errors: list[str] = []
    for f in sorted(d.glob("*.sl")):
        entry = manifest.get(f.name, {})
        group = entry.get("group", "default")
        row = rows.setdefault(group, BenchRow(group))
        row.examples += 1
        try:
            prob = parse_problem(f.read_text(), f.name)
            outcome = run_check(prob, cfg)
        except (SourceError, FragmentError, SplitBlowup, OSError) as e:
            errors.append(f"{f.name}: {e}")
            row.timeout += 1
            continue
        if isinstance(outcome, Valid):
            row.valid += 1
            got = "valid"
        elif isinstance(outcome, Refuted):
            row.countermodel += 1
            got = "refuted"
        else:
            row.timeout += 1
            got = "unknown"
        expected = entry.get("expected")
        if expected and got != "unknown" and got != expected:
            mismatches.append(f"{f.name}: expected {expected}, got {got}")
    return BenchResult(
        rows=[rows[g] for g in sorted(rows)],
        mismatches=mismatches,
        errors=errors,
    )
