"""SMT-LIB2 emission and the external solver process driver.

The solver is any executable that reads a full SMT-LIB2 script on standard
input and prints the responses on standard output; the bundled default is
the Z3 WASM build behind a small node wrapper (see solver/ at the package
root).  Finite models from `sat` answers are parsed back into explicit FO
structures so they can be certified independently.
"""

from __future__ import annotations

import os
import re
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .fol import (
    FOAnd,
    FOEq,
    FOExists,
    FOFalse,
    FOForall,
    FOFormula,
    FOIff,
    FOImplies,
    FOLt,
    FONot,
    FOOr,
    FORel,
    FOStructure,
    FOTrue,
    Obligation,
)
from .slast import Add, Const, FieldTerm, IntLit, INT, LOC, Sub, Term, Var
from .fol import field_fn_name

SORT_NAMES = {LOC: "Loc", INT: "Int"}


class SolverProcessError(Exception):
    """The solver process could not be spawned or died abnormally."""


class SolverOutputError(Exception):
    """The solver produced output we do not understand."""


class ModelHasIntParts(Exception):
    """Finite certification of the model would require enumerating Int."""


@dataclass
class SolverVerdict:
    status: str  # "unsat" | "sat" | "unknown"
    reason: Optional[str] = None  # "timeout" | "incomplete" | "canceled"
    model: Optional[FOStructure] = None
    raw: str = ""
    core: Optional[tuple] = None  # indices of the asserted sentences

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"


def default_solver_command() -> list[str]:
    env = os.environ.get("SLCHECK_SOLVER")
    if env:
        return _command_for(env)
    here = Path(__file__).resolve()
    for base in list(here.parents):
        cand = base / "solver" / "z3smt2.js"
        if cand.exists():
            return ["node", str(cand)]
    raise SolverProcessError(
        "no solver configured: set SLCHECK_SOLVER or install the bundled "
        "solver (npm install in the solver/ directory)"
    )


def _command_for(path: str) -> list[str]:
    if path.endswith(".js"):
        return ["node", path]
    return [path]


# ---------------------------------------------------------------------------
# Emission


def render_term(t: Term) -> str:
    if isinstance(t, (Const, Var)):
        return t.name
    if isinstance(t, IntLit):
        return str(t.value) if t.value >= 0 else f"(- {-t.value})"
    if isinstance(t, Add):
        return f"(+ {render_term(t.left)} {render_term(t.right)})"
    if isinstance(t, Sub):
        return f"(- {render_term(t.left)} {render_term(t.right)})"
    if isinstance(t, FieldTerm):
        return f"({field_fn_name(t.index)} {render_term(t.arg)})"
    raise TypeError(f"not a term: {t!r}")


def render_formula(phi: FOFormula) -> str:
    if isinstance(phi, FOTrue):
        return "true"
    if isinstance(phi, FOFalse):
        return "false"
    if isinstance(phi, FOEq):
        return f"(= {render_term(phi.left)} {render_term(phi.right)})"
    if isinstance(phi, FOLt):
        return f"(< {render_term(phi.left)} {render_term(phi.right)})"
    if isinstance(phi, FORel):
        if not phi.args:
            return phi.name
        return f"({phi.name} {' '.join(render_term(a) for a in phi.args)})"
    if isinstance(phi, FONot):
        return f"(not {render_formula(phi.arg)})"
    if isinstance(phi, FOAnd):
        return f"(and {' '.join(render_formula(a) for a in phi.args)})"
    if isinstance(phi, FOOr):
        return f"(or {' '.join(render_formula(a) for a in phi.args)})"
    if isinstance(phi, FOImplies):
        return f"(=> {render_formula(phi.left)} {render_formula(phi.right)})"
    if isinstance(phi, FOIff):
        return f"(= {render_formula(phi.left)} {render_formula(phi.right)})"
    if isinstance(phi, (FOForall, FOExists)):
        q = "forall" if isinstance(phi, FOForall) else "exists"
        binds = " ".join(f"({v.name} {SORT_NAMES[v.sort]})" for v in phi.vars)
        return f"({q} ({binds}) {render_formula(phi.body)})"
    raise TypeError(f"not an FO formula: {phi!r}")


def emit_smtlib(
    o: Obligation,
    timeout_ms: Optional[int] = None,
    get_model: bool = False,
    mbqi: bool = True,
    minimize: Optional[Term] = None,
    get_core: bool = False,
) -> str:
    """Deterministic SMT-LIB2 script for an obligation (stable symbol order)."""
    lines: list[str] = []
    if timeout_ms is not None:
        lines.append(f"(set-option :timeout {timeout_ms})")
    lines.append(f"(set-option :smt.mbqi {'true' if mbqi else 'false'})")
    if get_core:
        lines.append("(set-option :produce-unsat-cores true)")
    if get_model:
        lines.append("(set-option :model.completion true)")
    lines.append("(declare-sort Loc 0)")
    for name in sorted(o.vocab.constants):
        lines.append(f"(declare-const {name} {SORT_NAMES[o.vocab.constants[name]]})")
    for i, sort in enumerate(o.vocab.field_sorts, start=1):
        lines.append(
            f"(declare-fun {field_fn_name(i)} (Loc) {SORT_NAMES[sort]})"
        )
    for name in sorted(o.vocab.rels):
        sig = " ".join(SORT_NAMES[s] for s in o.vocab.rels[name])
        lines.append(f"(declare-fun {name} ({sig}) Bool)")
    for i, (s, tag) in enumerate(zip(o.sentences, o.provenance)):
        lines.append(f"; {tag}")
        if get_core:
            lines.append(f"(assert (! {render_formula(s)} :named ax{i}))")
        else:
            lines.append(f"(assert {render_formula(s)})")
    if minimize is not None:
        lines.append(f"(minimize {render_term(minimize)})")
    lines.append("(check-sat)")
    if get_model:
        lines.append("(get-model)")
    if get_core:
        lines.append("(get-unsat-core)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Process driver


def run_script(
    script: str,
    wall_timeout: float,
    solver_cmd: Optional[list[str]] = None,
    cancel: Optional[threading.Event] = None,
) -> tuple[str, Optional[str]]:
    """Run the solver on a script; returns (stdout, abort_reason)."""
    cmd = solver_cmd or default_solver_command()
    if shutil.which(cmd[0]) is None:
        raise SolverProcessError(f"solver executable {cmd[0]!r} not found")
    try:
        proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except OSError as e:
        raise SolverProcessError(f"cannot spawn solver: {e}") from e
    deadline = time.monotonic() + wall_timeout
    writer = threading.Thread(target=_feed, args=(proc, script), daemon=True)
    writer.start()
    abort: Optional[str] = None
    while True:
        try:
            proc.wait(timeout=0.05)
            break
        except subprocess.TimeoutExpired:
            if cancel is not None and cancel.is_set():
                abort = "canceled"
            elif time.monotonic() > deadline:
                abort = "timeout"
            if abort:
                proc.kill()
                proc.wait()
                break
    out = proc.stdout.read() if proc.stdout else ""
    err = proc.stderr.read() if proc.stderr else ""
    if abort:
        return out, abort
    if proc.returncode != 0:
        raise SolverProcessError(
            f"solver exited with {proc.returncode}: {err.strip()[:500]}"
        )
    return out, None


def _feed(proc, script: str):
    try:
        proc.stdin.write(script)
        proc.stdin.close()
    except (BrokenPipeError, OSError):
        pass


def check(
    o: Obligation,
    timeout: float = 30.0,
    solver_cmd: Optional[list[str]] = None,
    get_model: bool = False,
    cancel: Optional[threading.Event] = None,
    scratch: Optional[str] = None,
    mbqi: bool = True,
    startup_grace: float = 15.0,
    minimize: Optional[Term] = None,
    get_core: bool = False,
) -> SolverVerdict:
    """Check an obligation for satisfiability.

    `timeout` is the solver budget in seconds; the wall clock allows extra
    grace for process startup (the bundled WASM solver takes a moment to
    initialize).  Unsat means the encoded entailment is valid.
    """
    script = emit_smtlib(
        o,
        timeout_ms=max(1, int(timeout * 1000)),
        get_model=get_model,
        mbqi=mbqi,
        minimize=minimize,
        get_core=get_core,
    )
    if scratch:
        Path(scratch).mkdir(parents=True, exist_ok=True)
        idx = len(list(Path(scratch).glob("query*.smt2")))
        (Path(scratch) / f"query{idx:03d}.smt2").write_text(script)
    if timeout <= 0:
        return SolverVerdict("unknown", reason="timeout")
    out, abort = run_script(script, timeout + startup_grace, solver_cmd, cancel)
    if abort:
        return SolverVerdict("unknown", reason=abort, raw=out)
    return parse_response(out, get_model, get_core)


def parse_response(
    out: str, expect_model: bool, expect_core: bool = False
) -> SolverVerdict:
    status = None
    for line in out.splitlines():
        line = line.strip()
        if line in ("sat", "unsat", "unknown", "timeout"):
            status = "unknown" if line == "timeout" else line
            break
        if line.startswith("(error"):
            # errors after the verdict (e.g. get-model on unsat) are harmless,
            # but an error before any verdict poisons the answer
            raise SolverOutputError(f"solver rejected the query: {line!r}")
        if line.startswith(("WARNING", ";")) or not line:
            continue
        raise SolverOutputError(f"unexpected solver output line: {line!r}")
    if status is None:
        raise SolverOutputError(f"no verdict in solver output: {out[:500]!r}")
    if status == "unknown":
        reason = "timeout" if "timeout" in out or "canceled" in out else "incomplete"
        return SolverVerdict("unknown", reason=reason, raw=out)
    if status == "sat" and expect_model:
        try:
            model = parse_model(out)
        except ModelHasIntParts:
            return SolverVerdict("unknown", reason="incomplete", raw=out)
        return SolverVerdict("sat", model=model, raw=out)
    if status == "unsat" and expect_core:
        return SolverVerdict("unsat", raw=out, core=_parse_core(out))
    return SolverVerdict(status, raw=out)


def _parse_core(out: str) -> tuple:
    m = re.search(r"^\(((?:\s*ax\d+)*)\s*\)\s*$", out, re.MULTILINE)
    if m is None:
        raise SolverOutputError(f"no unsat core in solver output: {out[:300]!r}")
    return tuple(sorted(int(name[2:]) for name in m.group(1).split()))


# ---------------------------------------------------------------------------
# Model parsing: s-expressions -> explicit finite FO structure


def _sexp_tokens(text: str):
    for m in re.finditer(r";[^\n]*|[()]|[^\s();]+", text):
        tok = m.group()
        if not tok.startswith(";"):
            yield tok


def parse_sexps(text: str) -> list:
    stack: list[list] = [[]]
    for tok in _sexp_tokens(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            if not stack:
                raise SolverOutputError("unbalanced parentheses in model")
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SolverOutputError("unbalanced parentheses in model")
    return stack[0]


def extract_int_consts(out: str) -> dict:
    """Values of 0-ary Int definitions from a `get-model` response."""
    body = out.split("\n", 1)[1] if "\n" in out else ""
    vals: dict = {}
    for top in parse_sexps(body):
        items = top if isinstance(top, list) else []
        if items and items[0] == "model":
            items = items[1:]
        for d in items:
            if not (isinstance(d, list) and d and d[0] == "define-fun"):
                continue
            name, params, ret, bd = d[1], d[2], d[3], d[4]
            if params or ret != "Int":
                continue
            if isinstance(bd, str) and re.fullmatch(r"-?\d+", bd):
                vals[name] = int(bd)
            elif isinstance(bd, list) and len(bd) == 2 and bd[0] == "-":
                vals[name] = -int(bd[1])
    return vals


_LOC_VAL = re.compile(r"Loc!val!(\d+)")


def parse_model(out: str) -> FOStructure:
    """Parse a z3 `get-model` response into an explicit FO structure.

    Raises ModelHasIntParts when a declared relation or function ranges over
    Int in a way that finite evaluation cannot enumerate.
    """
    body = out.split("\n", 1)[1] if "\n" in out else ""
    sexps = parse_sexps(body)
    defs: dict[str, tuple[list, str, object]] = {}
    for top in sexps:
        items = top
        if items and items == ["model"]:
            continue
        if isinstance(items, list) and items and items[0] == "model":
            items = items[1:]
        for d in items if isinstance(items, list) else []:
            if isinstance(d, list) and d and d[0] == "define-fun":
                name = d[1]
                params = [(p[0], p[1]) for p in d[2]]
                ret = d[3]
                defs[name] = (params, ret, d[4])
    if not defs:
        raise SolverOutputError(f"no definitions in model: {out[:300]!r}")
    n = 0
    for m in _LOC_VAL.finditer(out):
        n = max(n, int(m.group(1)) + 1)
    n = max(n, 1)
    universe = [f"Loc!val!{k}" for k in range(n)]

    def ev(expr, env):
        if isinstance(expr, str):
            if expr in env:
                return env[expr]
            if expr == "true":
                return True
            if expr == "false":
                return False
            if _LOC_VAL.fullmatch(expr):
                return expr
            if re.fullmatch(r"-?\d+", expr):
                return int(expr)
            if expr in defs and not defs[expr][0]:
                return ev(defs[expr][2], {})
            raise SolverOutputError(f"cannot evaluate model atom {expr!r}")
        op = expr[0]
        if op == "-" and len(expr) == 2:
            return -ev(expr[1], env)
        if op == "ite":
            return ev(expr[2], env) if ev(expr[1], env) else ev(expr[3], env)
        if op == "=":
            vals = [ev(a, env) for a in expr[1:]]
            return all(v == vals[0] for v in vals[1:])
        if op == "distinct":
            vals = [ev(a, env) for a in expr[1:]]
            return len(set(vals)) == len(vals)
        if op == "and":
            return all(ev(a, env) for a in expr[1:])
        if op == "or":
            return any(ev(a, env) for a in expr[1:])
        if op == "not":
            return not ev(expr[1], env)
        if op == "=>":
            return (not ev(expr[1], env)) or ev(expr[2], env)
        if op in ("+", "-", "*"):
            vals = [ev(a, env) for a in expr[1:]]
            acc = vals[0]
            for v in vals[1:]:
                acc = acc + v if op == "+" else acc - v if op == "-" else acc * v
            return acc
        if op in ("<", "<=", ">", ">="):
            a, b = ev(expr[1], env), ev(expr[2], env)
            return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]
        if op == "let":
            env2 = dict(env)
            for bind in expr[1]:
                env2[bind[0]] = ev(bind[1], env)
            return ev(expr[2], env2)
        if isinstance(op, str) and op in defs:
            params, _ret, bd = defs[op]
            args = [ev(a, env) for a in expr[1:]]
            return ev(bd, dict(zip((p for p, _ in params), args)))
        raise SolverOutputError(f"cannot evaluate model expression {expr!r}")

    consts: dict = {}
    funcs: dict = {}
    rels: dict = {}
    for name, (params, ret, bd) in defs.items():
        sorts = [s for _, s in params]
        if not params:
            if ret == "Loc":
                consts[name] = ev(bd, {})
            elif ret == "Int":
                consts[name] = ev(bd, {})
            elif ret == "Bool":
                rels[name] = frozenset(((),)) if ev(bd, {}) else frozenset()
            continue
        if any(s != "Loc" for s in sorts):
            raise ModelHasIntParts(name)
        import itertools as _it

        if ret == "Bool":
            rels[name] = frozenset(
                combo
                for combo in _it.product(universe, repeat=len(sorts))
                if ev(bd, dict(zip((p for p, _ in params), combo)))
            )
        else:
            funcs[name] = {
                combo: ev(bd, dict(zip((p for p, _ in params), combo)))
                for combo in _it.product(universe, repeat=len(sorts))
            }
    nil_elem = consts.get("nil")
    if nil_elem is None:
        nil_elem = universe[0]
        consts["nil"] = nil_elem

    def rn(e):
        if isinstance(e, str):
            return "null" if e == nil_elem else e.replace("Loc!val!", "L")
        return e

    return FOStructure(
        locs=tuple(sorted({rn(u) for u in universe}, key=str)),
        consts={k: rn(v) for k, v in consts.items()},
        funcs={
            f: {tuple(rn(a) for a in k): rn(v) for k, v in tbl.items()}
            for f, tbl in funcs.items()
        },
        rels={
            r: frozenset(tuple(rn(a) for a in tup) for tup in s)
            for r, s in rels.items()
        },
    )
