"""Problem file parsing and pretty-printing.

Grammar (all whitespace-insensitive, ``//`` line comments):

    file   := (data | pred)* "checkentail" formula "|-" formula ";"
    data   := "data" ID "{" (type ID ";")+ "}" ";"
    pred   := "pred" ID "(" ID ("," ID)* ")" ":=" formula ";"

    formula := quantified | disj
    disj    := conj ("\\/" conj)*
    conj    := sepc ("&" sepc)*
    sepc    := atom ("*" atom)*
    atom    := "emp" | ID "(" term,* ")" | term "->" ID "{" term,* "}"
             | term ("="|"!="|"<"|"<="|">"|">=") term | "(" formula ")"
    term    := factor (("+"|"-") factor)*
    factor  := INT | "-" INT | "nil" | ID

Comparisons other than ``=``, ``!=`` and ``<`` are desugared so the integer
vocabulary stays at 0, 1, + and <.  Sorts are inferred: field positions come
from the data declaration, comparison and arithmetic operands are integers,
points-to sources are locations, and predicate argument positions unify with
the parameter they feed.  Identifiers left free in the query denote program
values and become constants.  Identifiers starting with ``_`` are reserved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .slast import (
    Add,
    And,
    Const,
    Emp,
    Eq,
    Exists,
    FieldTerm,
    Forall,
    Implies,
    INT,
    IntLit,
    LOC,
    Lt,
    Neq,
    NIL,
    Or,
    PredApp,
    PointsTo,
    PredDef,
    SepConj,
    SID,
    SLFormula,
    Term,
    Var,
    Vocabulary,
    children,
    atom_terms,
    free_vars,
    nil_const,
)


class SourceError(Exception):
    """Diagnostic with a position; rendered as file:line:col: message."""

    def __init__(self, msg: str, line: int, col: int, kind: str = "syntax"):
        super().__init__(msg)
        self.msg = msg
        self.line = line
        self.col = col
        self.kind = kind  # "syntax" | "sort"

    def render(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.kind} error: {self.msg}"


@dataclass(frozen=True)
class Problem:
    vocabulary: Vocabulary
    sid: SID
    antecedents: tuple[SLFormula, ...]  # top-level * conjuncts of the lhs
    consequent: SLFormula
    record_name: str = "node"
    source_name: str = "<input>"


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>\|-|\\/|->|!=|<=|>=|:=|=>|[-+*&=<>(){},.;])
    """,
    re.VERBOSE,
)

KEYWORDS = {"data", "pred", "checkentail", "exists", "forall", "emp", "nil"}


@dataclass
class Token:
    kind: str  # "int" | "id" | "sym" | "kw" | "eof"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    pos, line, bol = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SourceError(f"unexpected character {text[pos]!r}", line, pos - bol + 1)
        col = pos - bol + 1
        if m.lastgroup == "ws":
            chunk = m.group()
            if "\n" in chunk:
                line += chunk.count("\n")
                bol = pos + chunk.rfind("\n") + 1
        elif m.lastgroup == "id":
            kind = "kw" if m.group() in KEYWORDS else "id"
            toks.append(Token(kind, m.group(), line, col))
        else:
            toks.append(Token(m.lastgroup, m.group(), line, col))
        pos = m.end()
    toks.append(Token("eof", "", line, len(text) - bol + 1))
    return toks


# ---------------------------------------------------------------------------
# Sort inference (union-find over occurrence keys)


class _Sorts:
    def __init__(self):
        self.parent: dict = {}
        self.sort: dict = {}

    def find(self, k):
        while self.parent.get(k, k) != k:
            self.parent[k] = self.parent.get(self.parent[k], self.parent[k])
            k = self.parent[k]
        return k

    def union(self, a, b, tok: Optional[Token] = None):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        sa, sb = self.sort.get(ra), self.sort.get(rb)
        if sa and sb and sa != sb:
            t = tok or Token("", "", 0, 0)
            raise SourceError(
                f"conflicting sorts {sa} and {sb}", t.line, t.col, "sort"
            )
        self.parent[ra] = rb
        if sa:
            self.sort[rb] = sa

    def fix(self, k, sort: str, tok: Optional[Token] = None):
        r = self.find(k)
        cur = self.sort.get(r)
        if cur and cur != sort:
            t = tok or Token("", "", 0, 0)
            raise SourceError(
                f"conflicting sorts {cur} and {sort}", t.line, t.col, "sort"
            )
        self.sort[r] = sort

    def of(self, k) -> str:
        return self.sort.get(self.find(k), LOC)


# ---------------------------------------------------------------------------
# Parser

_UNSORTED = "?"


class Parser:
    def __init__(self, text: str, source_name: str = "<input>"):
        self.toks = tokenize(text)
        self.i = 0
        self.source_name = source_name
        self.sorts = _Sorts()
        self.record_name: Optional[str] = None
        self.record_shape: Optional[tuple[str, ...]] = None
        self.pred_arities: dict[str, int] = {}
        self.region = 0  # scopes identifier sorts per declaration body

    # token plumbing -------------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def eat(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if self.at(kind, text):
            return self.next()
        t = self.peek()
        want = text or kind
        got = t.text or "end of input"
        raise SourceError(f"expected {want!r}, found {got!r}", t.line, t.col)

    def ident(self) -> Token:
        t = self.expect("id")
        if t.text.startswith("_"):
            raise SourceError(
                "identifiers starting with '_' are reserved", t.line, t.col
            )
        return t

    # top level ------------------------------------------------------------

    def _data_decl(self):
        name = self.ident()
        self.expect("sym", "{")
        shape: list[str] = []
        while not self.eat("sym", "}"):
            ty = self.ident()
            shape.append(INT if ty.text == "int" else LOC)
            self.ident()  # field name, unused beyond syntax
            self.expect("sym", ";")
        self.expect("sym", ";")
        new_shape = tuple(shape)
        if self.record_shape is not None and self.record_shape != new_shape:
            raise SourceError(
                "multiple record shapes are not supported", name.line, name.col
            )
        if self.record_name is None:
            self.record_name = name.text
            self.record_shape = new_shape


def parse_problem(text: str, source_name: str = "<input>") -> Problem:
    return _ProblemParser(text, source_name).run()


class _ProblemParser(Parser):
    def run(self) -> Problem:
        raw_preds: list[tuple[Token, list[Token], SLFormula, int]] = []
        query: Optional[tuple[SLFormula, SLFormula, int]] = None
        while not self.at("eof"):
            if self.eat("kw", "data"):
                self._data_decl()
            elif self.eat("kw", "pred"):
                self.region += 1
                name = self.ident()
                self.expect("sym", "(")
                params = [self.ident()]
                while self.eat("sym", ","):
                    params.append(self.ident())
                self.expect("sym", ")")
                if name.text in self.pred_arities:
                    raise SourceError(
                        f"predicate {name.text!r} declared twice", name.line, name.col
                    )
                self.pred_arities[name.text] = len(params)
                self.expect("sym", ":=")
                body = self.formula(bound={p.text for p in params})
                self.expect("sym", ";")
                raw_preds.append((name, params, body, self.region))
            elif self.eat("kw", "checkentail"):
                self.region += 1
                lhs = self.formula(bound=set())
                self.expect("sym", "|-")
                rhs = self.formula(bound=set())
                self.expect("sym", ";")
                query = (lhs, rhs, self.region)
                break
            else:
                t = self.peek()
                got = t.text or "end of input"
                raise SourceError(
                    f"expected data/pred/checkentail, found {got!r}", t.line, t.col
                )
        if query is None:
            t = self.peek()
            raise SourceError("expected data/pred/checkentail", t.line, t.col)
        if not self.at("eof"):
            t = self.peek()
            raise SourceError(f"trailing input {t.text!r}", t.line, t.col)

        # tie predicate argument positions to parameter sorts
        for name, params, body, region in raw_preds:
            for k, p in enumerate(params):
                self.sorts.union(("n", region, p.text), ("p", name.text, k), p)

        # resolve sorts and rebuild the trees with concrete sorts
        sid_preds: dict[str, PredDef] = {}
        for name, params, body, region in raw_preds:
            pvars = tuple(
                Var(p.text, self.sorts.of(("n", region, p.text))) for p in params
            )
            resolved = self._resolve(body, region, {p.text for p in params}, False)
            evars: list[Var] = []
            cases: list[SLFormula] = []
            for raw_case in self._split_or(resolved):
                vs, qf = _hoist_exists(raw_case, {v.name for v in pvars}
                                       | {v.name for v in evars})
                evars.extend(vs)
                cases.append(qf)
            sid_preds[name.text] = PredDef(
                name.text, pvars, tuple(evars), tuple(cases)
            )
        lhs, rhs, qregion = query
        lhs_r = self._resolve(lhs, qregion, set(), True)
        rhs_r = self._resolve(rhs, qregion, set(), True)

        shape = self.record_shape if self.record_shape is not None else (LOC,)
        consts = {NIL: LOC}
        for f in (lhs_r, rhs_r):
            for phi in _walk(f):
                for t in atom_terms(phi):
                    for c in _term_consts(t):
                        consts[c.name] = c.sort
        vocab = Vocabulary(
            record_shape=shape,
            constants=consts,
            preds={
                n: tuple(v.sort for v in d.params) for n, d in sid_preds.items()
            },
        )
        ants = lhs_r.args if isinstance(lhs_r, SepConj) else (lhs_r,)
        return Problem(
            vocabulary=vocab,
            sid=SID(sid_preds),
            antecedents=ants,
            consequent=rhs_r,
            record_name=self.record_name or "node",
            source_name=self.source_name,
        )

    @staticmethod
    def _split_or(phi: SLFormula) -> tuple[SLFormula, ...]:
        return phi.args if isinstance(phi, Or) else (phi,)

    # (case-level existentials are hoisted by _hoist_exists below)

    # formula parsing: identifiers are carried unsorted until resolution ----

    def formula(self, bound: set[str]) -> SLFormula:
        if self.at("kw", "exists") or self.at("kw", "forall"):
            q = self.next()
            v = self.ident()
            self.expect("sym", ".")
            body = self.formula(bound | {v.text})
            cls = Exists if q.text == "exists" else Forall
            return cls(Var(v.text, _UNSORTED), body)
        return self.disj(bound)

    def disj(self, bound: set[str]) -> SLFormula:
        args = [self.conj(bound)]
        while self.eat("sym", "\\/"):
            args.append(self.conj(bound) if not self._at_quant() else self.formula(bound))
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conj(self, bound: set[str]) -> SLFormula:
        args = [self.sepc(bound)]
        while self.eat("sym", "&"):
            args.append(self.sepc(bound) if not self._at_quant() else self.formula(bound))
        return args[0] if len(args) == 1 else And(tuple(args))

    def sepc(self, bound: set[str]) -> SLFormula:
        args = [self.atom(bound)]
        while self.eat("sym", "*"):
            args.append(self.atom(bound) if not self._at_quant() else self.formula(bound))
        return args[0] if len(args) == 1 else SepConj(tuple(args))

    def _at_quant(self) -> bool:
        return self.at("kw", "exists") or self.at("kw", "forall")

    def atom(self, bound: set[str]) -> SLFormula:
        if self.eat("kw", "emp"):
            return Emp()
        if self.at("sym", "("):
            self.next()
            f = self.formula(bound)
            self.expect("sym", ")")
            return f
        if self.at("id") and self.toks[self.i + 1].kind == "sym" \
                and self.toks[self.i + 1].text == "(":
            name = self.ident()
            self.next()  # "("
            args = [self.term()]
            while self.eat("sym", ","):
                args.append(self.term())
            self.expect("sym", ")")
            if name.text not in self.pred_arities:
                raise SourceError(
                    f"undeclared predicate {name.text!r}", name.line, name.col, "sort"
                )
            if self.pred_arities[name.text] != len(args):
                raise SourceError(
                    f"predicate {name.text!r} expects "
                    f"{self.pred_arities[name.text]} arguments",
                    name.line, name.col, "sort",
                )
            for k, (a, _) in enumerate(args):
                self._tie(a, ("p", name.text, k), name)
            return PredApp(name.text, tuple(a for a, _ in args))
        lhs, ltok = self.term()
        if self.eat("sym", "->"):
            rec = self.ident()
            if self.record_name is None:
                raise SourceError(
                    "points-to used without a data declaration", rec.line, rec.col,
                    "sort",
                )
            if rec.text != self.record_name:
                raise SourceError(
                    f"unknown record type {rec.text!r}", rec.line, rec.col, "sort"
                )
            self.expect("sym", "{")
            fields = [self.term()]
            while self.eat("sym", ","):
                fields.append(self.term())
            self.expect("sym", "}")
            shape = self.record_shape or (LOC,)
            if len(fields) != len(shape):
                raise SourceError(
                    f"record {rec.text!r} has {len(shape)} fields", rec.line, rec.col,
                    "sort",
                )
            self._fix(lhs, LOC, ltok)
            for (f, ft), s in zip(fields, shape):
                self._fix(f, s, ft)
            return PointsTo(lhs, tuple(f for f, _ in fields))
        op = self.peek()
        if op.kind == "sym" and op.text in ("=", "!=", "<", "<=", ">", ">="):
            self.next()
            rhs, rtok = self.term()
            if op.text in ("=", "!="):
                self._tie_terms(lhs, rhs, op)
                return (Eq if op.text == "=" else Neq)(lhs, rhs)
            self._fix(lhs, INT, ltok)
            self._fix(rhs, INT, rtok)
            one = IntLit(1)
            if op.text == "<":
                return Lt(lhs, rhs)
            if op.text == "<=":
                return Lt(lhs, Add(rhs, one))
            if op.text == ">":
                return Lt(rhs, lhs)
            return Lt(rhs, Add(lhs, one))  # >=
        raise SourceError(
            f"expected a formula atom, found {op.text or 'end of input'!r}",
            op.line, op.col,
        )

    # terms: returned with the token that started them for diagnostics ------

    def term(self) -> tuple[Term, Token]:
        t, tok = self.factor()
        while self.at("sym", "+") or self.at("sym", "-"):
            op = self.next()
            r, rtok = self.factor()
            if op.text == "-":
                r = IntLit(-r.value) if isinstance(r, IntLit) else None
                if r is None:
                    raise SourceError(
                        "only integer literals may follow '-'", rtok.line, rtok.col
                    )
            self._fix(t, INT, tok)
            self._fix(r, INT, rtok)
            t = Add(t, r)
        return t, tok

    def factor(self) -> tuple[Term, Token]:
        if self.at("int"):
            tok = self.next()
            return IntLit(int(tok.text)), tok
        if self.at("sym", "-"):
            self.next()
            tok = self.expect("int")
            return IntLit(-int(tok.text)), tok
        if self.eat("kw", "nil"):
            return nil_const(), self.toks[self.i - 1]
        tok = self.ident()
        return Var(tok.text, _UNSORTED), tok

    # sort bookkeeping -------------------------------------------------------

    def _key(self, t: Term):
        if isinstance(t, Var) and t.sort == _UNSORTED:
            return ("n", self.region, t.name)
        return None

    def _fix(self, t: Term, sort: str, tok: Token):
        k = self._key(t)
        if k is not None:
            self.sorts.fix(k, sort, tok)
            return
        actual = INT if isinstance(t, (IntLit, Add)) else t.sort
        if actual != sort:
            raise SourceError(
                f"expected a {sort} term", tok.line, tok.col, "sort"
            )

    def _tie(self, t: Term, key, tok: Token):
        k = self._key(t)
        if k is not None:
            self.sorts.union(k, key, tok)
        else:
            actual = INT if isinstance(t, (IntLit, Add)) else t.sort
            self.sorts.fix(key, actual, tok)

    def _tie_terms(self, a: Term, b: Term, tok: Token):
        ka, kb = self._key(a), self._key(b)
        if ka is not None and kb is not None:
            self.sorts.union(ka, kb, tok)
        elif ka is not None:
            self._tie(b, ka, tok)
        elif kb is not None:
            self._tie(a, kb, tok)
        else:
            sa = INT if isinstance(a, (IntLit, Add)) else a.sort
            sb = INT if isinstance(b, (IntLit, Add)) else b.sort
            if sa != sb:
                raise SourceError(
                    f"comparison between {sa} and {sb} terms", tok.line, tok.col,
                    "sort",
                )

    # post-pass: stamp inferred sorts, turn free names into constants --------

    def _resolve(self, phi: SLFormula, region: int, bound: set[str],
                 free_are_consts: bool) -> SLFormula:
        def rt(t: Term, bound: set[str]) -> Term:
            if isinstance(t, Var) and t.sort == _UNSORTED:
                sort = self.sorts.of(("n", region, t.name))
                if t.name in bound or not free_are_consts:
                    return Var(t.name, sort)
                return Const(t.name, sort)
            if isinstance(t, Add):
                return Add(rt(t.left, bound), rt(t.right, bound))
            return t

        def rf(phi: SLFormula, bound: set[str]) -> SLFormula:
            if isinstance(phi, (Eq, Neq, Lt)):
                return type(phi)(rt(phi.left, bound), rt(phi.right, bound))
            if isinstance(phi, Emp):
                return phi
            if isinstance(phi, PointsTo):
                return PointsTo(
                    rt(phi.source, bound), tuple(rt(f, bound) for f in phi.fields)
                )
            if isinstance(phi, PredApp):
                return PredApp(phi.pred, tuple(rt(a, bound) for a in phi.args))
            if isinstance(phi, (And, Or, SepConj)):
                return type(phi)(tuple(rf(a, bound) for a in phi.args))
            if isinstance(phi, (Exists, Forall)):
                sort = self.sorts.of(("n", region, phi.var.name))
                return type(phi)(
                    Var(phi.var.name, sort), rf(phi.body, bound | {phi.var.name})
                )
            raise AssertionError(phi)

        return rf(phi, bound)


def _hoist_exists(phi: SLFormula, taken: set[str]) -> tuple[list[Var], SLFormula]:
    """Pull case-level existentials to the front, renaming to avoid clashes.

    Definition cases are written with inline ``exists`` (e.g. after a ``*``);
    the stored form keeps cases quantifier-free with the witnesses collected
    per predicate. Hoisting through * and ∧ is sound because the bound
    variable is fresh for the sibling conjuncts.
    """
    from .slast import subst

    if isinstance(phi, Exists):
        v = phi.var
        body = phi.body
        if v.name in taken:
            k = 0
            while f"{v.name}{k}" in taken:
                k += 1
            fresh = Var(f"{v.name}{k}", v.sort)
            body = subst(body, {v: fresh})
            v = fresh
        inner_vs, qf = _hoist_exists(body, taken | {v.name})
        return [v] + inner_vs, qf
    if isinstance(phi, (And, SepConj)):
        all_vs: list[Var] = []
        parts: list[SLFormula] = []
        here = set(taken)
        for a in phi.args:
            vs, qf = _hoist_exists(a, here)
            here |= {v.name for v in vs}
            all_vs.extend(vs)
            parts.append(qf)
        return all_vs, type(phi)(tuple(parts))
    return [], phi


def _walk(phi: SLFormula):
    yield phi
    for c in children(phi):
        yield from _walk(c)


def _term_consts(t: Term):
    if isinstance(t, Const):
        yield t
    elif isinstance(t, Add):
        yield from _term_consts(t.left)
        yield from _term_consts(t.right)


# ---------------------------------------------------------------------------
# Printing

_PREC = {Or: 1, And: 2, SepConj: 3}
_OPS = {Or: " \\/ ", And: " & ", SepConj: " * "}


def print_term(t: Term) -> str:
    if isinstance(t, (Const, Var)):
        return t.name
    if isinstance(t, IntLit):
        return str(t.value)
    if isinstance(t, Add):
        r = t.right
        if isinstance(r, IntLit) and r.value < 0:
            return f"{print_term(t.left)} - {-r.value}"
        return f"{print_term(t.left)} + {print_term(r)}"
    if isinstance(t, FieldTerm):
        # internal marker terms; shown only in debug output
        return f"<field {t.index} of {print_term(t.arg)}>"
    raise TypeError(f"not a term: {t!r}")


def print_formula(phi: SLFormula, record_name: str = "node", _level: int = 0) -> str:
    if isinstance(phi, Emp):
        return "emp"
    if isinstance(phi, Eq):
        return f"{print_term(phi.left)} = {print_term(phi.right)}"
    if isinstance(phi, Neq):
        return f"{print_term(phi.left)} != {print_term(phi.right)}"
    if isinstance(phi, Lt):
        return f"{print_term(phi.left)} < {print_term(phi.right)}"
    if isinstance(phi, PointsTo):
        fields = ",".join(print_term(f) for f in phi.fields)
        return f"{print_term(phi.source)}->{record_name}{{{fields}}}"
    if isinstance(phi, PredApp):
        return f"{phi.pred}({','.join(print_term(a) for a in phi.args)})"
    if isinstance(phi, (Or, And, SepConj)):
        prec = _PREC[type(phi)]
        body = _OPS[type(phi)].join(
            print_formula(a, record_name, prec) for a in phi.args
        )
        return f"({body})" if _level >= prec else body
    if isinstance(phi, (Exists, Forall)):
        q = "exists" if isinstance(phi, Exists) else "forall"
        body = f"{q} {phi.var.name}. {print_formula(phi.body, record_name, 0)}"
        return f"({body})" if _level > 0 else body
    if isinstance(phi, Implies):
        return (
            f"({print_formula(phi.left, record_name, 1)} => "
            f"{print_formula(phi.right, record_name, 1)})"
        )
    raise TypeError(f"not an SL formula: {phi!r}")


def print_problem(p: Problem) -> str:
    lines: list[str] = []
    shape = p.vocabulary.record_shape
    fields = "".join(
        f" {'int' if s == INT else p.record_name} f{i};" for i, s in enumerate(shape)
    )
    lines.append(f"data {p.record_name} {{{fields} }};")
    for d in p.sid:
        params = ",".join(v.name for v in d.params)
        cases = []
        for c in d.cases:
            used = free_vars(c) & set(d.exists)
            txt = print_formula(c, p.record_name, 1)
            for v in sorted(used, key=lambda v: v.name, reverse=True):
                txt = f"(exists {v.name}. {txt})"
            cases.append(txt)
        body = " \\/ ".join(cases)
        lines.append(f"pred {d.name}({params}) := {body};")
    lhs = " * ".join(print_formula(a, p.record_name, 3) for a in p.antecedents)
    rhs = print_formula(p.consequent, p.record_name, 0)
    lines.append(f"checkentail {lhs} |- {rhs};")
    return "\n".join(lines) + "\n"
