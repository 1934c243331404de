"""Symbolic structures: finite presentations of possibly infinite FO
structures, decidable model checking by compilation to quantified linear
integer arithmetic, and template-based search for rogue counter-models.

A structure has finitely many location nodes, each carrying a set of
integers described by a bound formula in one variable `i` (the designated
null node is a singleton), plus the single standard integer node.  Every
element is a pair (node, index).  Constants pick an element; a field
function maps each source node to a target node and an index term over
`i1`; a relation assigns each node tuple a formula over `i1..ik`.
Cross-node equality is false by construction.

Templates are the same shape with integer parameters in place of concrete
choices (target selectors, index offsets, relation atom selectors); solving
the compiled query for the parameters yields a candidate structure, which
is then re-validated and model-checked independently.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Optional

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
    FOTrue,
    FOVocabulary,
    Obligation,
    fo_and,
    fo_exists,
    fo_forall,
    fo_not,
    fo_or,
    fo_subst,
)
from .fragments import FragmentReport
from .slast import Add, Const, FieldTerm, IntLit, INT, LOC, NIL, Sub, Term, Var
from . import smt
from .fol import field_fn_name

INT_NODE = "@int"
IVAR = Var("i", INT)


class InternalSolverError(Exception):
    """The solver failed on a query inside the decidable fragment."""


class CertificationError(Exception):
    """A synthesized structure failed its own certification."""


def ivar(k: int) -> Var:
    return Var(f"i{k}", INT)


def leq(a: Term, b: Term) -> FOFormula:
    return fo_not(FOLt(b, a))


@dataclass(frozen=True)
class SymbolicStructure:
    nodes: tuple[str, ...]  # loc nodes; null_node among them
    null_node: str
    bounds: dict  # node -> FOFormula over IVAR
    const_interp: dict  # name -> (node | "@int", int)
    func_interp: dict  # fn -> {(src,): (target node | "@int", Term over i1)}
    rel_interp: dict  # rel -> {key tuple: FOFormula over i1..ik}; missing = false


# ---------------------------------------------------------------------------
# Compilation to LIA (shared between concrete structures and templates)


class _ConcreteView:
    def __init__(self, S: SymbolicStructure):
        self.S = S

    @property
    def nodes(self):
        return self.S.nodes

    def bound(self, node: str, t: Term) -> FOFormula:
        if node == INT_NODE:
            return FOTrue()
        return fo_subst(self.S.bounds[node], {IVAR: t})

    def const_alts(self, name: str):
        node, val = self.S.const_interp[name]
        return [(FOTrue(), node, IntLit(val))]

    def func_alts(self, fn: str, src: str, t: Term):
        node, term = self.S.func_interp[fn][(src,)]
        return [(FOTrue(), node, fo_term_subst(term, {ivar(1): t}))]

    def rel_formula(self, rel: str, key: tuple, terms: tuple) -> FOFormula:
        f = self.S.rel_interp.get(rel, {}).get(key)
        if f is None:
            return FOFalse()
        m = {ivar(j + 1): terms[j] for j in range(len(terms))}
        return fo_subst(f, m)


def fo_term_subst(t: Term, m: dict) -> Term:
    from .slast import subst_term

    return subst_term(t, m)


class CompileError(Exception):
    pass


class _Compiler:
    """Compiles FO sentences over a structure (or template) into LIA.

    With `depth` set, quantifiers over unbounded index sets are replaced by
    finite instantiation at indices 0..depth (ints at -depth..depth), giving
    a quantifier-free approximation: weaker for foralls, stronger for
    existentials.  Useful only for heuristic search whose results are
    re-checked exactly."""

    def __init__(self, view, depth: Optional[int] = None):
        self.view = view
        self.ctr = 0
        self.depth = depth

    def fresh(self) -> Var:
        self.ctr += 1
        return Var(f"_q{self.ctr}", INT)

    # terms -> list of (guard, node, index term)
    def term(self, t: Term, env: dict):
        if isinstance(t, Const):
            if t.sort == INT:
                alts = self.view.const_alts(t.name)
                return [(g, INT_NODE, v) for g, _n, v in alts]
            return self.view.const_alts(t.name)
        if isinstance(t, Var):
            if t not in env:
                raise CompileError(f"unbound variable {t.name}")
            n, s = env[t]
            return [(FOTrue(), n, s)]
        if isinstance(t, IntLit):
            return [(FOTrue(), INT_NODE, t)]
        if isinstance(t, (Add, Sub)):
            out = []
            mk = Add if isinstance(t, Add) else Sub
            for gl, nl, sl in self.term(t.left, env):
                for gr, nr, sr in self.term(t.right, env):
                    if nl != INT_NODE or nr != INT_NODE:
                        raise CompileError("arithmetic on non-integers")
                    out.append((fo_and([gl, gr]), INT_NODE, mk(sl, sr)))
            return out
        if isinstance(t, FieldTerm):
            out = []
            for g, n, s in self.term(t.arg, env):
                if n == INT_NODE:
                    raise CompileError("field of a non-location")
                for g2, n2, s2 in self.view.func_alts(field_fn_name(t.index), n, s):
                    out.append((fo_and([g, g2]), n2, s2))
            return out
        raise CompileError(f"cannot compile term {t!r}")

    def formula(self, phi: FOFormula, env: dict) -> FOFormula:
        if isinstance(phi, (FOTrue, FOFalse)):
            return phi
        if isinstance(phi, FOEq):
            out = []
            for gl, nl, sl in self.term(phi.left, env):
                for gr, nr, sr in self.term(phi.right, env):
                    if (nl == INT_NODE) != (nr == INT_NODE):
                        raise CompileError("equality between sorts")
                    if nl == INT_NODE or nl == nr:
                        out.append(fo_and([gl, gr, FOEq(sl, sr)]))
                    # distinct location nodes: equality is false, no clause
            return fo_or(out)
        if isinstance(phi, FOLt):
            out = []
            for gl, nl, sl in self.term(phi.left, env):
                for gr, nr, sr in self.term(phi.right, env):
                    if nl != INT_NODE or nr != INT_NODE:
                        raise CompileError("comparison of non-integers")
                    out.append(fo_and([gl, gr, FOLt(sl, sr)]))
            return fo_or(out)
        if isinstance(phi, FORel):
            alt_lists = [self.term(a, env) for a in phi.args]
            out = []
            for combo in itertools.product(*alt_lists):
                guards = [g for g, _n, _s in combo]
                key = tuple(n for _g, n, _s in combo)
                terms = tuple(s for _g, _n, s in combo)
                out.append(
                    fo_and(guards + [self.view.rel_formula(phi.name, key, terms)])
                )
            return fo_or(out)
        if isinstance(phi, FONot):
            return fo_not(self.formula(phi.arg, env))
        if isinstance(phi, FOAnd):
            return fo_and([self.formula(a, env) for a in phi.args])
        if isinstance(phi, FOOr):
            return fo_or([self.formula(a, env) for a in phi.args])
        if isinstance(phi, FOImplies):
            return FOImplies(
                self.formula(phi.left, env), self.formula(phi.right, env)
            )
        if isinstance(phi, FOIff):
            left = self.formula(phi.left, env)
            right = self.formula(phi.right, env)
            if isinstance(left, FOFalse):
                return fo_not(right)
            if isinstance(right, FOFalse):
                return fo_not(left)
            return FOIff(left, right)
        if isinstance(phi, (FOForall, FOExists)):
            return self._quant(phi, env)
        raise CompileError(f"cannot compile formula {phi!r}")

    def _quant(self, phi, env: dict) -> FOFormula:
        var = phi.vars[0]
        rest: FOFormula = (
            type(phi)(phi.vars[1:], phi.body) if len(phi.vars) > 1 else phi.body
        )
        is_forall = isinstance(phi, FOForall)
        if var.sort == INT:
            if self.depth is not None:
                parts = [
                    self.formula(rest, {**env, var: (INT_NODE, IntLit(v))})
                    for v in range(-self.depth, self.depth + 1)
                ]
                return fo_and(parts) if is_forall else fo_or(parts)
            j = self.fresh()
            inner = self.formula(rest, {**env, var: (INT_NODE, j)})
            return fo_forall((j,), inner) if is_forall else fo_exists((j,), inner)
        parts = []
        for n in self.view.nodes:
            j = self.fresh()
            b = self.view.bound(n, j)
            # singleton nodes need no index quantifier
            if isinstance(b, FOEq) and b.left == j and isinstance(b.right, IntLit):
                parts.append(self.formula(rest, {**env, var: (n, b.right)}))
                continue
            if self.depth is not None:
                for v in range(self.depth + 1):
                    guard = self.view.bound(n, IntLit(v))
                    inner = self.formula(rest, {**env, var: (n, IntLit(v))})
                    if is_forall:
                        parts.append(FOImplies(guard, inner))
                    else:
                        parts.append(fo_and([guard, inner]))
                continue
            inner = self.formula(rest, {**env, var: (n, j)})
            if is_forall:
                parts.append(fo_forall((j,), FOImplies(b, inner)))
            else:
                parts.append(fo_exists((j,), fo_and([b, inner])))
        return fo_and(parts) if is_forall else fo_or(parts)


def compile_sentence(S_or_view, sigma: FOFormula) -> FOFormula:
    view = S_or_view if hasattr(S_or_view, "rel_formula") else _ConcreteView(S_or_view)
    return _Compiler(view).formula(sigma, {})


# ---------------------------------------------------------------------------
# Deciding LIA queries


def _lia_obligation(phi: FOFormula, params: Iterable[Const] = ()) -> Obligation:
    vocab = FOVocabulary({p.name: INT for p in params}, (), {})
    return Obligation(vocab, (phi,), ("lia-query",))


def decide_lia(
    phi: FOFormula,
    solver_cmd=None,
    timeout: float = 60.0,
    cancel=None,
) -> bool:
    """Validity of a closed LIA sentence; Unknown is an internal error
    because the fragment is decidable."""
    v = smt.check(
        _lia_obligation(fo_not(phi)),
        timeout=timeout,
        solver_cmd=solver_cmd,
        cancel=cancel,
    )
    if v.status == "unsat":
        return True
    if v.status == "sat":
        return False
    raise InternalSolverError(f"solver returned unknown on a LIA query: {v.reason}")


def eval_ground(phi: FOFormula) -> bool:
    """Evaluate a ground (variable- and quantifier-free) LIA formula."""

    def term(t: Term) -> int:
        if isinstance(t, IntLit):
            return t.value
        if isinstance(t, Add):
            return term(t.left) + term(t.right)
        if isinstance(t, Sub):
            return term(t.left) - term(t.right)
        raise ValueError(f"not ground: {t!r}")

    if isinstance(phi, FOTrue):
        return True
    if isinstance(phi, FOFalse):
        return False
    if isinstance(phi, FOEq):
        return term(phi.left) == term(phi.right)
    if isinstance(phi, FOLt):
        return term(phi.left) < term(phi.right)
    if isinstance(phi, FONot):
        return not eval_ground(phi.arg)
    if isinstance(phi, FOAnd):
        return all(eval_ground(a) for a in phi.args)
    if isinstance(phi, FOOr):
        return any(eval_ground(a) for a in phi.args)
    if isinstance(phi, FOImplies):
        return (not eval_ground(phi.left)) or eval_ground(phi.right)
    if isinstance(phi, FOIff):
        return eval_ground(phi.left) == eval_ground(phi.right)
    raise ValueError(f"not ground: {phi!r}")


# ---------------------------------------------------------------------------
# Validation


def validate_structure(
    S: SymbolicStructure,
    vocab: FOVocabulary,
    solver_cmd=None,
    timeout: float = 60.0,
) -> FragmentReport:
    cat = "symbolic-structure"

    def fail(msg: str) -> FragmentReport:
        return FragmentReport(False, cat, msg)

    if S.null_node not in S.nodes:
        return fail(f"null node {S.null_node!r} not among nodes")
    for n in S.nodes:
        if n not in S.bounds:
            return fail(f"node {n} has no bound formula")
    # bound satisfiability (batched; on failure, localize), and the null
    # node must be a singleton
    sat_parts = []
    for idx, n in enumerate(S.nodes):
        jn = Var(f"j{idx}", INT)
        sat_parts.append(fo_exists((jn,), fo_subst(S.bounds[n], {IVAR: jn})))
    if not decide_lia(fo_and(sat_parts), solver_cmd, timeout):
        for n in S.nodes:
            if not decide_lia(
                fo_exists((IVAR,), S.bounds[n]), solver_cmd, timeout
            ):
                return fail(f"bound of node {n} is unsatisfiable")
        return fail("some node bound is unsatisfiable")
    i2 = Var("j", INT)
    b0 = S.bounds[S.null_node]
    unique = fo_not(
        fo_exists(
            (IVAR, i2),
            fo_and([b0, fo_subst(b0, {IVAR: i2}), fo_not(FOEq(IVAR, i2))]),
        )
    )
    if not decide_lia(unique, solver_cmd, timeout):
        return fail("null node bound is not a singleton")
    # constants: inside their node's bound; nil at the null node
    for name, sort in vocab.constants.items():
        if name not in S.const_interp:
            return fail(f"constant {name} has no interpretation")
        node, val = S.const_interp[name]
        if sort == INT:
            if node != INT_NODE:
                return fail(f"int constant {name} not on the int node")
            continue
        if node not in S.nodes:
            return fail(f"constant {name} maps to unknown node {node}")
        if not eval_ground(fo_subst(S.bounds[node], {IVAR: IntLit(val)})):
            return fail(f"constant {name}={val} violates the bound of {node}")
    if NIL in vocab.constants and S.const_interp[NIL][0] != S.null_node:
        return fail("nil is not interpreted at the null node")
    # functions: total on location nodes, closure condition holds
    closure_parts = []
    for fidx, sort in enumerate(vocab.field_sorts, start=1):
        fn = field_fn_name(fidx)
        table = S.func_interp.get(fn, {})
        for n in S.nodes:
            if (n,) not in table:
                return fail(f"function {fn} undefined on node {n}")
            tgt, term = table[(n,)]
            if sort == INT:
                if tgt != INT_NODE:
                    return fail(f"{fn} on {n} must target the int node")
                continue
            if tgt == INT_NODE or tgt not in S.nodes:
                return fail(f"{fn} on {n} targets unknown node {tgt!r}")
            src_b = fo_subst(S.bounds[n], {IVAR: ivar(1)})
            tgt_b = fo_subst(S.bounds[tgt], {IVAR: term})
            closure_parts.append(
                (fn, n, fo_forall((ivar(1),), FOImplies(src_b, tgt_b)))
            )
    if closure_parts:
        batch = fo_and([p for _, _, p in closure_parts])
        if not decide_lia(batch, solver_cmd, timeout):
            for fn, n, p in closure_parts:
                if not decide_lia(p, solver_cmd, timeout):
                    return fail(f"closure violated by {fn} on node {n}")
            return fail("closure violated")
    # relation keys must be node tuples of the right shape
    for rel, table in S.rel_interp.items():
        sig = vocab.rels.get(rel)
        if sig is None:
            return fail(f"unknown relation {rel}")
        for key in table:
            if len(key) != len(sig):
                return fail(f"relation {rel} key {key} has wrong arity")
            for pos, (k, s) in enumerate(zip(key, sig)):
                if s == INT and k != INT_NODE:
                    return fail(f"relation {rel} key {key}: position {pos} "
                                "must be the int node")
                if s == LOC and k not in S.nodes:
                    return fail(f"relation {rel} key {key}: unknown node {k}")
    return FragmentReport(True, cat)


def model_check(
    S: SymbolicStructure,
    sigma: FOFormula,
    solver_cmd=None,
    timeout: float = 60.0,
    cancel=None,
) -> bool:
    """Does the (possibly infinite) structure denoted by S satisfy sigma?"""
    return decide_lia(compile_sentence(S, sigma), solver_cmd, timeout, cancel)


def has_infinite_domain(
    S: SymbolicStructure, solver_cmd=None, timeout: float = 60.0
) -> bool:
    return bool(infinite_nodes(S, solver_cmd, timeout))


def infinite_nodes(
    S: SymbolicStructure, solver_cmd=None, timeout: float = 60.0
) -> list[str]:
    """Nodes whose bound has infinitely many solutions (= unbounded sets)."""
    out = []
    b_var = Var("b", INT)
    for n in S.nodes:
        bound = S.bounds[n]
        if (
            isinstance(bound, FOEq)
            and bound.left == IVAR
            and isinstance(bound.right, IntLit)
        ):
            continue  # singleton bound, trivially finite
        above = fo_forall(
            (b_var,),
            fo_exists((IVAR,), fo_and([bound, FOLt(b_var, IVAR)])),
        )
        below = fo_forall(
            (b_var,),
            fo_exists((IVAR,), fo_and([bound, FOLt(IVAR, b_var)])),
        )
        if decide_lia(above, solver_cmd, timeout) or decide_lia(
            below, solver_cmd, timeout
        ):
            out.append(n)
    return out


# ---------------------------------------------------------------------------
# Templates


@dataclass
class Template:
    """Parametric symbolic-structure skeleton over a fixed FO vocabulary.

    Non-null nodes are singletons or rays depending on a shape parameter;
    bounds are normalized (singleton {0}, ray [0,inf)), which loses no
    structures up to index translation.  Field functions choose a target
    node and an index term i+a or a; relation entries are guarded
    conjunctions of difference atoms between argument indices.
    """

    name: str
    k: int
    vocab: FOVocabulary
    offset_bound: int = 2
    index_bound: int = 3  # cap on constant indices and pointer index offsets
    shapes: Optional[tuple] = None  # per non-null node: 0 singleton, 1 ray
    params: list = dc_field(default_factory=list)
    side: FOFormula = dc_field(default_factory=FOTrue)

    def __post_init__(self):
        self.nodes = ("null",) + tuple(f"n{j}" for j in range(1, self.k + 1))
        if self.shapes is not None and len(self.shapes) != self.k:
            raise ValueError("shapes must give one entry per non-null node")
        self._shape: dict = {}
        self._const: dict = {}
        self._func: dict = {}
        self._rel: dict = {}
        self._rel_cache: dict = {}
        self.bounded_params: list = []
        self.sparsity_params: list = []  # 0/1 switches worth keeping at 0
        side: list[FOFormula] = []

        def param(name: str, lo: Optional[int] = None, hi: Optional[int] = None):
            p = Const(name, INT)
            self.params.append(p)
            if lo is not None:
                side.append(leq(IntLit(lo), p))
            if hi is not None:
                side.append(leq(p, IntLit(hi)))
            if lo is not None and hi is not None:
                self.bounded_params.append(p)
            return p

        if self.shapes is not None:
            for n, s in zip(self.nodes[1:], self.shapes):
                self._shape[n] = int(s)
        else:
            for n in self.nodes[1:]:
                self._shape[n] = param(f"shape_{n}", 0, 1)
        for cname, sort in sorted(self.vocab.constants.items()):
            if sort == INT:
                self._const[cname] = [(FOTrue(), INT_NODE, param(f"val_{cname}"))]
                continue
            if cname == NIL:
                self._const[cname] = [(FOTrue(), "null", IntLit(0))]
                continue
            sel = param(f"node_{cname}", 0, self.k)
            val = param(f"val_{cname}", 0, self.index_bound)
            alts = []
            for idx, n in enumerate(self.nodes):
                g = FOEq(sel, IntLit(idx))
                alts.append((g, n, val))
                side.append(FOImplies(g, self.bound(n, val)))
            self._const[cname] = alts
        for fidx, sort in enumerate(self.vocab.field_sorts, start=1):
            fn = field_fn_name(fidx)
            tbl: dict = {}
            for src in self.nodes:
                if sort == INT:
                    a = param(f"off_{fn}_{src}")
                    bs = param(f"lin_{fn}_{src}", -1, 1)
                    alts = [
                        (FOEq(bs, IntLit(-1)), INT_NODE, Sub(a, ivar(1))),
                        (FOEq(bs, IntLit(0)), INT_NODE, a),
                        (FOEq(bs, IntLit(1)), INT_NODE, Add(a, ivar(1))),
                    ]
                    tbl[(src,)] = alts
                    continue
                a = param(f"off_{fn}_{src}", 0, self.index_bound)
                tsel = param(f"tgt_{fn}_{src}", 0, self.k)
                bs = param(f"lin_{fn}_{src}", 0, 1)
                alts = []
                for idx, tgt in enumerate(self.nodes):
                    if tgt == "null":
                        g = FOEq(tsel, IntLit(0))
                        alts.append((g, tgt, IntLit(0)))
                        continue
                    for e in (0, 1):
                        g = fo_and([FOEq(tsel, IntLit(idx)), FOEq(bs, IntLit(e))])
                        vterm: Term = a if e == 0 else Add(ivar(1), a)
                        alts.append((g, tgt, vterm))
                        side.append(FOImplies(g, self._closure(src, tgt, e, a)))
                tbl[(src,)] = alts
            self._func[fn] = tbl
        for rel, sig in sorted(self.vocab.rels.items()):
            tbl = {}
            pos_domains = [
                self.nodes if s == LOC else (INT_NODE,) for s in sig
            ]
            for key in itertools.product(*pos_domains):
                tag = f"{rel}_" + "_".join(
                    n.replace("@", "x") for n in key
                )
                sel = param(f"sel_{tag}", 0, 1)
                self.sparsity_params.append(sel)
                conj = [FOEq(sel, IntLit(1))]
                arity = len(sig)
                # the index of a singleton-node position is the constant 0,
                # so atoms between two singleton positions carry no content
                for p in range(arity):
                    for q in range(arity):
                        if p == q:
                            continue
                        if not (self._variable_pos(key[p])
                                or self._variable_pos(key[q])):
                            continue
                        psel = param(f"atom_{tag}_{p}{q}", 0, 1)
                        self.sparsity_params.append(psel)
                        off = param(
                            f"gap_{tag}_{p}{q}",
                            -self.offset_bound,
                            self.offset_bound,
                        )
                        ip, iq = ivar(p + 1), ivar(q + 1)
                        conj.append(
                            fo_or(
                                [
                                    FOEq(psel, IntLit(0)),
                                    leq(ip, Add(iq, off)),
                                ]
                            )
                        )
                tbl[key] = fo_and(conj)
            self._rel[rel] = tbl
        self.side = fo_and(side)

    def sparsity_objective(self) -> Optional[Term]:
        """Sum of the relation switches: minimizing it prefers structures
        with few relation entries and few index constraints, which are far
        more likely to survive exact certification."""
        if not self.sparsity_params:
            return None
        obj: Term = self.sparsity_params[0]
        for p in self.sparsity_params[1:]:
            obj = Add(obj, p)
        return obj

    def _variable_pos(self, node: str) -> bool:
        """Can elements of this node have an index other than 0?"""
        if node == INT_NODE:
            return True
        if node == "null":
            return False
        s = self._shape[node]
        return not isinstance(s, int) or s == 1

    def _closure(self, src: str, tgt: str, e: int, a) -> FOFormula:
        """Image of src under the field alternative lies within tgt's bound."""
        src_s, tgt_s = self._shape.get(src, 0), self._shape[tgt]
        if isinstance(src_s, int) and isinstance(tgt_s, int):
            if src_s == 0:  # single source element at index 0, value is a
                return FOEq(a, IntLit(0)) if tgt_s == 0 else leq(IntLit(0), a)
            if tgt_s == 0:  # ray cannot map injectively-or-not into {0} via i+a
                return FOEq(a, IntLit(0)) if e == 0 else FOFalse()
            return leq(IntLit(0), a)
        vterm: Term = a if e == 0 else Add(ivar(1), a)
        return fo_forall(
            (ivar(1),),
            FOImplies(self.bound(src, ivar(1)), self.bound(tgt, vterm)),
        )

    # view interface -------------------------------------------------------

    def bound(self, node: str, t: Term) -> FOFormula:
        if node == INT_NODE:
            return FOTrue()
        if node == "null":
            return FOEq(t, IntLit(0))
        s = self._shape[node]
        if isinstance(s, int):
            return FOEq(t, IntLit(0)) if s == 0 else leq(IntLit(0), t)
        return fo_or(
            [
                fo_and([FOEq(s, IntLit(0)), FOEq(t, IntLit(0))]),
                fo_and([FOEq(s, IntLit(1)), leq(IntLit(0), t)]),
            ]
        )

    def const_alts(self, name: str):
        return self._const[name]

    def func_alts(self, fn: str, src: str, t: Term):
        return [
            (g, n, fo_term_subst(term, {ivar(1): t}))
            for g, n, term in self._func[fn][(src,)]
        ]

    def rel_formula(self, rel: str, key: tuple, terms: tuple) -> FOFormula:
        # depth-bounded compilation asks for the same few instantiations
        # over and over; the formulas are large, so cache the substitution
        ck = (rel, key, terms)
        hit = self._rel_cache.get(ck)
        if hit is not None:
            return hit
        f = self._rel.get(rel, {}).get(key)
        if f is None:
            raise CompileError(f"template has no entry for {rel}{key}")
        out = fo_subst(f, {ivar(j + 1): terms[j] for j in range(len(terms))})
        self._rel_cache[ck] = out
        return out


def ListTemplate(k: int, vocab: FOVocabulary, offset_bound: int = 2) -> Template:
    loc_fields = sum(1 for s in vocab.field_sorts if s == LOC)
    if loc_fields > 1:
        raise ValueError("list template expects at most one location field")
    return Template(f"list{k}", k, vocab, offset_bound)


def TreeTemplate(k: int, vocab: FOVocabulary, offset_bound: int = 2) -> Template:
    return Template(f"tree{k}", k, vocab, offset_bound)


def compile_template(
    T: Template, o: Obligation, depth: Optional[int] = None
) -> FOFormula:
    comp = _Compiler(T, depth)
    parts = [T.side]
    for s in o.sentences:
        parts.append(comp.formula(s, {}))
    return fo_and(parts)


def instantiate(T: Template, values: dict) -> SymbolicStructure:
    """Concrete structure from solved parameter values."""

    def pv(p: Const) -> int:
        return values.get(p.name, 0)

    def ground_term(t: Term) -> Term:
        if isinstance(t, Const):
            return IntLit(pv(t))
        if isinstance(t, Add):
            return Add(ground_term(t.left), ground_term(t.right))
        if isinstance(t, Sub):
            return Sub(ground_term(t.left), ground_term(t.right))
        return t

    def ground_formula(f: FOFormula) -> FOFormula:
        if isinstance(f, (FOTrue, FOFalse)):
            return f
        if isinstance(f, FOEq):
            l, r = _try_ground(f.left), _try_ground(f.right)
            if isinstance(l, IntLit) and isinstance(r, IntLit):
                return FOTrue() if l.value == r.value else FOFalse()
            return FOEq(l, r)
        if isinstance(f, FOLt):
            l, r = _try_ground(f.left), _try_ground(f.right)
            if isinstance(l, IntLit) and isinstance(r, IntLit):
                return FOTrue() if l.value < r.value else FOFalse()
            return FOLt(l, r)
        if isinstance(f, FONot):
            return fo_not(ground_formula(f.arg))
        if isinstance(f, FOAnd):
            return fo_and([ground_formula(a) for a in f.args])
        if isinstance(f, FOOr):
            return fo_or([ground_formula(a) for a in f.args])
        if isinstance(f, FOImplies):
            l = ground_formula(f.left)
            if isinstance(l, FOFalse):
                return FOTrue()
            r = ground_formula(f.right)
            if isinstance(l, FOTrue):
                return r
            return FOImplies(l, r)
        raise ValueError(f"unexpected template formula {f!r}")

    def _try_ground(t: Term) -> Term:
        if isinstance(t, Const):
            return IntLit(pv(t))
        if isinstance(t, IntLit):
            return t
        if isinstance(t, (Add, Sub)):
            l, r = _try_ground(t.left), _try_ground(t.right)
            if isinstance(l, IntLit) and isinstance(r, IntLit):
                v = l.value + r.value if isinstance(t, Add) else l.value - r.value
                return IntLit(v)
            return (Add if isinstance(t, Add) else Sub)(l, r)
        return t

    bounds = {"null": FOEq(IVAR, IntLit(0))}
    for n in T.nodes[1:]:
        s = T._shape[n]
        sval = s if isinstance(s, int) else pv(s)
        bounds[n] = FOEq(IVAR, IntLit(0)) if sval == 0 else leq(IntLit(0), IVAR)
    consts = {}
    for name, alts in T._const.items():
        chosen = None
        for g, node, val in alts:
            if eval_ground(ground_formula(g)):
                chosen = (node, _as_int(ground_term(val)))
                break
        if chosen is None:
            raise ValueError(f"no alternative chosen for constant {name}")
        consts[name] = chosen
    funcs: dict = {}
    for fn, tbl in T._func.items():
        out = {}
        for key, alts in tbl.items():
            chosen = None
            for g, node, term in alts:
                if eval_ground(ground_formula(g)):
                    chosen = (node, _ground_index_term(term, pv))
                    break
            if chosen is None:
                raise ValueError(f"no alternative chosen for {fn}{key}")
            out[key] = chosen
        funcs[fn] = out
    rels: dict = {}
    for rel, tbl in T._rel.items():
        out = {}
        for key, f in tbl.items():
            g = ground_formula(f)
            if not isinstance(g, FOFalse):
                out[key] = g
        rels[rel] = out
    return SymbolicStructure(
        nodes=T.nodes,
        null_node="null",
        bounds=bounds,
        const_interp=consts,
        func_interp=funcs,
        rel_interp=rels,
    )


def _as_int(t: Term) -> int:
    if isinstance(t, IntLit):
        return t.value
    raise ValueError(f"expected a ground integer, got {t!r}")


def _ground_index_term(t: Term, pv) -> Term:
    if isinstance(t, Const):
        return IntLit(pv(t))
    if isinstance(t, IntLit):
        return t
    if isinstance(t, (Add, Sub)):
        mk = Add if isinstance(t, Add) else Sub
        return mk(_ground_index_term(t.left, pv), _ground_index_term(t.right, pv))
    if isinstance(t, Var):
        return t
    raise ValueError(f"unexpected index term {t!r}")


def find_model(
    o: Obligation,
    templates: list[Template],
    timeout: float = 60.0,
    solver_cmd=None,
    cancel: Optional[threading.Event] = None,
    depth: int = 5,
    max_refinements: int = 6,
) -> Optional[SymbolicStructure]:
    """Try templates in order; return the first certified structure.

    The search query instantiates index quantifiers only up to `depth`, so a
    satisfying parameter assignment is a candidate, not a proof; every
    candidate is validated and model checked exactly, and failures are
    excluded by blocking their discrete parameter choices and re-solving.
    Only certified structures are ever returned."""
    deadline = time.monotonic() + timeout
    for t_idx, T in enumerate(templates):
        if time.monotonic() >= deadline or (
            cancel is not None and cancel.is_set()
        ):
            return None
        query = compile_template(T, o, depth=depth)
        vocab = FOVocabulary({p.name: INT for p in T.params}, (), {})
        blocks: list[FOFormula] = []
        # later templates get their share of the budget even when earlier
        # ones keep producing refuted candidates
        slice_end = time.monotonic() + (deadline - time.monotonic()) / (
            len(templates) - t_idx
        )
        for _ in range(max_refinements + 1):
            remaining = min(slice_end, deadline) - time.monotonic()
            if remaining <= 0 or (cancel is not None and cancel.is_set()):
                break
            sentences = (query,) + tuple(blocks)
            tags = ("template-query",) + ("refinement-block",) * len(blocks)
            try:
                v = smt.check(
                    Obligation(vocab, sentences, tags),
                    timeout=remaining,
                    solver_cmd=solver_cmd,
                    get_model=True,
                    cancel=cancel,
                )
            except smt.SolverProcessError:
                # a query can exhaust the solver process (e.g. WASM memory);
                # that only disqualifies this template, not the search
                break
            if v.status != "sat":
                break
            values = smt.extract_int_consts(v.raw)
            S = instantiate(T, values)
            certified = decide_lia(
                fo_and([compile_sentence(S, s) for s in o.sentences]),
                solver_cmd,
            )
            if certified and validate_structure(S, o.vocab, solver_cmd):
                return S
            blocks.append(
                fo_not(
                    fo_and(
                        [
                            FOEq(p, IntLit(values.get(p.name, 0)))
                            for p in T.bounded_params
                        ]
                    )
                )
            )
    return None


# ---------------------------------------------------------------------------
# Serialization (JSON) and DOT rendering


def render_lia_term(t: Term) -> str:
    return smt.render_term(t)


def render_lia(f: FOFormula) -> str:
    return smt.render_formula(f)


def parse_lia_term(s) -> Term:
    if isinstance(s, str):
        import re as _re

        if _re.fullmatch(r"-?\d+", s):
            return IntLit(int(s))
        return Var(s, INT)
    if isinstance(s, list):
        if s[0] == "-" and len(s) == 2:
            inner = parse_lia_term(s[1])
            if isinstance(inner, IntLit):
                return IntLit(-inner.value)
            return Sub(IntLit(0), inner)
        if s[0] == "+":
            out = parse_lia_term(s[1])
            for a in s[2:]:
                out = Add(out, parse_lia_term(a))
            return out
        if s[0] == "-" and len(s) == 3:
            return Sub(parse_lia_term(s[1]), parse_lia_term(s[2]))
    raise ValueError(f"cannot parse LIA term {s!r}")


def parse_lia_text(text: str) -> FOFormula:
    sexps = smt.parse_sexps(text)
    if len(sexps) != 1:
        raise ValueError(f"expected one formula, got {text!r}")
    return _parse_lia(sexps[0])


def _parse_lia(s) -> FOFormula:
    if s == "true":
        return FOTrue()
    if s == "false":
        return FOFalse()
    if isinstance(s, list):
        op = s[0]
        if op == "and":
            return fo_and([_parse_lia(a) for a in s[1:]])
        if op == "or":
            return fo_or([_parse_lia(a) for a in s[1:]])
        if op == "not":
            return fo_not(_parse_lia(s[1]))
        if op == "=>":
            return FOImplies(_parse_lia(s[1]), _parse_lia(s[2]))
        if op == "=":
            return FOEq(parse_lia_term(s[1]), parse_lia_term(s[2]))
        if op == "<":
            return FOLt(parse_lia_term(s[1]), parse_lia_term(s[2]))
        if op == "<=":
            return leq(parse_lia_term(s[1]), parse_lia_term(s[2]))
        if op == ">":
            return FOLt(parse_lia_term(s[2]), parse_lia_term(s[1]))
        if op == ">=":
            return leq(parse_lia_term(s[2]), parse_lia_term(s[1]))
    raise ValueError(f"cannot parse LIA formula {s!r}")


def to_json(S: SymbolicStructure) -> str:
    doc = {
        "nodes": list(S.nodes),
        "null_node": S.null_node,
        "bounds": {n: render_lia(b) for n, b in S.bounds.items()},
        "constants": {
            name: {"node": node, "value": val}
            for name, (node, val) in sorted(S.const_interp.items())
        },
        "functions": {
            fn: [
                {"source": key[0], "target": tgt, "index": render_lia_term(term)}
                for key, (tgt, term) in sorted(tbl.items())
            ]
            for fn, tbl in sorted(S.func_interp.items())
        },
        "relations": {
            rel: [
                {"key": list(key), "formula": render_lia(f)}
                for key, f in sorted(tbl.items())
            ]
            for rel, tbl in sorted(S.rel_interp.items())
        },
    }
    return json.dumps(doc, indent=2)


def from_json(text: str) -> SymbolicStructure:
    doc = json.loads(text)
    return SymbolicStructure(
        nodes=tuple(doc["nodes"]),
        null_node=doc["null_node"],
        bounds={n: parse_lia_text(b) for n, b in doc["bounds"].items()},
        const_interp={
            name: (e["node"], e["value"]) for name, e in doc["constants"].items()
        },
        func_interp={
            fn: {
                (e["source"],): (e["target"], parse_lia_term_text(e["index"]))
                for e in entries
            }
            for fn, entries in doc["functions"].items()
        },
        rel_interp={
            rel: {tuple(e["key"]): parse_lia_text(e["formula"]) for e in entries}
            for rel, entries in doc["relations"].items()
        },
    )


def parse_lia_term_text(text: str) -> Term:
    sexps = smt.parse_sexps(text)
    if len(sexps) != 1:
        raise ValueError(f"expected one term, got {text!r}")
    return parse_lia_term(sexps[0])


def to_dot(S: SymbolicStructure, infinite: Optional[list[str]] = None) -> str:
    """DOT rendering: double circles mark nodes with infinitely many
    elements, edges show field functions labeled with their index terms."""
    if infinite is None:
        infinite = []
    lines = ["digraph symbolic_structure {"]
    for n in S.nodes:
        shape = "doublecircle" if n in infinite else "circle"
        consts = [c for c, (cn, _v) in sorted(S.const_interp.items()) if cn == n]
        label = n if not consts else f"{n}\\n{{{','.join(consts)}}}"
        lines.append(f'  "{n}" [shape={shape}, label="{label}"];')
    for fn, tbl in sorted(S.func_interp.items()):
        for (src,), (tgt, term) in sorted(tbl.items()):
            if tgt == INT_NODE:
                continue
            lines.append(
                f'  "{src}" -> "{tgt}" [label="{fn}: {render_lia_term(term)}"];'
            )
    lines.append("}")
    return "\n".join(lines)
