"""Command-line interface.

Exit codes: 0 for valid (or a clean run), 10 for refuted, 20 for
inconclusive, 2 for usage errors and diagnostics (parse, sort, or fragment
failures).  `bench` exits 1 when results contradict the manifest.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from . import foldunfold, pipeline, report, symbolic
from .frontend import SourceError, parse_problem, print_formula
from .normalize import SplitBlowup, skolemize
from .encode import inline_points_to_existentials
from .pipeline import FragmentError, Refuted, RunConfig, Unknown, Valid
from .smt import SolverProcessError, SolverOutputError

EXIT_VALID = 0
EXIT_REFUTED = 10
EXIT_UNKNOWN = 20
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="slcheck",
        description="entailment checking for separation logic with "
        "inductive definitions under weak-semantics models",
    )
    ap.add_argument("--timeout", type=float, default=30.0,
                    help="global budget in seconds (default 30)")
    ap.add_argument("--solver-path", default=None,
                    help="solver executable or .js wrapper (default: bundled)")
    ap.add_argument("--template", action="append", default=None,
                    metavar="K:BITS",
                    help="symbolic template spec, e.g. 3:100; repeatable")
    ap.add_argument("--json", action="store_true", help="machine-readable output")
    ap.add_argument("--emit-smt", default=None, metavar="DIR",
                    help="dump solver queries of the proving branch to DIR")
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in ("check", "prove-wsl", "refute"):
        p = sub.add_parser(mode)
        p.add_argument("file")
    p = sub.add_parser("fold-unfold")
    p.add_argument("file")
    p.add_argument("--budget", type=int, default=3,
                   help="axiom enumeration rounds (default 3)")
    p = sub.add_parser("validate-model")
    p.add_argument("model")
    p.add_argument("file")
    p = sub.add_parser("bench")
    p.add_argument("dir")
    return ap


def _config(args) -> RunConfig:
    solver_cmd = None
    if args.solver_path:
        from .smt import _command_for

        solver_cmd = _command_for(args.solver_path)
    return RunConfig(
        timeout=args.timeout,
        solver_cmd=solver_cmd,
        templates=args.template,
        budget=getattr(args, "budget", 3),
        emit_smt=args.emit_smt,
    )


def _load(path: str):
    text = Path(path).read_text()
    return parse_problem(text, path)


def _emit_outcome(out, as_json: bool) -> int:
    if isinstance(out, Valid):
        if as_json:
            print(json.dumps({"verdict": "valid", "evidence": list(out.evidence)}))
        else:
            print("valid")
            for e in out.evidence:
                print(f"  {e}")
        return EXIT_VALID
    if isinstance(out, Refuted):
        if as_json:
            print(report.render(out.certificate, "json"))
        else:
            print("refuted")
            print(report.render(out.certificate, "text"), end="")
        return EXIT_REFUTED
    assert isinstance(out, Unknown)
    if as_json:
        print(json.dumps({"verdict": "unknown", "diagnostics": out.diagnostics}))
    else:
        print("unknown")
        for k, v in out.diagnostics.items():
            print(f"  {k}: {v}")
    return EXIT_UNKNOWN


def _cmd_check(args) -> int:
    cfg = _config(args)
    prob = _load(args.file)
    runner = {
        "check": pipeline.run_check,
        "prove-wsl": pipeline.run_prove,
        "refute": pipeline.run_refute,
    }[args.mode]
    return _emit_outcome(runner(prob, cfg), args.json)


def _cmd_fold_unfold(args) -> int:
    cfg = _config(args)
    prob = _load(args.file)
    gammas = [inline_points_to_existentials(g) for g in prob.antecedents]
    psi = inline_points_to_existentials(prob.consequent)
    gammas, _, _ = skolemize(gammas)
    try:
        res = foldunfold.prove(
            gammas,
            psi,
            prob.sid,
            prob.vocabulary,
            budget=cfg.budget,
            per_check_timeout=cfg.per_call,
            solver_cmd=cfg.solver_cmd,
        )
    except foldunfold.NotTheoryFreeQF as e:
        print(f"{args.file}: not in the fold/unfold fragment: {e}",
              file=sys.stderr)
        return EXIT_USAGE
    if isinstance(res, foldunfold.ProofObject):
        if args.json:
            print(json.dumps(foldunfold.proof_to_dict(res), indent=2))
        else:
            print(f"proved with {len(res.axioms)} axiom(s) "
                  f"(round {res.round_index}, {res.round_size} enumerated)")
            for a in res.axioms:
                print(f"  [{a.kind}] {print_formula(a.sl, prob.record_name)}")
        return EXIT_VALID
    if args.json:
        print(json.dumps({
            "verdict": "exhausted",
            "rounds": res.rounds,
            "reason": res.reason,
            "last_round_axioms": len(res.last_round.axioms)
            if res.last_round else 0,
        }))
    else:
        print(f"exhausted after {res.rounds} round(s) ({res.reason})")
    return EXIT_UNKNOWN


def _cmd_validate_model(args) -> int:
    cfg = _config(args)
    prob = _load(args.file)
    try:
        S = symbolic.from_json(Path(args.model).read_text())
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        print(f"{args.model}: cannot parse symbolic structure: {e}",
              file=sys.stderr)
        return EXIT_USAGE
    prep = pipeline.prepare(prob)
    rep = symbolic.validate_structure(
        S, prep.fo_vocab, solver_cmd=cfg.solver_cmd, timeout=cfg.per_call
    )
    if not rep:
        print(f"structure is not well-formed: {rep.witness}", file=sys.stderr)
        return EXIT_USAGE
    failures = []
    for idx, ob in enumerate(prep.obligations):
        try:
            cert = report.certify(
                S, ob, solver_cmd=cfg.solver_cmd, timeout=cfg.per_call,
                disjuncts=prep.disjunct_texts[idx],
            )
        except report.CertificationFailure as e:
            failures.append(f"split {idx}: {e}")
            continue
        if args.json:
            print(report.render(cert, "json"))
        else:
            print(f"certified against split {idx}")
            print(report.render(cert, "text"), end="")
        return EXIT_VALID
    print("structure is well-formed but certifies no split:", file=sys.stderr)
    for f in failures:
        print(f"  {f}", file=sys.stderr)
    return EXIT_UNKNOWN


def _cmd_bench(args) -> int:
    cfg = _config(args)
    res = pipeline.run_bench(args.dir, cfg)
    print(res.to_text())
    print(res.to_csv(), end="")
    return EXIT_VALID if res.clean else 1


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        if args.mode in ("check", "prove-wsl", "refute"):
            return _cmd_check(args)
        if args.mode == "fold-unfold":
            return _cmd_fold_unfold(args)
        if args.mode == "validate-model":
            return _cmd_validate_model(args)
        return _cmd_bench(args)
    except FileNotFoundError as e:
        print(f"cannot read {e.filename}", file=sys.stderr)
        return EXIT_USAGE
    except SourceError as e:
        print(e.render(getattr(args, "file", "<input>")), file=sys.stderr)
        return EXIT_USAGE
    except (FragmentError, SplitBlowup, ValueError) as e:
        print(f"diagnostic: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverProcessError, SolverOutputError) as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_UNKNOWN


if __name__ == "__main__":
    sys.exit(main())
