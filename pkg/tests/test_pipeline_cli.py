"""Pipeline orchestration and the command-line interface."""

import json

import pytest

from slcheck import cli, pipeline, smt
from slcheck.frontend import parse_problem
from tests.conftest import CORPUS, LSEG_HDR


# -- configuration -------------------------------------------------------------------


def test_runconfig_validation():
    with pytest.raises(ValueError):
        pipeline.RunConfig(timeout=0)
    with pytest.raises(ValueError):
        pipeline.RunConfig(timeout=10, solver_timeout=-1)
    with pytest.raises(ValueError):
        pipeline.RunConfig(timeout=10, budget=-1)


def test_template_spec_parsing():
    prep = pipeline.prepare(
        parse_problem(LSEG_HDR + "checkentail emp |- emp;", "t")
    )
    T = pipeline.parse_template_spec("3:100", prep.fo_vocab)
    assert T.k == 3 and T.shapes == (1, 0, 0)
    for bad in ("3:10", "0:", "x:1", "2:12"):
        with pytest.raises(ValueError):
            pipeline.parse_template_spec(bad, prep.fo_vocab)


# -- preparation ---------------------------------------------------------------------


def test_prepare_splits_disjunctive_antecedent():
    src = LSEG_HDR + "checkentail (a = b \\/ a != b) * emp |- a = a;"
    prep = pipeline.prepare(parse_problem(src, "t"))
    assert len(prep.obligations) == 2
    assert len(prep.disjunct_texts) == 2


def test_prepare_rejects_non_edh(monkeypatch):
    # a consequent outside the supported quantifier shape is diagnosed
    # before any solver interaction
    def boom(*args, **kwargs):
        raise AssertionError("solver must not be invoked")

    monkeypatch.setattr(smt, "run_script", boom)
    src = LSEG_HDR + "checkentail emp |- forall x. exists y. x = y;"
    with pytest.raises(pipeline.FragmentError) as ei:
        pipeline.prepare(parse_problem(src, "t"))
    assert "EDH" in str(ei.value)


def test_prepare_rejects_bad_sid():
    src = (
        "data node { node next; };\n"
        "pred p(x) := exists u. (p(u) \\/ x = u);\n"
        "checkentail p(a) |- emp;"
    )
    with pytest.raises(pipeline.FragmentError):
        pipeline.prepare(parse_problem(src, "t"))


# -- CLI ------------------------------------------------------------------------------


def test_cli_check_valid_exit_zero(capsys):
    rc = cli.main(["--timeout", "30", "check", str(CORPUS / "eq2.sl")])
    assert rc == cli.EXIT_VALID
    assert "valid" in capsys.readouterr().out


def test_cli_check_json_output(capsys):
    rc = cli.main(["--timeout", "30", "--json", "check", str(CORPUS / "eq3.sl")])
    assert rc == cli.EXIT_VALID
    doc = json.loads(capsys.readouterr().out)
    assert doc["verdict"] == "valid"


def test_cli_missing_file(capsys):
    rc = cli.main(["check", "no-such-file.sl"])
    assert rc == cli.EXIT_USAGE
    assert "no-such-file.sl" in capsys.readouterr().err


def test_cli_syntax_error(tmp_path, capsys):
    f = tmp_path / "broken.sl"
    f.write_text("data node {")
    rc = cli.main(["check", str(f)])
    assert rc == cli.EXIT_USAGE
    assert "syntax error" in capsys.readouterr().err


def test_cli_fragment_diagnostic(tmp_path, capsys):
    f = tmp_path / "bad.sl"
    f.write_text(
        "data node { node next; };\n"
        "checkentail emp |- forall x. exists y. x = y;\n"
    )
    rc = cli.main(["check", str(f)])
    assert rc == cli.EXIT_USAGE
    assert "diagnostic" in capsys.readouterr().err


def test_cli_fold_unfold_out_of_fragment(tmp_path, capsys):
    f = tmp_path / "ints.sl"
    f.write_text(
        "data node { node next; int key; };\n"
        "checkentail a -> node{nil, 3} |- a != nil;\n"
    )
    rc = cli.main(["fold-unfold", str(f)])
    assert rc == cli.EXIT_USAGE
    assert "fragment" in capsys.readouterr().err


def test_cli_emit_smt(tmp_path, capsys):
    out = tmp_path / "queries"
    rc = cli.main(
        ["--timeout", "30", "--emit-smt", str(out),
         "prove-wsl", str(CORPUS / "eq2.sl")]
    )
    assert rc == cli.EXIT_VALID
    assert list(out.glob("*.smt2"))
    capsys.readouterr()


def test_cli_validate_model_bad_json(tmp_path, capsys):
    f = tmp_path / "m.json"
    f.write_text("{ not json")
    rc = cli.main(["validate-model", str(f), str(CORPUS / "eq4.sl")])
    assert rc == cli.EXIT_USAGE
    capsys.readouterr()


def test_cli_validate_model_certifies(capsys):
    rc = cli.main(
        ["--timeout", "60", "validate-model",
         str(CORPUS / "fig1b.json"), str(CORPUS / "eq4.sl")]
    )
    assert rc == cli.EXIT_VALID
    assert "certified" in capsys.readouterr().out


# -- bench ----------------------------------------------------------------------------


def test_bench_empty_dir(tmp_path, capsys):
    rc = cli.main(["bench", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "# Examples" in out


def test_bench_manifest_mismatch(tmp_path, capsys):
    (tmp_path / "triv.sl").write_text(
        "data node { node next; };\ncheckentail emp |- emp;\n"
    )
    (tmp_path / "manifest.json").write_text(
        json.dumps({"triv.sl": {"expected": "refuted", "group": "g"}})
    )
    rc = cli.main(["--timeout", "20", "bench", str(tmp_path)])
    assert rc == 1
    assert "MISMATCH" in capsys.readouterr().out


def test_bench_result_table_shape():
    rows = [pipeline.BenchRow("g1", 2, 1, 1, 0)]
    res = pipeline.BenchResult(rows=rows, mismatches=[], errors=[])
    assert res.clean
    text = res.to_text()
    for col in ("# Examples", "# Valid", "# Counter-model", "# Timeout"):
        assert col in text
    csv = res.to_csv()
    assert csv.splitlines()[0] == "group,examples,valid,countermodel,timeout"
    assert "g1,2,1,1,0" in csv
