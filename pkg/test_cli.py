import json
import pathlib
import shlex

import numpy as np
import pytest

import main
from models.curvature import LR_SIGN_CONVENTION, lr_g, point_geometry
from models.field_expr import Family, FamilyParams, builtin, to_text
from utils.config import load_config
from utils.errors import NumericFailure
from utils.reporting import Command, dump_json

DOCS = pathlib.Path(__file__).parent / "docs" / "cli.md"


def documented_commands():
    lines = DOCS.read_text(encoding="utf-8").splitlines()
    return [shlex.split(line.strip())[2:] for line in lines
            if line.startswith("    python main.py")]


def run_json(capsys, argv):
    assert main.main(argv) == 0
    return json.loads(capsys.readouterr().out)


@pytest.fixture(autouse=True)
def quiet_env(monkeypatch):
    monkeypatch.delenv("CURVLAB_METRICS", raising=False)
    monkeypatch.setenv("CURVLAB_THREADS", "2")


def test_docs_list_every_command():
    names = {argv[0] for argv in documented_commands()}
    assert names == {c.value for c in Command}


@pytest.mark.parametrize("argv", documented_commands(), ids=lambda a: " ".join(a[:3]))
def test_documented_examples_run(argv, capsys):
    assert main.main(argv) == 0
    assert capsys.readouterr().out


def test_frame_report(capsys):
    report = run_json(capsys, ["frame", "--builtin", "paraboloid", "--n", "2", "--point", "0,0"])
    assert report["metadata"]["command"] == "frame"
    assert report["metadata"]["sigma"] == 1
    assert report["result"]["W"] == 1.0
    assert report["result"]["principal_curvatures"] == pytest.approx([2.0, 2.0])
    assert report["result"]["support"] is None


def test_bernstein_on_product_degenerate(capsys):
    report = run_json(capsys, ["bernstein", "--builtin", "product-degenerate", "--n", "3",
                               "--family-r", "1"])
    assert report["result"]["classification"] == "hypotheses-not-met"


def test_lr_on_flat_graph(capsys):
    report = run_json(capsys, ["lr", "--builtin", "affine", "--V", "1,0", "--n", "2", "--r", "0",
                               "--point", "3,3"])
    assert report["result"]["L_r_g"] == 0.0
    assert report["result"]["L_r_f"] == pytest.approx(0.0, abs=1e-12)


def test_json_output_is_reproducible(capsys):
    argv = ["newton", "--expr", "x1^2 + 3*x2^2 + x1*x2*x3", "--n", "3", "--point", "0.5,0.5,0.5"]
    assert main.main(argv) == 0
    first = capsys.readouterr().out
    assert main.main(argv) == 0
    assert capsys.readouterr().out == first


@pytest.mark.parametrize("argv", [
    ["frame", "--expr", "x3 + 1", "--n", "2", "--point", "0,0"],
    ["frame", "--n", "2", "--point", "0,0"],
    ["frame", "--builtin", "paraboloid", "--expr", "x1", "--n", "2", "--point", "0,0"],
    ["lr", "--builtin", "paraboloid", "--n", "2", "--r", "5", "--point", "0,0"],
    ["frame", "--builtin", "paraboloid", "--n", "2", "--point", "0,0,0"],
    ["frame", "--builtin", "paraboloid", "--n", "2"],
    ["foliation", "--n", "2", "--point", "1,0,0"],
    ["frame", "--builtin", "paraboloid", "--n", "2", "--point", "0,0", "--format", "xml"],
    ["frame", "--builtin", "paraboloid", "--n", "2", "--point", "0,0", "--bogus", "1"],
    ["audit", "--n", "3", "--r", "1", "--foliation", "geodesic-spheres"],
    ["nullity", "--builtin", "paraboloid", "--n", "3", "--r", "3", "--points", "0,0,0"],
    ["yau", "--builtin", "product-degenerate", "--n", "3", "--r", "1"],
    ["frame", "--builtin", "paraboloid", "--family-r", "1", "--n", "2", "--point", "0,0"],
])
def test_configuration_errors_exit_with_2(argv, capsys):
    assert main.main(argv) == 2
    assert "Error" in capsys.readouterr().err


def test_numeric_failures_exit_with_3(monkeypatch, capsys):
    def broken(config):
        raise NumericFailure("eigensolver did not converge")

    monkeypatch.setitem(main.HANDLERS, Command.FRAME, broken)
    assert main.main(["frame", "--builtin", "paraboloid", "--n", "2", "--point", "0,0"]) == 3
    assert "Numeric failure" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path, capsys):
    config = tmp_path / "run.env"
    config.write_text("builtin=paraboloid\nn=2\npoint=0,0\n", encoding="utf-8")
    report = run_json(capsys, ["frame", "--config", str(config)])
    assert report["result"]["W"] == 1.0

    report = run_json(capsys, ["frame", "--config", str(config), "--point", "1,0"])
    assert report["result"]["W"] == pytest.approx(5 ** 0.5)

    assert main.main(["frame", "--config", str(tmp_path / "missing.env")]) == 2


def test_csv_output(capsys):
    argv = ["nullity", "--builtin", "product-degenerate", "--family-r", "1", "--n", "3", "--r", "1",
            "--points", "0,1,1;0,2,-1;1,1,1", "--format", "csv"]
    assert main.main(argv) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("point,rank,nu")
    assert len(lines) == 4


def test_output_file_and_metrics_ledger(tmp_path, capsys):
    out, ledger = tmp_path / "report.json", tmp_path / "metrics.csv"
    argv = ["frame", "--builtin", "paraboloid", "--n", "2", "--point", "0,0",
            "--output", str(out), "--metrics", str(ledger)]
    assert main.main(argv) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text(encoding="utf-8"))["result"]["W"] == 1.0

    assert main.main(argv) == 0
    rows = ledger.read_text(encoding="utf-8").strip().splitlines()
    assert len(rows) == 2
    assert rows[0].split(",")[1:4] == ["FRAME", "paraboloid", "n"]


def test_text_format(capsys):
    argv = ["frame", "--builtin", "paraboloid", "--n", "2", "--point", "0,0", "--format", "text"]
    assert main.main(argv) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith("--- 📐 CURVLAB FRAME ---")
    assert "result.W: 1.0" in captured.out
    assert "[frame]" in captured.err


def test_foliation_sweep_report(capsys):
    report = run_json(capsys, ["foliation", "--foliation", "graph-translates", "--builtin",
                               "paraboloid", "--n", "1", "--r", "0", "--point", "1,1",
                               "--hs", "4e-3,2e-3,1e-3"])
    result = report["result"]
    assert result["family"] == "graph-translates"
    assert len(result["sweep"]) == 3
    assert result["sweep"][0]["order-estimate"] is None
    assert result["ambient_identity"]["residual"] <= 1e-4


def test_split_index_is_separate_from_newton_index(capsys):
    report = run_json(capsys, ["lr", "--builtin", "product-degenerate", "--family-r", "1",
                               "--n", "3", "--r", "0", "--point", "1,1,1"])
    expr = builtin(Family.PRODUCT_DEGENERATE, FamilyParams(3, r=1))
    frame, stack, support = point_geometry(expr, (1.0, 1.0, 1.0))
    assert report["result"]["r"] == 0
    assert report["result"]["L_r_g"] == lr_g(frame, stack, support, 0)

    config, _ = load_config(["yau", "--builtin", "product-degenerate", "--family-r", "1",
                             "--n", "3", "--r", "2"])
    assert config.r == 2
    assert to_text(config.expr) == to_text(expr)


def test_split_index_inferred_from_alpha():
    config, _ = load_config(["frame", "--builtin", "product-degenerate", "--alpha", "2,-1",
                             "--n", "3", "--point", "1,1,1"])
    expected = builtin(Family.PRODUCT_DEGENERATE, FamilyParams(3, r=1, alpha=(2.0, -1.0)))
    assert to_text(config.expr) == to_text(expected)


def test_split_index_from_config_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("builtin=product-degenerate\nfamily_r=2\nn=3\n", encoding="utf-8")
    config, _ = load_config(["bernstein", "--config", str(path)])
    expected = builtin(Family.PRODUCT_DEGENERATE, FamilyParams(3, r=2))
    assert config.r is None
    assert to_text(config.expr) == to_text(expected)


def test_metadata_records_lr_sign_convention(capsys):
    report = run_json(capsys, ["lr", "--builtin", "paraboloid", "--n", "2", "--r", "0",
                               "--point", "0,0"])
    assert report["metadata"]["lr_sign_convention"] == LR_SIGN_CONVENTION
    assert report["result"]["L_r_g"] == pytest.approx(4.0)


def test_overflowing_field_exits_with_3(capsys):
    argv = ["frame", "--expr", "exp(x1^2)", "--n", "1", "--point", "30"]
    assert main.main(argv) == 3
    assert "Numeric failure" in capsys.readouterr().err


def test_json_writer_keeps_seventeen_digits():
    text = dump_json({"x": 0.1, "bad": float("nan"), "a": np.arange(2.0),
                      "k": np.int64(3), "c": Command.FRAME, "ok": np.bool_(True)})
    assert '"x": 0.10000000000000001' in text
    assert '"bad": null' in text
    assert text.endswith("}\n")
    data = json.loads(text)
    assert data == {"x": 0.1, "bad": None, "a": [0.0, 1.0], "k": 3, "c": "frame", "ok": True}
