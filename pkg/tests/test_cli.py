import csv
import json

import pytest

from nlevel_core.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, build_parser, main, run
from nlevel_core.runconfig import load_config

TWO_LEVEL = """\
task: predict
model:
  family: two_level_avoided
  params:
    delta: {delta}
epsilon: [0.2]
index: 1
"""

CONSTANT = """\
task: smatrix
model:
  family: constant
  params:
    matrix: [[1.0, 0.0], [0.0, 2.0]]
epsilon: [0.1]
index: 1
"""


def _write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _rows(path):
    with path.open(encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _report(out):
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


def test_parser_knows_every_task():
    args = build_parser().parse_args(["loops", "--config", "x.yaml", "--epsilon", "0.1, 0.05"])
    assert args.task == "loops" and args.epsilon == [0.1, 0.05]


def test_missing_config_is_config_error(tmp_path):
    assert main(["predict", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_model_domain_is_config_error(tmp_path):
    cfg = _write(tmp_path, TWO_LEVEL.format(delta=1.5))
    assert main(["predict", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_predict(tmp_path):
    out = tmp_path / "out"
    assert main(["predict", "--config", _write(tmp_path, TWO_LEVEL.format(delta=0.5)), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "predict.csv")
    assert len(rows) == 1 and rows[0]["label"] == "1"
    report = _report(out)
    assert report["status"] == "ok"
    assert report["provenance"]["config"]["index"] == 1
    assert report["result"]["prediction"]["element"] == [2, 1]


def test_validate_and_degeneracies(tmp_path):
    cfg = _write(tmp_path, TWO_LEVEL.format(delta=0.5))
    out = tmp_path / "v"
    assert main(["validate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "crossings.csv")
    assert len(rows) == 1 and abs(float(rows[0]["t"])) < 1e-6
    out = tmp_path / "d"
    assert main(["degeneracies", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "degeneracies.csv")
    assert len(rows) == 2
    assert {r["j"] + r["k"] for r in rows} == {"12"}


def test_constant_smatrix(tmp_path):
    out = tmp_path / "s"
    assert main(["smatrix", "--config", _write(tmp_path, CONSTANT), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "smatrix.csv")
    assert len(rows) == 4
    diag = [float(r["abs"]) for r in rows if r["row"] == r["col"]]
    assert diag == pytest.approx([1.0, 1.0], abs=1e-12)


def test_numerical_failure_still_reports(tmp_path):
    out = tmp_path / "f"
    assert main(["predict", "--config", _write(tmp_path, CONSTANT), "--out", str(out)]) == EXIT_NUMERICAL
    report = _report(out)
    assert report["status"] == "numerical_failure"
    assert report["result"]["error"] == "NoCrossingChain"


def test_epsilon_override(tmp_path):
    out = tmp_path / "o"
    assert main(["smatrix", "--config", _write(tmp_path, CONSTANT), "--out", str(out), "--epsilon", "0.3,0.2"]) == 0
    assert {r["epsilon"] for r in _rows(out / "smatrix.csv")} == {"0.29999999999999999", "0.20000000000000001"}


def test_run_reports_missing_model_parameter(tmp_path):
    text = TWO_LEVEL.format(delta=0.5).replace("    delta: 0.5\n", "    width: 0.5\n")
    cfg = load_config(_write(tmp_path, text)).with_overrides(None, None, str(tmp_path / "out"))
    assert run(cfg) == EXIT_CONFIG
