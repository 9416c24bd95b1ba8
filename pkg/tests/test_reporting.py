import csv
import json

import numpy as np

from nlevel_core.reporting import fmt, write_csv, write_report


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(np.float64(2.5)) == "2.5"
    assert fmt(True) == "true"
    assert fmt(None) == ""
    assert fmt(np.int64(3)) == "3"


def test_csv_roundtrip(tmp_path):
    path = write_csv(tmp_path / "out" / "t.csv", ["a", "b"], [{"a": 1, "b": 0.5}, {"a": 2}])
    with path.open(encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert rows == [{"a": "1", "b": "0.5"}, {"a": "2", "b": ""}]
    assert not list(path.parent.glob("*.tmp"))


def test_report_has_provenance_without_timestamps(tmp_path):
    write_report(tmp_path, "predict", {"index": 1}, {"value": 1 + 2j, "arr": np.array([1.0, 2.0])})
    data = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert data["status"] == "ok"
    assert data["provenance"]["schema_version"] == 1
    assert data["result"]["value"] == [1.0, 2.0]
    assert data["result"]["arr"] == [1.0, 2.0]
    assert "time" not in json.dumps(data)
