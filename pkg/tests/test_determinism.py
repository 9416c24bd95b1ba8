from pathlib import Path

import pytest

from nlevel_core.cli import main


def run_once(task, config, out):
    assert main([task, "--config", config, "--out", str(out), "--epsilon", "0.2"]) == 0
    return tuple(p.read_bytes() for p in sorted(Path(out).iterdir()))


@pytest.mark.parametrize("task", ["smatrix", "predict"])
def test_three_runs_identical(task, tmp_path):
    r1, r2, r3 = (run_once(task, "data/configs/two_level.yaml", tmp_path / "out") for _ in range(3))
    assert r1 == r2 == r3, f"Non-deterministic output for task: {task}"


def test_thread_count_does_not_change_results(tmp_path):
    cfg = "data/configs/two_level.yaml"
    assert main(["smatrix", "--config", cfg, "--out", str(tmp_path / "a"), "--epsilon", "0.2,0.1", "--threads", "1"]) == 0
    assert main(["smatrix", "--config", cfg, "--out", str(tmp_path / "b"), "--epsilon", "0.2,0.1", "--threads", "2"]) == 0
    assert (tmp_path / "a" / "smatrix.csv").read_bytes() == (tmp_path / "b" / "smatrix.csv").read_bytes()


def test_compare_csv_is_byte_identical(tmp_path):
    cfg = "data/configs/two_level.yaml"
    for name in ("a", "b"):
        assert main(["compare", "--config", cfg, "--out", str(tmp_path / name), "--epsilon", "0.2,0.1",
                     "--threads", "2"]) == 0
    assert (tmp_path / "a" / "compare.csv").read_bytes() == (tmp_path / "b" / "compare.csv").read_bytes()
