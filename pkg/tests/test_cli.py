import csv
import shutil
import subprocess
import sys

import pytest

from critlab.cli import main
from critlab.config import ExperimentConfig, get_list, parse_config
from critlab.errors import InvalidConfiguration

BLOWUP = """
[manifold]
kind = sphere
n = 6
N = 4096
[fields]
h = const(6.5)
f = cos_poly(0.5, 0.5)
[task]
name = solve
[sweep]
key = task.q
values = 2.8, 2.9, 2.95, 2.99
"""


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _report(out):
    return (out / "report.txt").read_text()


def test_constants(tmp_path):
    assert main(["constants", "--dim", "6", "--out", str(tmp_path)]) == 0
    row = _rows(tmp_path / "constants.csv")[0]
    assert float(row["K2"]) == pytest.approx(0.0519227, abs=1e-6)
    assert float(row["threshold"]) == pytest.approx(19.2594, abs=1e-4)
    report = _report(tmp_path)
    assert "K2: 0.0519225447202" in report and "elapsed_seconds" in report


def test_classify_report_line(tmp_path):
    code = main(["classify", "--set", "fields.h=const(4)", "--set", "fields.f=const(1)", "--out", str(tmp_path)])
    assert code == 0
    line = next(l for l in _report(tmp_path).splitlines() if l.startswith("classification:"))
    label, margin = line.split(":", 1)[1].split(", margin = ")
    assert label.strip() == "subcritical"
    assert float(margin) == pytest.approx(6.42, abs=0.01)


def test_aubin_csv(tmp_path):
    assert main(["aubin", "--set", "fields.h=const(7.2)", "--set", "manifold.N=16384", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "aubin.csv")
    assert list(rows[0]) == ["k", "J_value", "y_k"]
    assert [int(r["k"]) for r in rows] == [64, 128, 256, 512, 1024, 2048, 4096]


def test_green_mass_and_shift(tmp_path):
    assert main(["green-mass", "--h", "0", "--find-critical-shift", "--out", str(tmp_path)]) == 0
    assert "critical_shift: 0.75" in _report(tmp_path)
    assert _rows(tmp_path / "green.csv")[0].keys() == {"r", "w", "G"}


def test_conformal_check(tmp_path):
    assert main(["conformal-check", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "conformal.csv")
    assert [int(r["N"]) for r in rows] == [512, 1024, 2048, 4096]


def test_concentrate_synthetic(tmp_path):
    args = ["concentrate", "--set", "task.mode=synthetic", "--set", "task.mu_list=0.1, 0.01, 0.001", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = _rows(tmp_path / "trace.csv")
    assert len(rows) == 3 and "speed_ratio" in rows[0]


def test_find_critical(tmp_path):
    args = ["find-critical", "--set", "fields.h=const(6.4)", "--set", "task.t_max=1.4", "--set", "task.tol_t=0.05",
            "--set", "task.tol_class=0.05", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = _rows(tmp_path / "bisection.csv")
    assert rows[0]["classification"] == "weakly_critical" and rows[1]["classification"] == "subcritical"


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[manifold]\nn = 6\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("[manifold\nn = 6\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["solve", "--set", "fields.h=const(-3)", "--out", str(tmp_path / "o")]) == 3
    assert main(["solve", "--set", "task.q=2", "--out", str(tmp_path / "o")]) == 3
    assert main(["solve", "--set", "fields.h=wiggle(2)", "--out", str(tmp_path / "o")]) == 2


def test_error_report_written(tmp_path):
    assert main(["solve", "--set", "fields.h=const(-3)", "--out", str(tmp_path)]) == 3
    assert "error: PreconditionFailure" in _report(tmp_path)


def test_sweep_blowup_and_determinism(tmp_path):
    cfg = tmp_path / "blowup.ini"
    cfg.write_text(BLOWUP)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", str(cfg), "--jobs", "2", "--out", str(a)]) == 0
    assert main(["sweep", "--config", str(cfg), "--jobs", "1", "--out", str(b)]) == 0
    rows = _rows(a / "summary.csv")
    assert len(rows) == 4
    sup = [float(r["sup_u"]) for r in rows]
    assert all(y > x for x, y in zip(sup, sup[1:]))
    for name in ["summary.csv"] + [f"item_{i:03d}/solution.csv" for i in range(4)]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_edge_cases(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(BLOWUP.replace("values = 2.8, 2.9, 2.95, 2.99", "values ="))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 2
    cfg.write_text(BLOWUP.replace("values = 2.8, 2.9, 2.95, 2.99", "values = 2.9"))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "one")]) == 0
    single = cfg.read_text().split("[sweep]")[0].replace("[task]\nname = solve", "[task]\nname = solve\nq = 2.9")
    cfg.write_text(single)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert (tmp_path / "one" / "item_000" / "solution.csv").read_bytes() == (tmp_path / "run" / "solution.csv").read_bytes()


def test_sweep_partial_failure(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(BLOWUP.replace("values = 2.8, 2.9, 2.95, 2.99", "values = 2.8, 1.5"))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 0
    rows = _rows(tmp_path / "p" / "summary.csv")
    assert [r["item_status"] for r in rows] == ["ok", "failed"]
    cfg.write_text(BLOWUP.replace("values = 2.8, 2.9, 2.95, 2.99", "values = 1.5, 1.8"))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 3


def test_config_parsing():
    cfg = parse_config("[task]\nname = aubin\nk_list = 64, 128 256  # comment\n")
    assert cfg.task_name == "aubin"
    assert get_list(cfg.task, "k_list", cast=int) == [64, 128, 256]
    with pytest.raises(InvalidConfiguration):
        parse_config("[bogus]\nx = 1\n")
    with pytest.raises(InvalidConfiguration):
        ExperimentConfig(task={"name": "dance"}).validate()
    with pytest.raises(InvalidConfiguration):
        ExperimentConfig(task={"name": "solve"}, fields={"h": "file(/nonexistent)"}).validate()
    echoed = parse_config(BLOWUP).echo()
    assert parse_config(echoed).echo() == echoed


def test_console_script(tmp_path):
    exe = shutil.which("critlab")
    cmd = [exe] if exe else [sys.executable, "-m", "critlab.cli"]
    proc = subprocess.run(cmd + ["constants", "--dim", "4", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "threshold:" in proc.stdout
