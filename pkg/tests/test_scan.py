import csv
import io
import json
import math
from pathlib import Path

import pytest

from berryqpt.cli import main
from berryqpt.config import parse_config
from berryqpt.scan import (
    COLUMNS,
    csv_text,
    dat_text,
    emit_csv,
    emit_json,
    read_json,
    rerun_manifest,
    run_scan,
)

DATA = Path(__file__).parent / "data"

XY_GRID = """\
subcommand = xy-scan
[xy]
modes = 60
[grid.lambda]
start = -2
stop = 2
count = 9
[grid.gamma]
start = 0.01
stop = 1
count = 4
spacing = log
"""

DETECT = """\
subcommand = detect-qpt
[family]
name = spin-half
[loop]
center = 0, 0, 0
axes = 0, 2
[schedule.radius]
start = 1
stop = 1e-4
count = 8
spacing = log
"""


def naive_total_phase(lam, gamma, M):
    N = 2 * M + 1
    total = 0.0
    for k in range(1, M + 1):
        x = 2 * math.pi * k / N
        eps = math.cos(x) - lam
        total += math.pi * (1 - eps / math.sqrt(eps**2 + (gamma * math.sin(x)) ** 2))
    return total


def test_xy_scan_matches_golden_file(tmp_path):
    cfg = parse_config((DATA / "xy_scan_small.ini").read_text())
    res = run_scan(cfg, tmp_path)
    assert res.exit_code == 0
    produced = (tmp_path / "xy-scan.csv").read_text()
    assert produced == (DATA / "xy_scan_small.csv").read_text()
    rows = list(csv.DictReader(io.StringIO(produced)))
    assert list(rows[0]) == COLUMNS["xy-scan"]
    assert len(rows) == 15
    for row in rows:
        lam, gamma, M = float(row["lambda"]), float(row["gamma"]), int(row["modes"])
        assert float(row["phase_total"]) == pytest.approx(naive_total_phase(lam, gamma, M), abs=1e-9)
        assert float(row["phase_intensive"]) == pytest.approx(float(row["phase_total"]) / M, rel=1e-15)
        assert float(row["gap"]) > 0
        assert row["region"] in {"XX-critical", "XY-critical", "Ising-line", "non-critical"}
        assert row["error"] == ""


def test_xy_scan_regions(tmp_path):
    res = run_scan(parse_config(XY_GRID), tmp_path)
    regions = {(r["lambda"], r["gamma"]): r["region"] for r in res.records}
    assert regions[(1.0, 0.01)] == "XY-critical"
    assert regions[(0.5, 1.0)] == "Ising-line"
    assert regions[(0.5, 0.01)] == "non-critical"


def test_detect_qpt_spin_half(tmp_path):
    res = run_scan(parse_config(DETECT), tmp_path)
    assert res.exit_code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["classification"] == "non-contractible"
    assert abs(summary["fitted_limit"]) == pytest.approx(math.pi, abs=1e-8)


def test_detect_qpt_regular_point_reports_slope(tmp_path):
    text = DETECT.replace("center = 0, 0, 0", "center = 0.3, 0.4, 0.5").replace("start = 1\n", "start = 0.1\n")
    res = run_scan(parse_config(text), tmp_path)
    assert res.summary["classification"] == "contractible"
    assert res.summary["area_slope"] == pytest.approx(2.0, abs=0.1)


def test_detect_qpt_xy_finite_size(tmp_path):
    text = ("subcommand = detect-qpt\n[family]\nname = xy\n[xy]\nlambda = 0.3\nmodes = 101\n"
            "[schedule.gamma]\nstart = 1\nstop = 1e-9\ncount = 28\nspacing = log\n")
    res = run_scan(parse_config(text), tmp_path)
    assert res.summary["classification"] == "contractible"


def test_determinism_across_workers_and_reruns(tmp_path):
    cfg = parse_config(XY_GRID)
    one = run_scan(cfg, tmp_path / "w1", workers=1)
    eight = run_scan(cfg, tmp_path / "w8", workers=8)
    again = rerun_manifest(tmp_path / "w8" / "manifest.json", tmp_path / "rerun", workers=1)
    for name in ("xy-scan.csv", "xy-scan.json"):
        ref = (tmp_path / "w1" / name).read_bytes()
        assert (tmp_path / "w8" / name).read_bytes() == ref
        assert (tmp_path / "rerun" / name).read_bytes() == ref
    assert one.manifest["files"] == eight.manifest["files"] == again.manifest["files"]
    assert one.manifest["record_checksums"] == again.manifest["record_checksums"]


def test_manifest_contents(tmp_path):
    res = run_scan(parse_config(XY_GRID), tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["subcommand"] == "xy-scan"
    assert manifest["records"] == len(res.records) == 36
    assert len(manifest["record_checksums"]) == 36
    assert manifest["failed_records"] == 0
    assert "wall_clock_seconds" in manifest and "dithers" in manifest
    # Manifest is written last: its mtime is not older than any data file.
    mtime = (tmp_path / "manifest.json").stat().st_mtime_ns
    assert all((tmp_path / n).stat().st_mtime_ns <= mtime for n in manifest["files"])


def test_scaling_run(tmp_path):
    text = ("subcommand = scaling\n[xy]\nlambda = 0.3\n"
            "[schedule.gamma]\nvalues = 0.05, 1e-4, 1e-8\n[schedule.modes]\nvalues = 101, 5000, 20001\n")
    res = run_scan(parse_config(text), tmp_path)
    assert res.exit_code == 0 and len(res.records) == 9
    assert abs(res.summary["size_first_limit"] - math.pi) < 0.05
    g = res.summary["gamma_first_limit"]
    assert min(g, 2 * math.pi - g) < 1e-6


def test_empty_records_give_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path, COLUMNS["wilson"])
    assert path.read_text() == ",".join(COLUMNS["wilson"]) + "\n"
    with pytest.raises(ValueError):
        emit_csv([], path)


def test_json_round_trip(tmp_path):
    records = [{"a": 0.1, "b": "x", "c": None, "d": [1.0, 2.5]}, {"a": 1e-300, "b": "", "c": 3, "d": []}]
    emit_json(records, tmp_path / "r.json")
    assert read_json(tmp_path / "r.json") == records


def test_seventeen_digit_reals():
    text = csv_text([{"v": 0.1}, {"v": 1 / 3}], ["v"])
    vals = [float(x) for x in text.splitlines()[1:]]
    assert vals == [0.1, 1 / 3]
    assert text.splitlines()[1] == "0.10000000000000001"


def test_dat_output(tmp_path):
    cfg = parse_config(XY_GRID + "", {"dat": True})
    run_scan(cfg, tmp_path)
    lines = (tmp_path / "xy-scan.dat").read_text().splitlines()
    assert lines[0].startswith("# lambda gamma")
    assert all(len(l.split()) == len(COLUMNS["xy-scan"]) for l in lines[1:])
    assert dat_text([{"a": None}], ["a"]).splitlines()[1] == "NaN"


def test_partial_failure_exit_code(tmp_path):
    # The radius-1 circle about (1, 0) runs through the degeneracy at the origin.
    text = ("subcommand = wilson\n[family]\nname = two-level-real\n[loop]\ncenter = 1, 0\n"
            "[schedule.radius]\nvalues = 0.5, 1, 2\n")
    res = run_scan(parse_config(text), tmp_path)
    assert res.exit_code == 1
    errors = [r["error"] for r in res.records]
    assert errors[0] == "" and errors[2] == ""
    assert errors[1].startswith("DegeneracyError")
    assert res.records[0]["principal"] == pytest.approx(0, abs=1e-9)
    assert res.records[2]["principal"] == pytest.approx(math.pi, abs=1e-9)
    assert res.manifest["failed_records"] == 1


# --- CLI ---------------------------------------------------------------------

def test_cli_xy_phase(tmp_path, capsys):
    code = main(["xy-phase", "--lambda", "0", "--gamma", "1", "--modes", "1", "--out", str(tmp_path)])
    assert code == 0
    row = next(csv.DictReader(open(tmp_path / "xy-phase.csv")))
    assert float(row["phase_total"]) == pytest.approx(1.5 * math.pi, abs=1e-12)
    assert (tmp_path / "modes.csv").exists() and (tmp_path / "manifest.json").exists()


def test_cli_config_errors(tmp_path, capsys):
    assert main(["xy-phase", "--lambda", "0", "--gamma", "-1", "--modes", "1", "--out", str(tmp_path)]) == 2
    assert "xy.gamma" in capsys.readouterr().err
    assert main(["xy-phase", "--config", str(tmp_path / "missing.ini")]) == 2
    cfg = tmp_path / "scan.ini"
    cfg.write_text(XY_GRID)
    assert main(["xy-phase", "--config", str(cfg)]) == 2


def test_cli_partial_failure(tmp_path):
    cfg = tmp_path / "w.ini"
    cfg.write_text("subcommand = wilson\n[family]\nname = two-level-real\n[loop]\ncenter = 1, 0\n"
                   "[schedule.radius]\nvalues = 0.5, 1\n")
    assert main(["wilson", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_cli_rerun_from_manifest(tmp_path):
    cfg = tmp_path / "d.ini"
    cfg.write_text(DETECT)
    assert main(["detect-qpt", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["detect-qpt", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b"),
                 "--workers", "8"]) == 0
    for name in ("detect-qpt.csv", "detect-qpt.json", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_stone_and_curvature(tmp_path):
    stone = tmp_path / "s.ini"
    stone.write_text("subcommand = stone-bisect\n[family]\nname = spin-half\ncenter = 0.2, -0.1, 0.3\n"
                     "[box]\nlower = -1, -1, -1\nupper = 1, 1, 1\nstop_diameter = 1e-3\n")
    assert main(["stone-bisect", "--config", str(stone), "--out", str(tmp_path / "s")]) == 0
    row = next(csv.DictReader(open(tmp_path / "s" / "stone-bisect.csv")))
    located = [float(row[c]) for c in "xyz"]
    assert math.dist(located, [0.2, -0.1, 0.3]) < 1e-3
    assert (tmp_path / "s" / "steps.csv").exists()

    curv = tmp_path / "c.ini"
    curv.write_text("subcommand = curvature\n[family]\nname = spin-half\n"
                    "[curvature]\npoints = 0.3, 0.2, 0.9; -0.5, 0.1, 0.2\nmu = 0\nnu = 1\n")
    assert main(["curvature", "--config", str(curv), "--out", str(tmp_path / "c")]) == 0
    for row in csv.DictReader(open(tmp_path / "c" / "curvature.csv")):
        a, b = float(row["F_sum_over_states"]), float(row["F_plaquette"])
        assert a == pytest.approx(b, rel=1e-6)
        assert abs(a) <= float(row["bound"])
