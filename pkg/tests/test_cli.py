import csv
import io
import subprocess
import sys

import pytest

from redfam import example_path
from redfam.cli import main

PID = str(example_path("pid.fam"))
VCL = str(example_path("vcl.fam"))
COST = str(example_path("vcl_cost.csv"))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    body = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def comments(text):
    return [l for l in text.splitlines() if l.startswith("#")]


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_check_both_engines_agree(capsys):
    code, out, err = run(capsys, "check", PID, "--rounds", "10", "--engine", "both")
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 64
    audit = [l for l in comments(out) if "audit" in l][0]
    assert float(audit.split()[-1]) <= 1e-12
    assert "audit" in err


def test_check_zero_rounds(capsys):
    code, out, _ = run(capsys, "check", PID, "--rounds", "0")
    assert code == 0
    assert {float(r["pfail"]) for r in rows_of(out)} == {0.0}


def test_check_is_deterministic(capsys):
    _, a, _ = run(capsys, "check", PID, "--rounds", "5")
    _, b, _ = run(capsys, "check", PID, "--rounds", "5")
    assert a == b
    assert a.startswith("# redfam ")


def test_check_stepwise_bottom_matches_default(capsys):
    _, a, _ = run(capsys, "check", PID, "--rounds", "5")
    _, b, _ = run(capsys, "check", PID, "--rounds", "5", "--compose", "off", "--config-vars", "bottom")
    pa = [float(r["pfail"]) for r in rows_of(a)]
    pb = [float(r["pfail"]) for r in rows_of(b)]
    assert max(abs(x - y) for x, y in zip(pa, pb)) <= 1e-15


def test_check_explicit_timings(capsys):
    code, out, _ = run(capsys, "check", PID, "--rounds", "2", "--engine", "explicit",
                       "--sample", "3@1", "--timings")
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 3
    assert {"states", "build_seconds", "analysis_seconds"} <= set(rows[0])


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["check", PID, "--bogus"])
    assert exc.value.code == 1
    capsys.readouterr()
    code, _, err = run(capsys, "check", PID)
    assert code == 1 and "--rounds" in err
    code, _, err = run(capsys, "check", "/nonexistent.fam", "--rounds", "1")
    assert code == 1


def test_parse_error_reports_position(capsys, tmp_path):
    bad = write(tmp_path, "bad.fam", "data out critical;\nelement P reads{x} writes{out} p=0.5;\n")
    code, _, err = run(capsys, "validate", bad)
    assert code == 1
    assert ":2:" in err


def test_budget_exit_code(capsys):
    code, _, _ = run(capsys, "check", PID, "--rounds", "2", "--node-budget", "50")
    assert code == 2


def test_quantile_closed_form(capsys, tmp_path):
    model = write(tmp_path, "one.fam", "data out critical; element P reads{} writes{out} p=1e-5;\n")
    code, out, _ = run(capsys, "quantile", model, "--theta", "3e-4", "--engine", "both")
    assert code == 0
    (row,) = rows_of(out)
    assert row["qround"] == "30" and row["censored"] in ("0", "false", "False")


def test_quantile_censored_and_agreement(capsys):
    code, out, _ = run(capsys, "quantile", PID, "--theta", "0.999999", "--nmax", "4", "--engine", "both")
    assert code == 0
    rows = rows_of(out)
    assert {r["qround"] for r in rows} == {"4"}
    assert {r["censored"] for r in rows} == {"1"}
    assert any("qround_mismatches 0" in l for l in comments(out))


def test_pareto_default_scatter_path(capsys, tmp_path):
    out = tmp_path / "front.csv"
    code, _, _ = run(capsys, "pareto", VCL, "--rounds", "1", "--cost", COST, "--engine", "explicit",
                     "--sample", "40@2", "--out", str(out))
    assert code == 0
    scatter = tmp_path / "front_scatter.csv"
    assert scatter.exists()
    times = {r["time"] for r in rows_of(scatter.read_text())}
    front = rows_of(out.read_text())
    assert front and {r["time"] for r in front} <= times


def test_pareto_all_none_at_61(capsys, tmp_path):
    lines = open(VCL).read().splitlines()
    protects = [l for l in lines if l.startswith("protect")]
    small = write(tmp_path, "vcl2.fam", "\n".join(l for l in lines if l not in protects[2:]) + "\n")
    scatter = tmp_path / "s.csv"
    code, out, _ = run(capsys, "pareto", small, "--rounds", "3", "--cost", COST, "--engine", "both",
                       "--scatter", str(scatter))
    assert code == 0
    points = rows_of(scatter.read_text())
    assert len(points) == 16
    base = [r for r in points if r["combination"] == "--"]
    assert base[0]["time"] == "61"
    front = rows_of(out)
    assert front[-1]["time"] == "61"  # cheapest point is never dominated


def test_pareto_single_member(capsys, tmp_path):
    model = write(tmp_path, "one.fam", "data out critical; element P reads{} writes{out} p=0.1;\n")
    cost = write(tmp_path, "c.csv", "block,comparison\nbase,7\n")
    code, out, _ = run(capsys, "pareto", model, "--rounds", "2", "--cost", cost)
    assert code == 0
    (row,) = rows_of(out)
    assert row["time"] == "7"
    assert float(row["prob"]) == pytest.approx(0.19)


def test_stats_pid(capsys):
    code, out, _ = run(capsys, "stats", PID, "--sample", "4@1")
    assert code == 0
    info = dict(l.split(": ", 1) for l in out.splitlines())
    assert info["family_size"] == "64"
    assert info["one_by_one_sampled"] == "4"


def test_stats_unannotated(capsys, tmp_path):
    model = write(tmp_path, "one.fam", "data out critical; element P reads{} writes{out} p=0.1;\n")
    code, out, _ = run(capsys, "stats", model)
    assert code == 0
    assert "family_size: 1" in out.splitlines()


def test_stats_one_percent_sample(capsys):
    code, out, _ = run(capsys, "stats", VCL, "--rounds", "0", "--compose", "off", "--config-vars", "bottom")
    assert code == 0
    assert "one_by_one_sampled: 655" in out.splitlines()


def test_validate_with_cost(capsys):
    code, out, _ = run(capsys, "validate", VCL, "--cost", COST)
    assert code == 0
    assert out.strip() == "ok: 6 data, 8 blocks, 65536 configurations"


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "redfam.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "redfam" in res.stdout
