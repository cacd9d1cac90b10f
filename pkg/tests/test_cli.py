import csv
import json
import subprocess
import sys

import pytest

from multicontact import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_classify_bundled(capsys):
    code, out, _ = run(capsys, "classify", "string")
    assert code == 0
    assert out.startswith("damped string: Multicontact")
    assert "sigma = gamma(t) * dt" in out


def test_classify_json_and_out_before_subcommand(capsys, tmp_path):
    code, out, _ = run(capsys, "--out", str(tmp_path), "--format", "json", "classify", "oscillator")
    assert code == 0
    data = json.loads(out)
    assert data["verdict"] == "Multicontact"
    assert json.loads((tmp_path / "classify.json").read_text()) == data


def test_classify_not_multicontact_is_not_an_error(capsys):
    code, out, _ = run(capsys, "classify", "degenerate")
    assert code == 0
    assert "NotMulticontact" in out


def test_derive_both_sides(capsys):
    code, out, _ = run(capsys, "derive", "oscillator")
    assert code == 0 and "EL[q]" in out
    code, out, _ = run(capsys, "derive", "oscillator", "--side", "hamiltonian")
    assert code == 0 and "momentum[q]" in out and "velocity[q,t]" in out
    code, out, _ = run(capsys, "derive", "string", "--format", "latex")
    assert code == 0 and "\\frac" in out


def test_legendre(capsys):
    code, out, _ = run(capsys, "legendre", "string")
    assert code == 0
    assert "p_t = rho*u_t" in out
    code, _, err = run(capsys, "legendre", "degenerate")
    assert code == 3 and "Singular" in err + _
    code, _, err = run(capsys, "legendre", "string_hamiltonian")
    assert code == 2


def test_simulate_oscillator_writes_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "oscillator", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.reader((tmp_path / "oscillator.csv").open()))
    assert rows[0] == ["t", "q", "p", "s"]
    assert abs(float(rows[2][0]) - 0.1) < 1e-12  # every = 100 at dt = 1e-3
    report = json.loads((tmp_path / "oscillator.report.json").read_text())
    assert report["meta"]["csv"] == "oscillator.csv"
    assert report["meta"]["action_identity"] < 1e-6
    assert len(report["series"]["H"]) == len(rows) - 1


def test_simulate_without_block_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "degenerate", "--out", str(tmp_path))
    assert code == 2 and "no [simulation] block" in err


def test_simulate_cfl_violation_exits_4(capsys, tmp_path):
    text = (cli.bundled_path("string")).read_text().replace("cfl = 0.5", "cfl = 1.5")
    path = tmp_path / "fast.sys"
    path.write_text(text)
    code, _, err = run(capsys, "simulate", str(path), "--out", str(tmp_path))
    assert code == 4 and "CFL" in err


def test_bad_input_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "classify", str(tmp_path / "missing.sys"))
    assert code == 2 and err.startswith("error:")
    bad = tmp_path / "bad.sys"
    bad.write_text("[chart]\nbase = t\nfields = q\n[lagrangian]\nL = q_t + zz\n")
    assert run(capsys, "classify", str(bad))[0] == 2


def test_verify_passes_for_regular_examples(capsys):
    for name in ("oscillator", "string"):
        code, out, _ = run(capsys, "--format", "json", "verify", name)
        data = json.loads(out)
        assert code == 0, data["failed"]
        assert {r["check"] for r in data["checks"] if r["status"] == "pass"} >= {
            "classification",
            "sigma_formula",
            "formulations_agree",
            "legendre_pullback",
            "hdw_matches_euler_lagrange",
            "simulation",
        }


def test_verify_fails_for_degenerate(capsys):
    code, out, _ = run(capsys, "verify", "degenerate", "--no-sim")
    assert code == 3
    assert "classification" in out and "fail" in out


def test_seed_flag_is_accepted(capsys):
    assert run(capsys, "classify", "oscillator", "--seed", "7")[0] == 0


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "multicontact.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("multicontact")


@pytest.mark.parametrize("argv", [[], ["classify"], ["frobnicate", "string"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as err:
        cli.main(argv)
    assert err.value.code == 2
