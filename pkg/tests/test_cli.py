"""Command line behavior: payload formats, exit codes, manifests, replay."""

import json
import math
import subprocess
import sys

import pytest

from cdi.cli import main
from cdi.large_deviations import LdContext, rate_eval
from cdi.rate_models import preset, rate
from cdi.tail_analysis import tail_moments


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# exit codes


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 2


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2


def test_version_flag(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0
    assert out.startswith("cdi ")


def test_missing_model_is_usage_error(capsys):
    code, _, err = run(capsys, "rates", "--n", "2:5")
    assert code == 2
    assert "preset" in err


def test_numeric_failure_exit_code(capsys):
    # descent level at t=1e-9 lies beyond the default index cap
    code, _, err = run(capsys, "speed", "--preset", "kingman", "--t", "1e-9")
    assert code == 3
    assert "numeric failure" in err


def test_bad_index_exit_code(capsys):
    code, _, _ = run(capsys, "rates", "--preset", "kingman", "--n", "1:5")
    assert code == 2
    code, _, _ = run(capsys, "tails", "--preset", "kingman", "--n", "0")
    assert code == 2


# ---------------------------------------------------------------------------
# CSV payloads


def test_rates_csv_payload(capsys):
    code, out, _ = run(capsys, "rates", "--preset", "kingman", "--n", "2:5")
    assert code == 0
    assert out == "n,lambda\n2,1\n3,3\n4,6\n5,10\n"


def test_rates_comma_list(capsys):
    code, out, _ = run(capsys, "rates", "--preset", "kingman", "--n", "10,2")
    assert code == 0
    assert out.splitlines() == ["n,lambda", "10,45", "2,1"]


def test_tails_csv_roundtrips_doubles(capsys):
    code, out, _ = run(capsys, "tails", "--preset", "kingman", "--n", "4,17")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "n,lambda,A,B,C"
    assert out.endswith("\n")
    for line in lines[1:]:
        n_s, lam_s, a_s, b_s, c_s = line.split(",")
        st = tail_moments(preset("kingman"), int(n_s), tol=1e-10, power_rel=1e-9)
        assert float(lam_s) == rate(preset("kingman"), int(n_s))
        assert float(a_s) == st.A
        assert float(b_s) == st.B
        assert float(c_s) == st.C


def test_speed_csv(capsys):
    code, out, _ = run(capsys, "speed", "--preset", "kingman", "--t", "0.002,3.0")
    assert code == 0
    assert out.splitlines() == ["t,v", "0.002,1000", "3,1"]


def test_bare_beta_builds_unit_polytail(capsys):
    code, out, _ = run(capsys, "rates", "--beta", "2.0", "--n", "5")
    assert code == 0
    want = rate(preset("polytail", c=1.0, beta=2.0), 5)
    assert float(out.splitlines()[1].split(",")[1]) == want


# ---------------------------------------------------------------------------
# verify payloads


def test_verify_lln_payload(capsys):
    code, out, _ = run(capsys, "verify", "lln", "--preset", "kingman",
                       "--v", "200", "--reps", "500", "--seed", "9")
    assert code == 0
    d = json.loads(out)
    assert set(d) == {"test_id", "model", "ks", "threshold", "pass", "seed",
                      "t", "wall_time_ms"}
    assert d["test_id"] == "lln"
    assert d["model"] == "kingman"
    assert d["seed"] == 9
    assert d["wall_time_ms"] is None
    assert d["pass"] is True
    assert d["t"] == pytest.approx(tail_moments(preset("kingman"), 200).A)


def test_verify_reports_failure_with_exit_zero(capsys):
    # a model outside the Gaussian domain: the run completes, the payload
    # carries the negative verdict
    code, out, _ = run(capsys, "verify", "clt", "--preset", "geometric",
                       "--n", "30", "--reps", "400", "--seed", "1")
    assert code == 0
    d = json.loads(out)
    assert d["pass"] is False
    assert d["ks"] > d["threshold"]


def test_verify_unknown_id(capsys):
    code, _, err = run(capsys, "verify", "nope", "--preset", "kingman")
    assert code == 2
    assert "unknown test id" in err


def test_verify_needs_time_or_level(capsys):
    code, _, _ = run(capsys, "verify", "lln", "--preset", "kingman",
                     "--reps", "100")
    assert code == 2


def test_verify_determinism(capsys):
    argv = ("verify", "clt", "--preset", "kingman", "--n", "60",
            "--reps", "400", "--seed", "12")
    code1, out1, _ = run(capsys, *argv)
    code2, out2, _ = run(capsys, *argv)
    assert code1 == code2 == 0
    assert out1 == out2
    _, out3, _ = run(capsys, "verify", "clt", "--preset", "kingman",
                     "--n", "60", "--reps", "400", "--seed", "13")
    assert json.loads(out3)["ks"] != json.loads(out1)["ks"]


# ---------------------------------------------------------------------------
# large-deviation commands


def test_ld_table_matches_library(capsys):
    code, out, _ = run(capsys, "ld", "table", "--beta", "2.0", "--x", "0.5,2.0")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "x,tau,I,J"
    ctx = LdContext(beta=2.0)
    for line, x in zip(lines[1:], (0.5, 2.0)):
        xs, ts, is_, js = (float(p) for p in line.split(","))
        ev = rate_eval(ctx, x)
        assert (xs, ts, is_, js) == (x, ev.tau, ev.I, ev.J)


def test_ld_table_requires_beta(capsys):
    assert run(capsys, "ld", "table", "--x", "1.0")[0] == 2
    assert run(capsys, "ld", "table", "--beta", "1.0", "--x", "1.0")[0] == 2


def test_ld_figure_covers_all_indices(capsys):
    code, out, _ = run(capsys, "ld", "figure", "--x", "1.0")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "beta,x,tau,I,J"
    betas = [float(l.split(",")[0]) for l in lines[1:]]
    assert betas == [1.3, 2.0, 3.0]
    for line in lines[1:]:
        _, _, t, i, j = (float(p) for p in line.split(","))
        assert t == 0.0 and i == 0.0 and j == 0.0


def test_ld_estimate_payload(capsys):
    code, out, _ = run(capsys, "ld", "estimate", "--preset", "kingman",
                       "--x", "2", "--n", "10", "--reps", "2000",
                       "--seed", "3", "--tol", "2.0")
    assert code == 0
    d = json.loads(out)
    assert d["side"] == "hitting"
    assert d["model"] == "kingman"
    assert d["replicates"] == 2000
    assert d["trunc_tol"] == 2.0
    assert d["wall_time_ms"] is None
    assert len(d["rows"]) == 1
    row = d["rows"][0]
    for key in ("n", "level", "x_effective", "theta", "estimate", "std_error",
                "replicates", "rate_estimate", "gap_rel"):
        assert key in row
    assert row["estimate"] > 0.0
    assert d["target"] == pytest.approx(0.6530477748538477, rel=1e-9)


def test_ld_estimate_needs_index(capsys):
    code, _, err = run(capsys, "ld", "estimate", "--preset", "logpow",
                       "--a", "1.0", "--x", "2", "--n", "10", "--reps", "100")
    assert code == 2
    assert "needs --beta" in err


# ---------------------------------------------------------------------------
# preset files


def test_toml_preset_file(tmp_path, capsys):
    f = tmp_path / "model.toml"
    f.write_text('kind = "polytail"\nbeta = 2.5\nc = 1.0\nrange_hint = [2, 100]\n')
    code, out, _ = run(capsys, "rates", "--preset", str(f), "--n", "5")
    assert code == 0
    want = rate(preset("polytail", c=1.0, beta=2.5), 5)
    assert float(out.splitlines()[1].split(",")[1]) == want


def test_json_preset_file(tmp_path, capsys):
    f = tmp_path / "model.json"
    f.write_text(json.dumps({"kind": "stretched", "rho": 0.5}))
    code, out, _ = run(capsys, "rates", "--preset", str(f), "--n", "7")
    assert code == 0
    want = rate(preset("stretched", rho=0.5), 7)
    assert float(out.splitlines()[1].split(",")[1]) == want


def test_preset_file_errors(tmp_path, capsys):
    missing = tmp_path / "nope.toml"
    assert run(capsys, "rates", "--preset", str(missing), "--n", "5")[0] == 2

    bad_kind = tmp_path / "bad.json"
    bad_kind.write_text(json.dumps({"kind": "gaussian"}))
    assert run(capsys, "rates", "--preset", str(bad_kind), "--n", "5")[0] == 2

    no_kind = tmp_path / "empty.toml"
    no_kind.write_text('beta = 2.0\n')
    assert run(capsys, "rates", "--preset", str(no_kind), "--n", "5")[0] == 2

    wrong_ext = tmp_path / "model.yaml"
    wrong_ext.write_text("kind: polytail\n")
    assert run(capsys, "rates", "--preset", str(wrong_ext), "--n", "5")[0] == 2


# ---------------------------------------------------------------------------
# manifests and replay


def test_out_writes_manifest(tmp_path, capsys):
    out_file = tmp_path / "rates.csv"
    code, out, _ = run(capsys, "rates", "--preset", "kingman",
                       "--n", "2:40", "--out", str(out_file))
    assert code == 0
    assert "wrote" in out
    manifest = json.loads((tmp_path / "rates.csv.manifest.json").read_text())
    assert set(manifest) == {"command", "argv", "params", "seed", "version",
                             "wall_time_ms", "outputs"}
    assert manifest["command"] == "rates"
    assert manifest["seed"] is None
    assert isinstance(manifest["wall_time_ms"], float)
    entry = manifest["outputs"][0]
    assert entry["path"] == str(out_file)
    assert len(entry["sha256"]) == 64
    assert manifest["params"]["preset"] == "kingman"


def test_replay_byte_identical(tmp_path, capsys):
    out_file = tmp_path / "run.json"
    argv = ["verify", "lln", "--preset", "kingman", "--v", "60",
            "--reps", "300", "--seed", "5", "--out", str(out_file)]
    assert main(argv) == 0
    capsys.readouterr()
    code, out, _ = run(capsys, "replay", str(out_file) + ".manifest.json")
    assert code == 0
    assert "identical" in out
    replayed = tmp_path / "run.json.replay"
    assert replayed.read_bytes() == out_file.read_bytes()


def test_replay_missing_manifest(capsys):
    assert run(capsys, "replay", "/no/such/manifest.json")[0] == 2


def test_replay_detects_tampering(tmp_path, capsys):
    out_file = tmp_path / "t.csv"
    assert main(["tails", "--preset", "kingman", "--n", "3",
                 "--out", str(out_file)]) == 0
    capsys.readouterr()
    mpath = tmp_path / "t.csv.manifest.json"
    doc = json.loads(mpath.read_text())
    doc["outputs"][0]["sha256"] = "0" * 64
    mpath.write_text(json.dumps(doc))
    code, _, err = run(capsys, "replay", str(mpath))
    assert code == 3
    assert "MISMATCH" in err


def test_unwritable_output_is_usage_error(capsys):
    code, _, err = run(capsys, "rates", "--preset", "kingman", "--n", "2",
                       "--out", "/no/such/dir/out.csv")
    assert code == 2
    assert "cannot write" in err


# ---------------------------------------------------------------------------
# environment cap


def test_env_index_cap(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CDI_MAX_INDEX", "5000")
    code, _, err = run(capsys, "speed", "--preset", "kingman", "--t", "2e-4")
    assert code == 3
    monkeypatch.delenv("CDI_MAX_INDEX")
    code, out, _ = run(capsys, "speed", "--preset", "kingman", "--t", "2e-4")
    assert code == 0
    t_s, v_s = out.splitlines()[1].split(",")
    assert float(t_s) == 2e-4 and v_s == "10000"


def test_env_index_cap_validation(capsys, monkeypatch):
    monkeypatch.setenv("CDI_MAX_INDEX", "abc")
    code, _, err = run(capsys, "speed", "--preset", "kingman", "--t", "0.1")
    assert code == 2
    assert "CDI_MAX_INDEX" in err


# ---------------------------------------------------------------------------
# console entry point


def test_installed_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cdi.cli", "rates",
                           "--preset", "kingman", "--n", "2:3"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert proc.stdout == "n,lambda\n2,1\n3,3\n"
