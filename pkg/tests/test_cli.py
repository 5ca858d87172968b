import json
import subprocess
import sys

import pytest

from halfwave.artifacts import load_ground_state, load_profile_set, save_ground_state
from halfwave.cli import DEFAULTS, load_config, run
from halfwave.errors import ConfigurationError, FormatError

GRID = ["--grid-n", "2048", "--grid-rmax", "100"]


def write_config(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Ground state and profile stages on a reduced grid, shared by the stage tests."""
    out = tmp_path_factory.mktemp("pipeline")
    codes = {}
    for stage in ("ground-state", "profile"):
        codes[stage] = run([stage, "--out", str(out), *GRID])
    return out, codes


# -- configuration -----------------------------------------------------------------

def test_defaults_without_config():
    assert load_config(None, "evolve") == DEFAULTS["evolve"]


def test_config_parsing(tmp_path):
    cfg = load_config(write_config(tmp_path / "c.cfg", "schema_version = 1\n# comment\n"
                                   "dt = 0.0025  # finer\nrescale = no\n"), "evolve")
    assert cfg["dt"] == 0.0025 and cfg["rescale"] is False


def test_tuple_keys(tmp_path):
    cfg = load_config(write_config(tmp_path / "c.cfg", "b_values = 0.2, 0.1\n"), "profile")
    assert cfg["b_values"] == (0.2, 0.1)


@pytest.mark.parametrize("text", ["bogus = 1\n", "schema_version = 2\n", "dt = fast\n"])
def test_config_rejections(tmp_path, text):
    with pytest.raises(ConfigurationError):
        load_config(write_config(tmp_path / "c.cfg", text), "evolve")


def test_missing_config_file(tmp_path):
    with pytest.raises(FormatError):
        load_config(tmp_path / "absent.cfg", "evolve")


def test_unknown_key_exit_code(tmp_path):
    code, payload = run(["ground-state", "--config", write_config(tmp_path / "c.cfg", "nope = 1\n"),
                         "--out", str(tmp_path)])
    assert code == 1 and payload["error"] == "ConfigurationError"


# -- error exits -------------------------------------------------------------------

def test_unreachable_tolerance_exit_2(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", "tol = 1e-30\nmax_iter = 50\n")
    code, payload = run(["ground-state", "--config", cfg, "--out", str(tmp_path / "o"),
                         "--grid-n", "512", "--grid-rmax", "40"])
    assert code == 2 and payload["error"] == "IterationDivergedError"


def test_unwritable_output_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, payload = run(["ground-state", "--out", str(blocker / "sub"), "--grid-n", "512",
                         "--grid-rmax", "40"])
    assert code == 3 and payload["error"] == "FormatError"


def test_missing_artifact_exit_4(tmp_path):
    code, payload = run(["profile", "--out", str(tmp_path), *GRID])
    assert code == 4 and payload["error"] == "MissingArtifactError"


def test_report_without_stages_exit_4(tmp_path):
    assert run(["report", "--out", str(tmp_path)])[0] == 4


def test_profile_out_of_range(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", "b_values = 0.5, 0.1\n")
    code, payload = run(["profile", "--config", cfg, "--out", str(tmp_path)])
    assert code == 1 and payload["error"] == "DomainError"


def test_grid_mismatch(pipeline):
    out, _ = pipeline
    code, payload = run(["profile", "--out", str(out), "--grid-n", "1024", "--grid-rmax", "100"])
    assert code == 1 and payload["error"] == "ConfigurationError"


# -- stages ------------------------------------------------------------------------

def test_ground_state_stage(pipeline):
    out, codes = pipeline
    code, report = codes["ground-state"]
    assert code == 0 and report["pass"]
    assert {c["name"] for c in report["checks"]} == {
        "residual", "kinetic_equals_3_mass", "potential_equals_4_mass", "energy_zero"}
    assert json.loads((out / "ground-state" / "config.json").read_text())["config"]["grid_n"] == 2048


def test_ground_state_artifact_round_trip(pipeline, tmp_path):
    out, _ = pipeline
    gs = load_ground_state(out / "ground-state")
    save_ground_state(tmp_path, gs)
    assert (tmp_path / "Q.hwbl").read_bytes() == (out / "ground-state" / "Q.hwbl").read_bytes()


def test_profile_stage(pipeline):
    out, codes = pipeline
    code, report = codes["profile"]
    assert code == 0 and report["pass"]
    slope_beta = next(c for c in report["checks"] if c["name"] == "phi_slope_beta")
    assert slope_beta["report_only"]
    assert (out / "profile" / "phi_vs_b.csv").read_text().startswith("b,phi_l2\n")
    ps = load_profile_set(out / "profile", load_ground_state(out / "ground-state"))
    assert ps.e1 == pytest.approx(report["e1"], rel=1e-15)


def test_profile_rerun_is_byte_identical(pipeline):
    out, _ = pipeline
    before = {p: (out / "profile" / p).read_bytes() for p in ("manifest.json", "report.json")}
    code, _ = run(["profile", "--out", str(out), *GRID])
    assert code == 0
    for p, data in before.items():
        assert (out / "profile" / p).read_bytes() == data, p


def test_modulation_default(tmp_path):
    code, report = run(["modulation", "--out", str(tmp_path)])
    assert code == 0 and report["pass"]
    closed = next(c for c in report["checks"] if c["name"] == "closed_form")
    assert closed["value"] <= 1e-8
    speed = next(c for c in report["checks"] if c["name"] == "blowup_speed_exponent")
    assert speed["printed_exponent"] == -0.25 and "not sharp" in speed["note"]
    assert (tmp_path / "modulation" / "trajectory.csv").exists()


def test_modulation_failure_exit_6(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", "b0 = -0.05\ns_span = 10\n")
    code, _ = run(["modulation", "--config", cfg, "--out", str(tmp_path)])
    assert code == 6


def test_evolve_soliton(pipeline):
    out, _ = pipeline
    cfg = write_config(out / "soliton.cfg", "b0 = 0\ndt = 0.0025\nt_end = 1\n")
    code, report = run(["evolve", "--config", cfg, "--out", str(out), *GRID])
    assert code == 0, report
    names = {c["name"] for c in report["checks"]}
    assert "soliton_error_per_unit_time" in names


def test_evolve_modulated(pipeline):
    out, _ = pipeline
    cfg = write_config(out / "short.cfg", "t_end = 1\n")
    code, report = run(["evolve", "--config", cfg, "--out", str(out), *GRID])
    assert code == 0, report
    header = (out / "evolve" / "series.csv").read_text().splitlines()[0]
    assert header.split(",")[-1] == "mod_norm"


def test_diagnostics_and_report(pipeline):
    out, _ = pipeline
    cfg = write_config(out / "diag.cfg", "battery = 5\ncoercivity_n = 512\nbiharmonic_n = 512\n"
                       "biharmonic_rmax = 512\nA_values = 16, 32, 64\n")
    code, report = run(["diagnostics", "--config", cfg, "--out", str(out), *GRID])
    names = {c["name"]: c for c in report["checks"]}
    assert names["smoothed_half_norm_identity"]["pass"]
    assert names["coercivity_constrained"]["pass"] and names["coercivity_unconstrained"]["pass"]
    assert code in (0, 7)
    code, agg = run(["report", "--out", str(out)])
    assert set(agg["stages"]) >= {"ground-state", "profile", "evolve", "diagnostics"}
    assert json.loads((out / "report.json").read_text())["pass"] == agg["pass"]


def test_diagnostics_deterministic(tmp_path):
    cfg = write_config(tmp_path / "diag.cfg", "battery = 3\ncoercivity_n = 256\nbiharmonic_n = 256\n"
                       "biharmonic_rmax = 256\nA_values = 16, 32\n")
    outs = []
    for k in range(2):
        d = tmp_path / f"o{k}"
        run(["diagnostics", "--config", cfg, "--out", str(d), "--grid-n", "512", "--grid-rmax", "40"])
        outs.append((d / "diagnostics" / "report.json").read_bytes())
    assert outs[0] == outs[1]


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "halfwave", "profile", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 4
    assert json.loads(proc.stderr)["error"] == "MissingArtifactError"


def test_config_keys_are_case_sensitive(tmp_path):
    cfg = load_config(write_config(tmp_path / "c.cfg", "A = 32\nA_values = 8, 16\n"), "diagnostics")
    assert cfg["A"] == 32.0 and cfg["A_values"] == (8.0, 16.0)
    with pytest.raises(ConfigurationError):
        load_config(write_config(tmp_path / "d.cfg", "a = 32\n"), "diagnostics")
