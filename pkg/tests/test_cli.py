"""Config loading and the command-line surface.

Commands run in-process through main(argv) so exit codes and output are
asserted directly; one subprocess test covers the installed entry point.
"""

import json
import subprocess
import sys

import pytest

from hydrobrackets import config as cfgmod
from hydrobrackets import library
from hydrobrackets.cli import main
from hydrobrackets.errors import ConfigError

ALL_EXAMPLES = [
    "canonical", "epsilon3", "hopf", "polar_plane", "shallow_water",
    "shallow_water_riemann", "so3", "sphere", "sphere_affinor",
]


def write_config(tmp_path, doc, name="system.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def gaussian_warp_doc():
    # smooth non-flat, non-constant-curvature metric
    return {
        "name": "gaussian-warp",
        "coords": ["r", "s"],
        "g_upper": [["1", "0"], ["0", "exp(-2*r^2)"]],
        "box": {"min": [0.2, -1.0], "max": [1.2, 1.0]},
    }


def coupled_bad_doc():
    return {
        "name": "coupled-bad",
        "coords": ["R1", "R2", "R3"],
        "v_diag": ["R2 + R3 + R2*R3", "R1 + R3", "R1 + R2"],
        "box": {"min": [0.1, 1.1, 2.1], "max": [0.9, 1.9, 2.9]},
    }


# --- config layer ---------------------------------------------------------------

def test_library_lists_all_examples():
    assert library.names() == ALL_EXAMPLES


def test_builtin_configs_all_load():
    for name in library.names():
        lc = library.load(name)
        assert lc.system.N == len(lc.system.coords)
        assert lc.tolerances["tol_zero"] == 1e-9


def test_tolerance_overrides_merge(tmp_path):
    doc = gaussian_warp_doc()
    doc["tolerances"] = {"tol_flat": 1e-5}
    lc = cfgmod.load_config(write_config(tmp_path, doc))
    assert lc.tolerances["tol_flat"] == 1e-5
    assert lc.tolerances["tol_zero"] == 1e-9


def test_affinors_and_params_reach_the_system(tmp_path):
    doc = {
        "name": "affine",
        "coords": ["x", "y"],
        "params": {"k": 2.0},
        "g_upper": [["k", "0"], ["0", "k"]],
        "affinors": [{"sign": -1, "matrix": [["1", "0"], ["0", "1"]]}],
        "box": {"min": [0.0, 0.0], "max": [1.0, 1.0]},
    }
    lc = cfgmod.load_config(write_config(tmp_path, doc))
    assert lc.system.params == {"k": 2.0}
    assert len(lc.system.affinors) == 1
    assert lc.system.affinors[0][0] == -1.0


def test_unknown_key_rejected(tmp_path):
    doc = gaussian_warp_doc()
    doc["metric"] = [["1"]]
    with pytest.raises(ConfigError) as err:
        cfgmod.load_config(write_config(tmp_path, doc))
    assert "config invalid" in str(err.value)


def test_component_count_mismatch_rejected(tmp_path):
    doc = gaussian_warp_doc()
    doc["N"] = 3
    with pytest.raises(ConfigError) as err:
        cfgmod.load_config(write_config(tmp_path, doc))
    assert "$.N" in str(err.value)


def test_box_length_mismatch_rejected(tmp_path):
    doc = gaussian_warp_doc()
    doc["box"]["min"] = [0.2]
    with pytest.raises(ConfigError) as err:
        cfgmod.load_config(write_config(tmp_path, doc))
    assert "$.box.min" in str(err.value)


def test_json_syntax_error_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"name": "x",\n  "coords": [}')
    with pytest.raises(ConfigError) as err:
        cfgmod.load_config(str(path))
    assert "line 2" in str(err.value)


def test_bad_expression_rejected(tmp_path):
    doc = gaussian_warp_doc()
    doc["g_upper"][1][1] = "exp(-2*r^"
    with pytest.raises(ConfigError) as err:
        cfgmod.load_config(write_config(tmp_path, doc))
    assert "expression" in str(err.value)


def test_undeclared_name_rejected(tmp_path):
    doc = gaussian_warp_doc()
    doc["g_upper"][0][0] = "q"
    with pytest.raises(ConfigError):
        cfgmod.load_config(write_config(tmp_path, doc))


# --- CLI: check -----------------------------------------------------------------

def test_examples_subcommand(capsys):
    assert main(["examples"]) == 0
    assert capsys.readouterr().out.split() == ALL_EXAMPLES


def test_check_flat_metric_passes(capsys):
    assert main(["check", "--class", "dn", "canonical"]) == 0
    assert "DN_FLAT" in capsys.readouterr().out


def test_check_curved_metric_fails_flatness(capsys):
    assert main(["check", "--class", "dn", "sphere"]) == 2
    out = capsys.readouterr().out
    assert "NOT_A_BRACKET" in out
    assert "[FAIL] flatness" in out


def test_check_constant_curvature(capsys):
    assert main(["check", "--class", "mf", "sphere"]) == 0
    assert "MF_CONST_CURV(c=1" in capsys.readouterr().out


def test_check_affinor_family(capsys):
    assert main(["check", "--class", "fer", "sphere_affinor"]) == 0
    assert "FERAPONTOV" in capsys.readouterr().out


def test_check_auto_dispatch(capsys, tmp_path):
    assert main(["check", "polar_plane"]) == 0
    assert "DN_FLAT" in capsys.readouterr().out
    path = write_config(tmp_path, gaussian_warp_doc())
    assert main(["check", path]) == 2
    assert "INDETERMINATE" in capsys.readouterr().out


def test_check_missing_affinors_is_an_error(capsys):
    assert main(["check", "--class", "fer", "sphere"]) == 1
    assert "error" in capsys.readouterr().err


def test_check_tolerance_override(tmp_path, capsys):
    doc = {
        "name": "perturbed-polar",
        "coords": ["r", "th"],
        "g_upper": [["1", "0"], ["0", "1/r^2"]],
        "b": [
            [["0", "0"], ["0", "-1/r + 0.001"]],
            [["0", "1/r"], ["-1/r^3", "0"]],
        ],
        "box": {"min": [0.5, -1.0], "max": [2.5, 1.5]},
    }
    path = write_config(tmp_path, doc)
    assert main(["check", "--class", "dn", path]) == 2
    capsys.readouterr()
    assert main(["check", "--class", "dn", path, "--tol-zero", "0.1"]) == 0


def test_check_reports_are_deterministic(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    main(["check", "--class", "mf", "sphere", "--out", str(a)])
    main(["check", "--class", "mf", "sphere", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["verdict"] == "MF_CONST_CURV"


def test_check_rejects_unknown_config(capsys):
    assert main(["check", "no_such_example"]) == 1
    assert "no built-in example" in capsys.readouterr().err


def test_usage_error_is_exit_one(capsys):
    assert main(["check", "--class", "bogus", "canonical"]) == 1
    assert main(["no-such-command"]) == 1
    capsys.readouterr()


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    capsys.readouterr()


# --- CLI: flat-coords -----------------------------------------------------------

def test_flat_coords_chart_csv(tmp_path, capsys):
    out = tmp_path / "chart.csv"
    assert main(["flat-coords", "polar_plane", "--grid", "8",
                 "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["pass"] is True
    assert summary["pushed_metric_residual"] < 1e-7
    lines = out.read_text().splitlines()
    assert lines[0] == "r,th,n1,n2"
    assert len(lines) == 1 + 9 * 9


def test_flat_coords_curved_metric_fails(capsys):
    assert main(["flat-coords", "sphere", "--grid", "8"]) == 2
    assert "not flat" in capsys.readouterr().err


# --- CLI: hodograph -------------------------------------------------------------

def test_hodograph_scalar_example(tmp_path, capsys):
    out = tmp_path / "solution.csv"
    assert main(["hodograph", "hopf", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "vacuous" in text
    assert "pde residual" in text
    assert out.read_text().splitlines()[0] == "x,t,R1,residual,converged"


def test_hodograph_refuses_incompatible_velocities(tmp_path, capsys):
    path = write_config(tmp_path, coupled_bad_doc())
    assert main(["hodograph", path]) == 2
    assert "refusing" in capsys.readouterr().err


def test_hodograph_force_bypasses_the_gate(tmp_path, capsys):
    # with --force the gate is passed; this config still has no flow data,
    # so the run ends as an error rather than a checked failure
    path = write_config(tmp_path, coupled_bad_doc())
    assert main(["hodograph", path, "--force"]) == 1
    assert "no commuting flow" in capsys.readouterr().err


def test_hodograph_two_component_pipeline(tmp_path, capsys):
    out = tmp_path / "solution.csv"
    assert main(["hodograph", "shallow_water_riemann", "--grid", "128",
                 "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "flow [sampled]" in text
    assert "pde residual" in text
    header = out.read_text().splitlines()[0]
    assert header == "x,t,R1,R2,residual,converged"


# --- CLI: jacobi ----------------------------------------------------------------

def test_jacobi_flat_bracket_passes(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["jacobi", "canonical", "--grid", "32", "--out", str(out)]) == 0
    assert "jacobi [pass]" in capsys.readouterr().out
    report = json.loads(out.read_text())
    assert report["pass"] is True
    assert report["max_residual"] < 1e-6
    assert report["n_triples"] == 20


def test_jacobi_curved_metric_fails(capsys):
    assert main(["jacobi", "sphere", "--grid", "32"]) == 2
    assert "jacobi [FAIL]" in capsys.readouterr().out


def test_jacobi_reports_are_deterministic(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    main(["jacobi", "canonical", "--grid", "32", "--seed", "7", "--out", str(a)])
    main(["jacobi", "canonical", "--grid", "32", "--seed", "7", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["seed"] == 7


def test_jacobi_ultralocal_bracket(capsys):
    assert main(["jacobi", "so3", "--grid", "32"]) == 0
    capsys.readouterr()


# --- entry point ----------------------------------------------------------------

def test_installed_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hydrobrackets.cli", "examples"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.split() == ALL_EXAMPLES
