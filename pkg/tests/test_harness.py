import json
import os

import numpy as np
import pytest

from hmlab.errors import ChartDomainError, ConfigError, StabilityError
from hmlab.harness import config as cfgmod
from hmlab.harness import runner
from hmlab.harness.cli import main
from hmlab.harness.io import atomic_write, csv_text, to_json

SMALL = """
[experiment]
name = "small"

[domain]
region = "box"
extents = [[0.0, 1.6], [0.0, 1.6]]
h = 0.1
bc = "periodic"

[target]
kind = "hyperbolic"
dim = 2

[potential]
kind = "quadratic_radial"
coefficients = [-0.5]

[init]
kind = "random"
seed = 3
amplitude = 0.3

[flow]
tol = 1e-7
log_every = 200

[diagnostics]
run = ["liouville_flow", "p_function", "stress_energy"]

[assertions]
limit_center_tol = 1e-4
energy_dissipation = true
"""

KINK = """
[domain]
region = "box"
extents = [[-6.0, 6.0]]
h = 0.1

[target]
kind = "euclidean"
dim = 1

[potential]
kind = "double_well_radial"

[init]
kind = "kink"

[flow]
tol = 1e-8
log_every = 2000

[diagnostics]
run = ["p_function", "bochner", "stress_energy", "kato", "bochner_p"]
modica_slack = 1e-3

[refine]
levels = 2
metrics = ["residual_sup", "bochner_sup"]

[assertions]
residual_max = 1e-8
deviation_max = 1e-2
modica = true
bochner_order_min = 1.8
residual_order_min = 1.8
energy_dissipation = true
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cli(*args):
    return main([str(a) for a in args])


def test_run_writes_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert run_cli("run", cfg, "--out", out) == 0
    names = set(os.listdir(out))
    assert {"config.toml", "config_resolved.json", "flow_history.csv", "p_field.csv",
            "stress_energy_div.csv", "field.csv", "report.json", "summary.txt"} <= names
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == runner.SCHEMA_VERSION
    assert "time" not in json.dumps(rep).lower().replace("runtime", "")
    summary = (out / "summary.txt").read_text()
    assert "PASS" in summary and summary.rstrip().endswith("exit 0")
    assert "[liouville-concave]" in capsys.readouterr().out


def test_report_is_deterministic(tmp_path):
    cfg = write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("run", cfg, "--out", a) == 0
    assert run_cli("run", cfg, "--out", b) == 0
    for name in ("report.json", "field.csv", "flow_history.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_artifact_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("HMLAB_ARTIFACT_ROOT", str(tmp_path / "root"))
    assert run_cli("run", write(tmp_path, SMALL)) == 0
    assert (tmp_path / "root" / "small" / "report.json").is_file()


def test_kink_run_and_refinement(tmp_path):
    cfg = cfgmod.load(write(tmp_path, KINK, "kink.toml"))
    assert cfg.name == "kink"
    res = runner.run_experiment(cfg, str(tmp_path / "k"))
    assert res.exit_code == 0, [a.line() for a in res.assertions]
    anchors = {a.anchor for a in res.assertions}
    assert {"flow", "euler-lagrange", "exact-solution", "modica", "bochner-formula",
            "energy-dissipation"} <= anchors
    rows = (tmp_path / "k" / "refinement.csv").read_text().splitlines()
    assert rows[0].startswith("h,") and len(rows) == 3


def test_refine_cli(tmp_path, capsys):
    cfg = write(tmp_path, KINK)
    assert run_cli("refine", cfg, "--levels", 3, "--metric", "residual_sup",
                   "--out", tmp_path / "r") == 0
    study = json.loads((tmp_path / "r" / "refinement.json").read_text())
    assert all(1.8 <= o <= 2.2 for o in study["orders"]["residual_sup"])
    assert run_cli("refine", cfg, "--levels", 1) == 3
    assert "at least 2 levels" in capsys.readouterr().err


def test_refinement_respects_node_cap(tmp_path):
    cfg = cfgmod.parse(KINK.replace("[refine]", "[refine]\nnode_cap = 200"))
    with pytest.raises(ConfigError):
        runner.refinement_study(cfg, 3)


def test_empty_diagnostics(tmp_path):
    text = SMALL.split("[diagnostics]")[0].replace("kind = \"quadratic_radial\"\n"
                                                   "coefficients = [-0.5]", "kind = \"zero\"")
    out = tmp_path / "e"
    assert run_cli("run", write(tmp_path, text), "--out", out) == 0
    assert (out / "flow_history.csv").is_file()
    assert not (out / "p_field.csv").exists()


def test_parse_error_exit_code(tmp_path, capsys):
    assert run_cli("run", write(tmp_path, "[domain\nh = 1")) == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("edit,message", [
    (("[flow]", "[flow]\nspeed = 3"), "unknown key"),
    (("[flow]", "[cosmos]\nx = 1\n[flow]"), "unknown section"),
    (("seed = 3\n", ""), "seed"),
    (("h = 0.1", "h = -0.1"), "positive"),
    (("dim = 2", "dim = 9"), "target dimension"),
    (("h = 0.1", "h = \"0.1\""), "type"),
    (("\"p_function\"", "\"tarot\""), "unknown diagnostic"),
])
def test_validation_errors(tmp_path, capsys, edit, message):
    text = SMALL.replace(*edit)
    assert text != SMALL
    assert run_cli("run", write(tmp_path, text)) == 3
    assert message in capsys.readouterr().err


def test_cap_radius_validated_before_compute(tmp_path):
    text = """
[domain]
region = "ball"
center = [0.0, 0.0]
radius = 1.0
h = 0.1
[target]
kind = "sphere"
dim = 2
[diagnostics]
run = ["gradient_bound_ball"]
[bounds]
a = 1.0
d = 2.0
R = 1.2
"""
    with pytest.raises(ConfigError, match="pi/\\(2 sqrt d\\)"):
        cfgmod.parse(text)
    assert run_cli("run", write(tmp_path, text), "--out", tmp_path / "x") == 3
    assert not (tmp_path / "x").exists()


def test_node_cap(tmp_path):
    text = SMALL.replace("h = 0.1", "h = 0.0005")
    with pytest.raises(ConfigError, match="cap"):
        cfgmod.parse(text)


def test_chart_invalid_initial_data(tmp_path):
    text = SMALL.replace("amplitude = 0.3", "amplitude = 3.0")
    assert run_cli("run", write(tmp_path, text), "--out", tmp_path / "bad") == 3


def test_error_codes_of_library_errors():
    assert ChartDomainError("x").exit_code == 4
    assert StabilityError("x").exit_code == 5
    assert cfgmod.ParseError("x").exit_code == 2


def test_failed_assertion_exit_code(tmp_path):
    text = SMALL.replace("limit_center_tol = 1e-4", "limit_center_tol = 1e-4\nresidual_max = 1e-12")
    out = tmp_path / "f"
    assert run_cli("run", write(tmp_path, text), "--out", out) == 1
    assert "FAIL" in (out / "summary.txt").read_text()


def test_suite(tmp_path):
    write(tmp_path, SMALL, "a.toml")
    write(tmp_path, SMALL.replace('name = "small"', 'name = "other"'), "b.toml")
    manifest = write(tmp_path, '[suite]\nconfigs = ["a.toml", "b.toml"]\n', "m.toml")
    assert run_cli("suite", manifest, "--workers", 2, "--out", tmp_path / "s") == 0
    text = (tmp_path / "s" / "suite_summary.txt").read_text()
    assert "small" in text and "other" in text and text.rstrip().endswith("exit 0")


def test_empty_manifest(tmp_path):
    manifest = write(tmp_path, "[suite]\nconfigs = []\n", "m.toml")
    assert run_cli("suite", manifest, "--out", tmp_path / "s") == 0


def test_not_applicable_only_suite(tmp_path):
    manifest = write(tmp_path, '[suite]\nconfigs = ["liouville_sphere_na"]\n', "m.toml")
    code, results = runner.suite(runner.load_manifest(manifest), str(tmp_path / "s"))
    assert code == 0
    (_, exit_code, counts, _), = results
    assert exit_code == 0 and counts["NOT-APPLICABLE"] == 1 and counts["PASS"] == 0


def test_bundled_configs_validate():
    manifest = cfgmod.bundled_path("acceptance")
    paths = runner.load_manifest(str(manifest))
    assert len(paths) == 8
    for p in paths:
        cfgmod.load(p)


def test_geodesic_cli(tmp_path, capsys):
    out = tmp_path / "g"
    code = run_cli("geodesic", "--potential", "cosine_of_distance", "--coefficients", 1, 1,
                   "--position", np.pi / 2, "--velocity", 0, "--dt", 1e-3, "--t-end", 10,
                   "--store-every", 100, "--out", out)
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,y0,v0,H" and len(lines) == 102
    code = run_cli("geodesic", "--target", "hyperbolic", "--potential", "quadratic_radial",
                   "--coefficients", -1, "--position", 0.5, "--velocity", 1, "--t-end", 100,
                   "--dt", 1e-2, "--out", out)
    assert code == 4


def test_io_helpers(tmp_path):
    assert to_json({"a": 0.1, "b": float("nan"), "c": [1, 2.0]}) == \
        '{\n  "a": 0.10000000000000001,\n  "b": null,\n  "c": [1, 2.0]\n}\n'
    assert csv_text(["x", "ok"], [[1 / 3, True]]) == "x,ok\n0.33333333333333331,true\n"
    atomic_write(tmp_path / "f.txt", "hi")
    assert (tmp_path / "f.txt").read_text() == "hi"
    assert [p for p in os.listdir(tmp_path) if p.startswith(".tmp")] == []
