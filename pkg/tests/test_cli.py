import json
import subprocess
import sys

import pytest

from singular_limits import cli
from singular_limits.functionals import FunctionalReport

BACKWARD = """
system = "burgers-shifted"
scheme = "backward"
steps = {steps}
[grid]
x_min = -2.0
x_max = {x_max}
dx = 0.1
[initial]
kind = "riemann"
left = 0.4
right = 0.0
"""

LATTICE = """
system = "chromatography"
scheme = "semidiscrete"
t_final = 4.0
snapshot_stride = 20
[window]
n_min = -10
n_max = 40
[initial]
kind = "riemann"
left = [1.0, 1.0]
right = [1.02, 0.97]
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_backward_run_writes_manifest_and_is_deterministic(tmp_path):
    cfg = _write(tmp_path, BACKWARD.format(steps=3, x_max=30.0))
    for out in ("a", "b"):
        assert cli.main(["run-backward", "--config", cfg, "--out", str(tmp_path / out), "--quiet"]) == 0
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "run-backward" and manifest["config"]["steps"] == 3
    assert manifest["snapshots"] == [f"step_{k:06d}.csv" for k in range(4)]
    for name in manifest["snapshots"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_lattice_run_and_diagnose(tmp_path, capsys):
    cfg = _write(tmp_path, LATTICE)
    run = tmp_path / "run"
    assert cli.main(["run-semidiscrete", "--config", cfg, "--out", str(run), "--quiet"]) == 0
    assert len(json.loads((run / "manifest.json").read_text())["snapshots"]) == 5
    # configuration is recovered from the manifest when --config is omitted
    assert cli.main(["diagnose", str(run), "--assert"]) == 0
    assert "smallest working c0: 1" in capsys.readouterr().out
    header = (run / "diagnose" / "diagnose.csv").read_text().splitlines()[0]
    assert header == "step,tv,q,lyapunov,c0,source_magnitude,flagged"


def test_diagnose_assert_exit_code(tmp_path, monkeypatch):
    cfg = _write(tmp_path, LATTICE)
    run = tmp_path / "run"
    cli.main(["run-semidiscrete", "--config", cfg, "--out", str(run), "--quiet"])

    def always_flagged(rows, c0, slack):
        return [FunctionalReport(0, 1.0, 1.0, 2.0, c0, 0.0, True)]

    monkeypatch.setattr(cli, "reports_from_series", always_flagged)
    assert cli.main(["diagnose", str(run), "--quiet"]) == 0
    assert cli.main(["diagnose", str(run), "--quiet", "--assert"]) == 4


def test_backward_diagnose_needs_every_step(tmp_path):
    base = BACKWARD.format(steps=4, x_max=30.0)
    for name, extra, code in (("every", "", 0), ("strided", "snapshot_stride = 2\n", 2)):
        cfg = _write(tmp_path, extra + base, f"{name}.toml")
        run = tmp_path / name
        assert cli.main(["run-backward", "--config", cfg, "--out", str(run), "--quiet"]) == 0
        assert cli.main(["diagnose", str(run), "--quiet", "--assert"]) == code


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, BACKWARD.format(steps=3, x_max=30.0).replace("dx = 0.1", "dx = -1"))
    assert cli.main(["run-backward", "--config", cfg]) == 2
    assert "grid.dx" in capsys.readouterr().err
    assert cli.main(["run-backward", "--config", str(tmp_path / "missing.toml")]) == 2
    assert cli.main(["run-semidiscrete", "--config", _write(tmp_path, BACKWARD.format(steps=1, x_max=9.0))]) == 2


def test_window_escape_exits_3(tmp_path, capsys):
    cfg = _write(tmp_path, BACKWARD.format(steps=40, x_max=3.0))
    assert cli.main(["run-backward", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "step=" in capsys.readouterr().err


def test_kernels_without_oracle(tmp_path):
    assert cli.main(["kernels", "--no-oracle", "--out", str(tmp_path), "--quiet"]) == 0
    lines = (tmp_path / "kernels.csv").read_text().splitlines()
    assert lines[0].startswith("scheme,lam,mu,offset")
    assert len(lines) == 1 + 3 * (5 + 5)


def test_converge_cross_and_stability(tmp_path):
    text = """
system = "linear"
scheme = "semidiscrete"
seed = 4
[system_params]
eigenvalues = [0.5]
[study]
left = 0.0
right = 0.05
epsilons = [0.04, 0.02]
pairs = 2
t_physical = 1.0
"""
    cfg = _write(tmp_path, text)
    for command in ("converge", "cross", "stability"):
        out = tmp_path / command
        assert cli.main([command, "--config", cfg, "--out", str(out), "--quiet"]) == 0
        assert (out / "manifest.json").exists() and (out / "summary.json").exists()
    summary = json.loads((tmp_path / "stability" / "summary.json").read_text())
    assert summary["lipschitz"] == pytest.approx(1.0, abs=1e-6)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "singular_limits", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"


def test_global_flags_before_the_subcommand(tmp_path):
    cfg = _write(tmp_path, LATTICE)
    out = tmp_path / "early"
    assert cli.main(["--config", cfg, "--out", str(out), "--quiet", "run-semidiscrete"]) == 0
    assert (out / "manifest.json").exists()
