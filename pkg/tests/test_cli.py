import json
import subprocess
import sys

import pytest

from lattice_qe.cli import main, read_config_file
from lattice_qe.errors import ConfigError


def run_cli(capsys, *args):
    code = main(list(args))
    out, err = capsys.readouterr()
    return code, out, err


class TestValidation:
    def test_malformed_flag_exit_1_no_artifacts(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "run", "--scenario", "fig2a", "--g", "abc", "--out", str(tmp_path))
        assert code == 1
        assert "error" in err
        assert list(tmp_path.iterdir()) == []

    def test_unknown_flag(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "run", "--scenario", "fig2a", "--frobnicate", "--out", str(tmp_path))
        assert code == 1
        assert list(tmp_path.iterdir()) == []

    def test_unknown_scenario(self, capsys):
        assert run_cli(capsys, "run", "--scenario", "fig9")[0] == 1

    def test_missing_output_directory(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "run", "--scenario", "fig2a", "--out", str(tmp_path / "missing"))
        assert code == 1
        assert "does not exist" in err

    def test_out_of_band_detuning(self, capsys):
        assert run_cli(capsys, "run", "--scenario", "fig2a", "--delta", "5")[0] == 1

    def test_missing_command(self, capsys):
        assert run_cli(capsys)[0] == 1


class TestDryRun:
    def test_prints_plan_without_output(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, "run", "--scenario", "fig2bc", "--dry-run", "--out", str(tmp_path))
        assert code == 0
        assert "N=512" in out and "t_revival=" in out and "dt=" in out
        assert list(tmp_path.iterdir()) == []


class TestConfigFile:
    def test_flags_override_file(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# sweep\nscenario = fig2bc\nN = 256\ng = 0.2\ndelta = -3, 0\n")
        code, out, _ = run_cli(capsys, "run", "--config", str(cfg), "--N", "128", "--dry-run")
        assert code == 0
        assert "N=128" in out and "g=0.2" in out and "delta=[-3.0, 0.0]" in out

    def test_bad_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        with pytest.raises(ConfigError):
            read_config_file(cfg)

    def test_pairs(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text("n12 = 6,6; 5,5\n")
        assert read_config_file(cfg)["n12"] == ((6, 6), (5, 5))


class TestRuns:
    def test_small_run_writes_manifest(self, capsys, tmp_path):
        code, out, _ = run_cli(
            capsys, "run", "--scenario", "fig2bc", "--N", "64", "--g", "0.3", "--t-final", "15",
            "--threads", "1", "--out", str(tmp_path),
        )
        assert code in (0, 3)
        assert "scenario=fig2bc" in out
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["outputs"]
        for path in manifest["outputs"]:
            assert (tmp_path / path.split("/")[-1]).exists()
        assert manifest["config"]["N"] == 64
        assert not list(tmp_path.glob(".manifest-*"))

    def test_comparison_failure_exit_3(self, capsys):
        # the compensated tail product is not flat over [200, 2000]
        code, out, _ = run_cli(capsys, "run", "--scenario", "tail")
        assert code == 3
        assert "claim=tail_compensated_drift" in out

    def test_numeric_failure_exit_2(self, capsys):
        code, out, _ = run_cli(
            capsys, "run", "--scenario", "fig2a", "--N", "32", "--delta", "-1", "--t-final", "5", "--tolerance", "1e-18"
        )
        assert code == 2
        assert "error_category=numeric" in out

    def test_poles(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--scenario", "poles", "--g", "0.1", "--delta", "0")
        assert code == 0
        assert "info.z_plus=0.0044" in out
        assert "info.leading_log_rate=0.02933" in out

    def test_fig2a_end_to_end(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "run", "--scenario", "fig2a", "--g", "0.1", "--delta", "-3", "--out", str(tmp_path))
        assert code == 0
        csv = tmp_path / "fig2a_delta_m3.csv"
        assert csv.read_text().startswith("t, pop_emitter_total, pop_state_initial, norm, pop_bath\n")

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "lattice_qe", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.strip() == "0.1.0"
