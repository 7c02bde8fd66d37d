import json
import math

import numpy as np
import pytest

from pbsens.cli import EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main
from pbsens.csvio import read_sensitivity_csv


def run_cli(*args):
    return main(list(args))


class TestListModels:
    def test_prints_registry(self, capsys):
        assert run_cli("list-models") == EXIT_OK
        out = capsys.readouterr().out
        for name in ("chua", "random_linear", "scalar_decay", "const_linear"):
            assert name in out


class TestCompute:
    def test_chua_pbsr_csv_shape(self, tmp_path, capsys):
        code = run_cli("compute", "--model", "chua", "--method", "pbsr",
                       "--t0", "0", "--t1", "10", "--dt", "0.01", "--out", str(tmp_path))
        assert code == EXIT_OK
        path = tmp_path / "chua_pbsr.csv"
        assert path.exists()
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1 + 1001  # header + K+1 rows
        assert len(lines[0].split(",")) == 1 + 3 + 3 * 2 + 2

    def test_scalar_decay_fs_matches_closed_form(self, tmp_path):
        code = run_cli("compute", "--model", "scalar_decay", "--method", "fs",
                       "--dt", "0.01", "--out", str(tmp_path))
        assert code == EXIT_OK
        times, _, mats, _ = read_sensitivity_csv(tmp_path / "scalar_decay_fs.csv")
        for k in range(0, times.size, 10):
            exact = -times[k] * math.exp(-times[k])
            assert abs(mats[k, 0, 0] - exact) <= 1e-5

    def test_unknown_method_exits_2(self, tmp_path, capsys):
        code = run_cli("compute", "--model", "chua", "--method", "adjoint", "--out", str(tmp_path))
        assert code == EXIT_USAGE

    def test_unknown_model_exits_2(self, tmp_path):
        code = run_cli("compute", "--model", "vanderpol", "--out", str(tmp_path))
        assert code == EXIT_USAGE

    @pytest.mark.filterwarnings("ignore::pbsens.ode.StabilityWarning")
    def test_divergence_exits_3(self, tmp_path, capsys):
        # stiff random system far beyond the stability limit of the chosen step
        code = run_cli("compute", "--model", "random_linear:n=60:seed=0",
                       "--method", "exp", "--t1", "6.0", "--dt", "0.1",
                       "--h-target", "0.1", "--out", str(tmp_path))
        assert code == EXIT_DIVERGED
        assert "divergence" in capsys.readouterr().err

    def test_grid_file(self, tmp_path):
        grid_file = tmp_path / "grid.txt"
        grid_file.write_text("0.0\n0.25\n0.5\n1.0\n")
        code = run_cli("compute", "--model", "scalar_decay", "--method", "exp",
                       "--grid-file", str(grid_file), "--out", str(tmp_path))
        assert code == EXIT_OK
        times, _, _, _ = read_sensitivity_csv(tmp_path / "scalar_decay_exp.csv")
        assert np.array_equal(times, [0.0, 0.25, 0.5, 1.0])

    def test_bad_grid_file_exits_2(self, tmp_path):
        grid_file = tmp_path / "grid.txt"
        grid_file.write_text("0.0\n1.0\n0.5\n")
        code = run_cli("compute", "--model", "scalar_decay", "--grid-file", str(grid_file),
                       "--out", str(tmp_path))
        assert code == EXIT_USAGE

    def test_json_format_adds_payload(self, tmp_path):
        code = run_cli("compute", "--model", "scalar_decay", "--method", "exp",
                       "--format", "json", "--out", str(tmp_path))
        assert code == EXIT_OK
        payload = json.loads((tmp_path / "scalar_decay_exp.json").read_text())
        assert payload["method"] == "EXP"
        assert len(payload["times"]) == len(payload["sensitivities"])

    def test_seed_override(self, tmp_path):
        code = run_cli("compute", "--model", "random_linear:n=4", "--seed", "9",
                       "--t1", "0.5", "--out", str(tmp_path))
        assert code == EXIT_OK


class TestConfigFile:
    def test_config_supplies_flags_cli_wins(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "scalar_decay", "method": "exp", "dt": 0.5}))
        code = run_cli("compute", "--config", str(cfg), "--dt", "0.25", "--out", str(tmp_path))
        assert code == EXIT_OK
        times, _, _, _ = read_sensitivity_csv(tmp_path / "scalar_decay_exp.csv")
        assert times.size == 5  # dt 0.25 from the CLI beat dt 0.5 from the config

    def test_unknown_config_key_exits_2(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"modle": "chua"}))
        code = run_cli("compute", "--config", str(cfg), "--model", "chua", "--out", str(tmp_path))
        assert code == EXIT_USAGE


class TestCompare:
    def test_writes_report_and_medians(self, tmp_path, capsys):
        code = run_cli("compare", "--model", "scalar_decay", "--out", str(tmp_path))
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "median re_pbsr" in out
        assert (tmp_path / "compare_scalar_decay.json").exists()
        assert (tmp_path / "compare_scalar_decay_steps.csv").exists()

    def test_self_comparison_zero(self, tmp_path):
        code = run_cli("compare", "--model", "scalar_decay", "--method", "pbsr",
                       "--reference", "pbsr", "--out", str(tmp_path))
        assert code == EXIT_OK
        report = json.loads((tmp_path / "compare_scalar_decay.json").read_text())
        assert report["metadata"]["median_re"]["pbsr"] == 0.0


class TestConvergence:
    def test_scalar_decay_order_two(self, tmp_path, capsys):
        code = run_cli("convergence", "--model", "scalar_decay", "--levels", "4",
                       "--base-dt", "0.1", "--out", str(tmp_path))
        assert code == EXIT_OK
        report = json.loads((tmp_path / "convergence_scalar_decay_pbs.json").read_text())
        assert 1.7 <= report["slope"] <= 2.3

    def test_too_few_levels_exits_2(self, tmp_path):
        code = run_cli("convergence", "--model", "scalar_decay", "--levels", "2",
                       "--out", str(tmp_path))
        assert code == EXIT_USAGE


class TestScaling:
    def test_tiny_study_runs(self, tmp_path, capsys):
        code = run_cli("scaling", "--dims", "3,5", "--reps", "1",
                       "--t-final", "0.2", "--grid-intervals", "4", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert (tmp_path / "scaling.json").exists()
        assert (tmp_path / "scaling_scaling.csv").exists()
        assert "exponent fit skipped" in capsys.readouterr().out

    def test_malformed_dims_exits_2(self, tmp_path):
        code = run_cli("scaling", "--dims", "3,x", "--out", str(tmp_path))
        assert code == EXIT_USAGE


class TestUsage:
    def test_no_command_exits_2(self):
        assert run_cli() == EXIT_USAGE

    def test_unknown_flag_exits_2(self):
        assert run_cli("compute", "--model", "chua", "--frobnicate") == EXIT_USAGE
