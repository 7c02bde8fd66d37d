import numpy as np

from pbsens.csvio import (
    read_records_csv,
    read_sensitivity_csv,
    read_steps_csv,
    report_from_json,
    report_to_json,
    save_report,
    sensitivity_columns,
    write_records_csv,
    write_sensitivity_csv,
    write_steps_csv,
)
from pbsens.models import get_model
from pbsens.ode import integrate, uniform_grid
from pbsens.sensitivity import run_pbsr
from pbsens.studies import StudyReport, compare_study


def test_sensitivity_columns_column_major():
    assert sensitivity_columns(2, 3) == ["S_1_1", "S_2_1", "S_1_2", "S_2_2", "S_1_3", "S_2_3"]


def test_sensitivity_csv_round_trip_exact(tmp_path):
    model = get_model("chua")
    grid = uniform_grid(0.0, 1.0, 20)
    traj = integrate(model.system, model.p, model.x0, grid)
    sens = run_pbsr(model.system, traj)
    path = tmp_path / "out.csv"
    write_sensitivity_csv(path, traj, sens)

    times, states, mats, flags = read_sensitivity_csv(path)
    assert np.array_equal(times, traj.times)
    assert np.array_equal(states, traj.states)
    assert np.array_equal(mats, sens.matrices)
    assert np.array_equal(flags, sens.equilibrium_flags)


def test_sensitivity_csv_shape_contract(tmp_path):
    model = get_model("chua")
    grid = uniform_grid(0.0, 1.0, 10)
    traj = integrate(model.system, model.p, model.x0, grid)
    sens = run_pbsr(model.system, traj)
    path = tmp_path / "out.csv"
    write_sensitivity_csv(path, traj, sens)
    lines = path.read_text().strip().splitlines()
    n_x, n_p = 3, 2
    assert len(lines) == 1 + grid.size  # header + K+1 rows
    assert len(lines[1].split(",")) == 1 + n_x + n_x * n_p + 2


def test_steps_csv_round_trip(tmp_path):
    report = compare_study("scalar_decay", uniform_grid(0.0, 1.0, 10))
    path = tmp_path / "steps.csv"
    write_steps_csv(path, report.steps)
    assert read_steps_csv(path) == report.steps


def test_records_csv_round_trip(tmp_path):
    records = [
        {"n": 5, "algorithm": "exp", "runtime": 0.1230000001},
        {"n": 10, "algorithm": "fs", "runtime": 3.5e-07},
    ]
    path = tmp_path / "recs.csv"
    write_records_csv(path, records, ["n", "algorithm", "runtime"])
    back = read_records_csv(path, int_columns=("n",), str_columns=("algorithm",))
    assert back == records


def test_report_json_round_trip():
    report = StudyReport(
        kind="convergence",
        model="scalar_decay",
        metadata={"levels": 3},
        convergence=[{"dt_max": 0.1, "max_error": 1e-3}],
        slope=2.01,
    )
    back = report_from_json(report_to_json(report))
    assert back == report


def test_save_report_writes_tables(tmp_path):
    report = compare_study("scalar_decay", uniform_grid(0.0, 1.0, 5))
    written = save_report(report, tmp_path, "compare_test", "csv")
    names = {p.name for p in written}
    assert names == {"compare_test.json", "compare_test_steps.csv"}
    for p in written:
        assert p.exists()
