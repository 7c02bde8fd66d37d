"""CSV and JSON serialization for trajectories, sensitivities and study reports.

CSV schema: a mandatory header row; times in the first column; sensitivity
entries flattened column-major, entry ``S[l][i]`` (1-based state ``l``,
parameter ``i``) in column ``S_l_i``.  Floats are written with ``repr`` so
every file parses back to bit-identical values.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .ode import Trajectory
from .sensitivity import SensitivityTrajectory
from .studies import StudyReport

__all__ = [
    "sensitivity_columns",
    "write_sensitivity_csv",
    "read_sensitivity_csv",
    "write_steps_csv",
    "read_steps_csv",
    "write_records_csv",
    "read_records_csv",
    "report_to_json",
    "report_from_json",
]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def sensitivity_columns(n_x: int, n_p: int) -> list[str]:
    """Column names for a flattened sensitivity matrix, column-major."""
    return [f"S_{l}_{i}" for i in range(1, n_p + 1) for l in range(1, n_x + 1)]


def write_sensitivity_csv(path, traj: Trajectory, sens: SensitivityTrajectory) -> None:
    """Write one row per grid point: t, states, sensitivities, eq_flag, dt."""
    n_x = traj.states.shape[1]
    n_p = sens.matrices.shape[2]
    header = (["t"] + [f"x_{l}" for l in range(1, n_x + 1)]
              + sensitivity_columns(n_x, n_p) + ["eq_flag", "dt"])
    steps = np.concatenate([[0.0], np.diff(traj.times)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(traj)):
            row = [_fmt(traj.times[k])]
            row += [_fmt(v) for v in traj.states[k]]
            row += [_fmt(v) for v in sens.matrices[k].flatten(order="F")]
            row.append(_fmt(bool(sens.equilibrium_flags[k])))
            row.append(_fmt(steps[k]))
            writer.writerow(row)


def read_sensitivity_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Parse a sensitivity CSV back into (times, states, matrices, flags)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    n_x = sum(1 for name in header if name.startswith("x_"))
    n_s = sum(1 for name in header if name.startswith("S_"))
    if n_x == 0 or n_s % max(n_x, 1) != 0:
        raise ValueError(f"malformed sensitivity CSV header: {header}")
    n_p = n_s // n_x
    times = np.array([float(r[0]) for r in rows])
    states = np.array([[float(v) for v in r[1:1 + n_x]] for r in rows])
    flat = np.array([[float(v) for v in r[1 + n_x:1 + n_x + n_s]] for r in rows])
    mats = flat.reshape((len(rows), n_x, n_p), order="F")
    flags = np.array([r[1 + n_x + n_s] == "1" for r in rows])
    return times, states, mats, flags


def write_steps_csv(path, steps: list[dict]) -> None:
    """Write compare-study per-step records (t, re_*, eq_flag)."""
    if not steps:
        raise ValueError("no step records to write")
    header = list(steps[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in steps:
            writer.writerow([_fmt(row[key]) for key in header])


def read_steps_csv(path) -> list[dict]:
    """Parse compare-study records; inverse of :func:`write_steps_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        out = []
        for r in reader:
            if not r:
                continue
            row: dict = {}
            for key, value in zip(header, r):
                row[key] = (value == "1") if key == "eq_flag" else float(value)
            out.append(row)
    return out


def write_records_csv(path, records: list[dict], columns: list[str]) -> None:
    """Write homogeneous record dicts (convergence or scaling tables)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in records:
            writer.writerow([
                row[c] if isinstance(row[c], str) else _fmt(row[c]) for c in columns
            ])


def read_records_csv(path, int_columns: tuple[str, ...] = (), str_columns: tuple[str, ...] = ()) -> list[dict]:
    """Parse a records CSV written by :func:`write_records_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        out = []
        for r in reader:
            if not r:
                continue
            row = {}
            for key, value in zip(header, r):
                if key in str_columns:
                    row[key] = value
                elif key in int_columns:
                    row[key] = int(value)
                else:
                    row[key] = float(value)
            out.append(row)
    return out


def report_to_json(report: StudyReport) -> str:
    return json.dumps(dataclasses.asdict(report), indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def report_from_json(text: str) -> StudyReport:
    return StudyReport(**json.loads(text))


def save_report(report: StudyReport, directory, stem: str, fmt: str = "csv") -> list[Path]:
    """Write a report's tables under ``directory``; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    json_path = directory / f"{stem}.json"
    json_path.write_text(report_to_json(report))
    written.append(json_path)

    if fmt == "csv":
        if report.steps:
            path = directory / f"{stem}_steps.csv"
            write_steps_csv(path, report.steps)
            written.append(path)
        if report.convergence:
            path = directory / f"{stem}_convergence.csv"
            write_records_csv(path, report.convergence, ["dt_max", "max_error"])
            written.append(path)
        if report.scaling:
            path = directory / f"{stem}_scaling.csv"
            write_records_csv(path, report.scaling, ["n", "algorithm", "runtime"])
            written.append(path)
    return written
