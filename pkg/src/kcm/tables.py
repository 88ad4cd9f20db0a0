"""CSV readers and writers for study outputs.

Every file has a header row. Floats are written with ``repr`` so that values
round-trip exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .greedy import GreedyResult
from .integrate import Dataset, Trajectory

SCHEMAS = {
    "dataset": "x1..xd,y1..ym",
    "trajectory": "t,x1..xd,y1..ym",
    "greedy": "step,index,power",
    "residual": "input,residual (d=1) or x1,x2,value (d=2, row-major grid)",
    "surface": "x1,x2,value (row-major grid)",
    "convergence": "N,e_N",
    "comparison": "t,err_abs,err_rel",
    "taylor": "kernel,<monomials in graded-lex order, e.g. 1,x1,x2,x1^2,x1*x2,...>",
    "summary": "check,expected,measured,tolerance,pass",
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of a purely numeric CSV file."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return header, data


def coordinate_names(d: int, m: int) -> list[str]:
    return [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(m)]


def write_dataset(path, data: Dataset) -> Path:
    d, m = data.X.shape[1], data.Y.shape[1]
    return write_csv(path, coordinate_names(d, m), np.hstack([data.X, data.Y]))


def read_dataset(path) -> Dataset:
    header, arr = read_csv(path)
    d = sum(1 for h in header if h.startswith("x"))
    if d == 0 or d == len(header):
        raise ValueError(f"{path}: expected x and y columns, got {header}")
    return Dataset(arr[:, :d], arr[:, d:])


def write_trajectory(path, traj: Trajectory, d: int) -> Path:
    m = traj.states.shape[1] - d
    return write_csv(path, ["t"] + coordinate_names(d, m), np.column_stack([traj.times, traj.states]))


def write_greedy(path, result: GreedyResult) -> Path:
    rows = [(n + 1, idx, result.power_history[n]) for n, idx in enumerate(result.indices)]
    return write_csv(path, ["step", "index", "power"], rows)


def write_residual(path, grid, values) -> Path:
    grid = np.atleast_2d(grid)
    if grid.shape[1] == 1:
        return write_csv(path, ["input", "residual"], np.column_stack([grid[:, 0], values]))
    return write_surface(path, grid, values)


def write_surface(path, grid, values) -> Path:
    grid = np.atleast_2d(grid)
    if grid.shape[1] != 2:
        raise ValueError("surfaces need 2-D grid points")
    return write_csv(path, ["x1", "x2", "value"], np.column_stack([grid, values]))


def write_convergence(path, sizes, errors) -> Path:
    rows = [(int(n), float(e)) for n, e in zip(sizes, errors)]
    return write_csv(path, ["N", "e_N"], rows)


def write_comparison(path, times, abs_err, rel_err) -> Path:
    return write_csv(path, ["t", "err_abs", "err_rel"], np.column_stack([times, abs_err, rel_err]))


def monomial_name(alpha: Sequence[int]) -> str:
    parts = []
    for i, a in enumerate(alpha):
        if a == 1:
            parts.append(f"x{i + 1}")
        elif a > 1:
            parts.append(f"x{i + 1}^{a}")
    return "*".join(parts) if parts else "1"


def write_taylor(path, tables: dict[str, list[tuple[tuple[int, ...], float]]]) -> Path:
    """One row per labelled expansion; all expansions must share their monomials."""
    if not tables:
        raise ValueError("no Taylor tables to write")
    first = next(iter(tables.values()))
    alphas = [a for a, _ in first]
    rows = []
    for label, coeffs in tables.items():
        if [a for a, _ in coeffs] != alphas:
            raise ValueError(f"monomials of {label!r} differ from the first table")
        rows.append([label] + [c for _, c in coeffs])
    return write_csv(path, ["kernel"] + [monomial_name(a) for a in alphas], rows)


def read_taylor(path) -> dict[str, dict[str, float]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    return {r[0]: {h: float(v) for h, v in zip(header[1:], r[1:])} for r in rows[1:]}


def write_summary(path, checks) -> Path:
    rows = [(c.name, c.expected, c.measured, c.tolerance, c.passed) for c in checks]
    return write_csv(path, ["check", "expected", "measured", "tolerance", "pass"], rows)
