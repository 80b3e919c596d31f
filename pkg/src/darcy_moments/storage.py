"""Binary-free serialization: CSV tables plus a JSON metadata file.

CSV contract (shared with the CLI): comma separator, '.' decimal point,
one header row, LF line endings, floats written with shortest round-trip
formatting so identical runs produce byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import StudyConfig, config_from_dict, config_to_dict
from .fem import FeFunction
from .moment_recursion import Correlation, CorrectionTable
from .problem import setup_problem
from .sparse_grid import smolyak_build

FORMAT_NAME = "correction-table-v1"


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, comment: str | None = None) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    header = None
    rows = []
    with open(Path(path), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    if header is None:
        raise OSError(f"{path} has no header row")
    return header, rows


def save_fe_function(fn: FeFunction, path) -> None:
    """Dump one FE function as (x, value) rows over the dof coordinates."""
    coords = fn.space.dof_coords
    if fn.space.mesh.d == 1:
        rows = zip(coords, fn.coeffs)
        write_csv(path, ["x", "value"], rows)
    else:
        rows = ((c[0], c[1], v) for c, v in zip(coords, fn.coeffs))
        write_csv(path, ["x", "y", "value"], rows)


def _corr_file(k: int, i: int) -> str:
    return f"corr_k{k}_i{i}.csv"


def save_table(table: CorrectionTable, out_dir) -> None:
    """Write a CorrectionTable: manifest.csv + one CSV per correlation
    (node coordinates, then dof coefficients) + meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_rows = []
    for (k, i) in sorted(table.entries):
        corr = table.entries[(k, i)]
        fname = "" if corr.is_zero else _corr_file(k, i)
        manifest_rows.append((k, i, corr.arity, corr.is_zero, corr.n_nodes,
                              fname))
        if corr.is_zero:
            continue
        n_dofs = table.space.n_dofs
        coeff_cols = [f"c{j}" for j in range(n_dofs)]
        if corr.arity == 0:
            write_csv(out / fname, coeff_cols, [corr.fe_function.coeffs])
        else:
            ycols = [f"y{j + 1}" for j in range(corr.arity)]
            pts = corr.interp.node_points
            rows = (tuple(pts[r]) + tuple(corr.interp.values[r])
                    for r in range(corr.interp.n_nodes))
            write_csv(out / fname, ycols + coeff_cols, rows)
    write_csv(out / "manifest.csv",
              ["k", "i", "arity", "is_zero", "n_nodes", "file"],
              manifest_rows)
    meta = {
        "format": FORMAT_NAME,
        "config": config_to_dict(table.config),
        "h": table.space.mesh.h,
        "solve_count": table.solve_count,
        "skipped_odd": table.skipped_odd,
    }
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_table(in_dir) -> CorrectionTable:
    """Rebuild a CorrectionTable from `save_table` output; node coordinates
    round-trip exactly, so the interpolants are reconstructed bit-identically."""
    src = Path(in_dir)
    with open(src / "meta.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format") != FORMAT_NAME:
        raise OSError(f"{src} does not hold a {FORMAT_NAME} dump")
    config = config_from_dict(meta["config"])
    problem = setup_problem(config)
    table = CorrectionTable(config, problem.space, problem.family,
                            problem.kernel)
    table.solve_count = meta["solve_count"]
    table.skipped_odd = list(meta["skipped_odd"])

    _, manifest = read_csv(src / "manifest.csv")
    L = config.sparse.L
    for row in manifest:
        k, i, arity = int(row[0]), int(row[1]), int(row[2])
        is_zero = row[3] == "1"
        fname = row[5]
        if is_zero:
            table[(k, i)] = Correlation(k - i, i, problem.space,
                                        problem.family, L, is_zero=True)
            continue
        _, rows = read_csv(src / fname)
        if arity == 0:
            coeffs = np.array([float(v) for v in rows[0]])
            table[(k, i)] = Correlation(
                k - i, 0, problem.space, problem.family, L,
                fe_function=FeFunction(problem.space, coeffs))
            continue
        lookup = {}
        for r in rows:
            key = tuple(float(v) for v in r[:arity])
            lookup[key] = np.array([float(v) for v in r[arity:]])
        interp = smolyak_build(problem.family, L, arity,
                               lambda y: lookup[tuple(float(c) for c in y)])
        table[(k, i)] = Correlation(k - i, arity, problem.space,
                                    problem.family, L, interp=interp)
    return table


def save_mc_estimate(est, path) -> None:
    """Dump a Monte Carlo estimate as (x, mean, stderr) rows."""
    space = est.mean.space
    coords = space.dof_coords
    if space.mesh.d == 1:
        rows = zip(coords, est.mean.coeffs, est.stderr)
        write_csv(path, ["x", "mean", "stderr"], rows)
    else:
        rows = ((c[0], c[1], m, s) for c, m, s
                in zip(coords, est.mean.coeffs, est.stderr))
        write_csv(path, ["x", "y", "mean", "stderr"], rows)
