"""Snapshot files with a JSON manifest, and slice CSVs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import SpatialGrid
from .hyperbolic import HyperbolicSlice
from .report import rows_to_csv, write_atomic
from .solver import Trajectory

HEADER_KEYS = ("t", "n", "L", "dt", "beta0", "beta_family", "epsilon")


def _header(traj: Trajectory, t: float, epsilon: float | None) -> dict:
    coeffs = traj.metadata.get("coefficients", {})
    return {"t": float(t), "n": traj.grid.n, "L": traj.grid.length, "dt": traj.metadata.get("dt"),
            "beta0": coeffs.get("beta0"), "beta_family": coeffs.get("family"), "epsilon": epsilon}


def write_trajectory(traj: Trajectory, directory, epsilon: float | None = None, fmt: str = "csv") -> Path:
    """One file per snapshot (columns x, u, ut, utt) plus ``manifest.json``.

    CSV files start with a ``# key=value`` header line; npz files carry the same
    header fields as scalar entries.
    """
    if fmt not in ("csv", "npz"):
        raise ValueError("fmt must be 'csv' or 'npz'")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    x = traj.grid.x
    files = []
    for k in range(len(traj)):
        st = traj.state(k)
        a = traj.accel(k)
        head = _header(traj, st.t, epsilon)
        name = f"snapshot_{k:05d}.{fmt}"
        if fmt == "csv":
            lines = ["# " + " ".join(f"{key}={head[key]}" for key in HEADER_KEYS), "x,u,ut,utt"]
            lines += [",".join(repr(float(v)) for v in row) for row in zip(x, st.u, st.v, a)]
            write_atomic(directory / name, "\n".join(lines) + "\n")
        else:
            np.savez(directory / name, x=x, u=st.u, ut=st.v, utt=a,
                     **{key: np.asarray(head[key] if head[key] is not None else np.nan) for key in HEADER_KEYS})
        files.append({"file": name, "t": st.t})
    meta = {k: v for k, v in traj.metadata.items() if k != "hamiltonian"}
    manifest = {"grid": {"n": traj.grid.n, "L": traj.grid.length}, "epsilon": epsilon,
                "format": fmt, "snapshots": files, "metadata": meta}
    write_atomic(directory / "manifest.json", json.dumps(manifest, indent=2))
    return directory


def read_trajectory(directory) -> Trajectory:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    grid = SpatialGrid(int(manifest["grid"]["n"]), float(manifest["grid"]["L"]))
    traj = Trajectory(grid, metadata=manifest.get("metadata", {}), spectral_tol=0.0)
    for entry in manifest["snapshots"]:
        path = directory / entry["file"]
        if manifest["format"] == "csv":
            data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2)
            u, v, a = data[:, 1], data[:, 2], data[:, 3]
        else:
            with np.load(path) as z:
                u, v, a = z["u"], z["ut"], z["utt"]
        traj.append(float(entry["t"]), u, v, a)
    return traj


def read_snapshot_header(path) -> dict:
    """Header fields of a CSV snapshot file."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise ValueError(f"{path} has no header line")
    out = {}
    for item in first[1:].split():
        key, value = item.split("=", 1)
        out[key] = value
    return out


def write_slice_csv(s: HyperbolicSlice, path) -> Path:
    """Columns y, u, ut, ux, w, wrho after a ``# rho=...`` header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_atomic(path, f"# rho={s.rho!r}\n" + rows_to_csv(s.to_rows()))
    return path


def read_slice_csv(path, ygrid: SpatialGrid) -> HyperbolicSlice:
    with open(path) as fh:
        rho = float(fh.readline().split("=", 1)[1])
        rows = list(csv.DictReader(fh))
    col = {k: np.array([float(r[k]) for r in rows]) for k in ("y", "u", "ut", "ux", "w", "wrho")}
    if col["y"].size != ygrid.n or not np.allclose(col["y"], ygrid.x, rtol=0, atol=1e-12):
        raise ValueError("slice file does not match the y-grid")
    return HyperbolicSlice(rho, ygrid, col["u"], col["ut"], col["ux"], col["w"], col["wrho"])
