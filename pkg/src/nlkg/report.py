"""Experiment reports: tables, fitted exponents and acceptance checks."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


@dataclass
class Check:
    rule: str
    measured: float
    target: str
    passed: bool
    r2: float | None = None
    note: str = ""

    def line(self) -> str:
        conf = f" r2={self.r2:.4f}" if self.r2 is not None else ""
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.rule}: measured={self.measured:.6g} target {self.target}{conf}"


@dataclass
class ExperimentReport:
    name: str
    config: dict[str, Any] = field(default_factory=dict)
    tables: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    fits: dict[str, dict[str, float]] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)
    wall_clock: float = 0.0

    def add_table(self, name: str, rows: list[dict[str, Any]]) -> None:
        self.tables[name] = rows

    def add_fit(self, name: str, fit, **extra) -> None:
        self.fits[name] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2, **extra}

    def check(self, rule: str, measured: float, lo: float | None = None,
              hi: float | None = None, r2: float | None = None, note: str = "") -> Check:
        """Record a bound check ``lo <= measured <= hi``."""
        measured = float(measured)
        ok = bool(np.isfinite(measured))
        if lo is not None:
            ok &= measured >= lo
        if hi is not None:
            ok &= measured <= hi
        if lo is not None and hi is not None:
            target = f"in [{lo:.6g}, {hi:.6g}]"
        elif lo is not None:
            target = f">= {lo:.6g}"
        else:
            target = f"<= {hi:.6g}"
        c = Check(rule, measured, target, ok, r2, note)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [f"experiment: {self.name}", f"wall clock: {self.wall_clock:.1f} s"]
        for name, fit in self.fits.items():
            lines.append(f"fit {name}: slope={fit['slope']:.5f} intercept={fit['intercept']:.5f} r2={fit['r2']:.5f}")
        lines.extend(c.line() for c in self.checks)
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "config": self.config,
            "fits": self.fits,
            "checks": [c.__dict__ for c in self.checks],
            "metadata": self.metadata,
            "wall_clock": self.wall_clock,
            "passed": self.passed,
            "tables": sorted(self.tables),
        }

    def write(self, directory: str | os.PathLike) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, rows in self.tables.items():
            write_atomic(directory / f"{name}.csv", rows_to_csv(rows))
        write_atomic(directory / "report.json", json.dumps(self.to_dict(), indent=2, default=_json_default))
        write_atomic(directory / "summary.txt", self.summary() + "\n")
        return directory


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def rows_to_csv(rows: list[dict[str, Any]], header: list[str] | None = None) -> str:
    buf = io.StringIO()
    if header is None:
        header = list(rows[0]) if rows else []
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
