"""Power-law fits used by every decay/growth exponent check."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class LogLogFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def loglog_fit(xs, ys) -> LogLogFit:
    """Least squares fit of log y = slope * log x + intercept."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    if xs.size < 4:
        raise ValueError(f"need at least 4 points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(xs * ys)):
        raise ValueError("log-log fit needs finite positive data")
    lx, ly = np.log(xs), np.log(ys)
    if np.ptp(lx) == 0:
        raise ValueError("degenerate abscissae")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return LogLogFit(float(slope), float(intercept), float(r2))


def linear_fit(xs, ys) -> tuple[float, float]:
    """Ordinary least squares line; returns (slope, intercept)."""
    slope, intercept = np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)
    return float(slope), float(intercept)


def running_max(ts, ys, window: float, stride: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Maxima of ``ys`` over windows [s, s + window) stepped by ``stride``.

    Returns window mid-times and maxima. Used to fit the envelope of oscillating
    series, where a fit through raw samples depends on where the samples fall in
    the oscillation.
    """
    ts = np.asarray(ts, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ts.shape != ys.shape or ts.ndim != 1:
        raise ValueError("ts and ys must be 1-d arrays of equal length")
    if window <= 0:
        raise ValueError("window must be positive")
    stride = window / 4 if stride is None else stride
    starts = np.arange(ts[0], ts[-1] - window + 1e-9 * window, stride)
    mids, peaks = [], []
    for s in starts:
        sel = (ts >= s) & (ts < s + window)
        if np.any(sel):
            mids.append(s + window / 2)
            peaks.append(ys[sel].max())
    return np.array(mids), np.array(peaks)
