"""Oscillation variables W+, amplitude b(y), limit profile a(y) and the log-phase fit."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fitting import linear_fit, loglog_fit
from .grid import SpatialGrid, lp_project_low
from .hyperbolic import HyperbolicSlice

log = logging.getLogger(__name__)


def rho_sequence(rho0: float = 4.0, per_dyad: int = 8, count: int = 41, rho_max: float | None = None) -> np.ndarray:
    """Geometric sequence rho_m = rho0 2^{m/per_dyad}, m < count, capped at rho_max."""
    rhos = rho0 * 2.0 ** (np.arange(count) / per_dyad)
    if rho_max is not None:
        rhos = rhos[rhos <= rho_max * (1 + 1e-12)]
    return rhos


def low_freq_profile(s: HyperbolicSlice, s_prev: HyperbolicSlice, s_next: HyperbolicSlice,
                     sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """P_{<= rho^sigma} w and its rho-derivative.

    Each slice is projected at its own cutoff rho^sigma, then the projected fields are
    differenced, so the drift of the cutoff is part of the derivative.
    """
    h = s.rho - s_prev.rho
    if h <= 0 or abs((s_next.rho - s.rho) - h) > 1e-9 * s.rho:
        raise ValueError("slices must be equispaced in rho")
    g = s.ygrid
    P = [lp_project_low(sl.w, g, sl.rho**sigma) for sl in (s_prev, s, s_next)]
    return P[1], (P[2] - P[0]) / (2 * h)


def w_plus(Pw: np.ndarray, dPw: np.ndarray, rho: float) -> np.ndarray:
    """W+ = e^{-i rho} (dPw + i Pw)."""
    return np.exp(-1j * rho) * (dPw + 1j * Pw)


def w_minus(Pw: np.ndarray, dPw: np.ndarray, rho: float) -> np.ndarray:
    """W- = e^{+i rho} (dPw - i Pw)."""
    return np.exp(1j * rho) * (dPw - 1j * Pw)


def reconstruct_Pw(W: np.ndarray, rho: float) -> np.ndarray:
    return np.imag(np.exp(1j * rho) * W)


def m_quantity(Pw: np.ndarray, dPw: np.ndarray) -> np.ndarray:
    """M = (P w)^2 + (d_rho P w)^2."""
    return Pw**2 + dPw**2


@dataclass
class AsymptoticsRecord:
    """W+ over a rho-sequence (rows) and the y-grid (columns), plus derived limits."""

    ygrid: SpatialGrid
    rholist: np.ndarray
    Wplus: np.ndarray
    sigma: float
    beta0: float = 0.0
    W_raw: np.ndarray | None = None   # unprojected e^{-i rho}(w_rho + i w)
    M: np.ndarray | None = None
    hf_sup: np.ndarray | None = None  # sup_y |P_{> rho^sigma} w|
    w_sup: np.ndarray | None = None
    b: np.ndarray | None = None
    a: np.ndarray | None = None
    phase_coeff: np.ndarray | None = None
    nu_fit: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ylist(self) -> np.ndarray:
        return self.ygrid.x

    def column(self, y0: float) -> int:
        return int(np.argmin(np.abs(self.ylist - y0)))

    def to_rows(self, phases: np.ndarray | None = None) -> list[dict]:
        rows = []
        ph = phases if phases is not None else unwrap_phase(self.Wplus)[0]
        for i, r in enumerate(self.rholist):
            for j, y in enumerate(self.ylist):
                W = self.Wplus[i, j]
                rows.append({"rho": r, "y": y, "re_W": W.real, "im_W": W.imag,
                             "abs_W": abs(W), "phase": ph[i, j]})
        return rows

    def summary(self) -> dict:
        out = {"sigma": self.sigma, "beta0": self.beta0, "nu": self.nu_fit,
               "rho_min": float(self.rholist[0]), "rho_max": float(self.rholist[-1])}
        if self.b is not None:
            out["b"] = self.b.tolist()
        if self.a is not None:
            out["a_re"] = self.a.real.tolist()
            out["a_im"] = self.a.imag.tolist()
        if self.phase_coeff is not None:
            out["phase_coeff"] = [None if not np.isfinite(v) else float(v) for v in self.phase_coeff]
        out["y"] = self.ylist.tolist()
        out.update(self.diagnostics)
        return out


def build_record(triples: list[tuple[HyperbolicSlice, HyperbolicSlice, HyperbolicSlice]],
                 sigma: float = 0.3, beta0: float = 0.0) -> AsymptoticsRecord:
    """Assemble W+ from (rho - h, rho, rho + h) slice triples in increasing rho."""
    rhos = np.array([tr[1].rho for tr in triples])
    if np.any(np.diff(rhos) <= 0):
        raise ValueError("rho values must increase")
    g = triples[0][1].ygrid
    W, Wr, M, hf, ws = [], [], [], [], []
    for prev, cur, nxt in triples:
        Pw, dPw = low_freq_profile(cur, prev, nxt, sigma)
        W.append(w_plus(Pw, dPw, cur.rho))
        Wr.append(w_plus(cur.w, cur.wrho, cur.rho))
        M.append(m_quantity(Pw, dPw))
        hf.append(float(np.max(np.abs(cur.w - Pw))))
        ws.append(float(np.max(np.abs(cur.w))))
    return AsymptoticsRecord(g, rhos, np.array(W), sigma, beta0, np.array(Wr), np.array(M),
                             np.array(hf), np.array(ws))


def last_dyads(rholist: np.ndarray, dyads: float) -> np.ndarray:
    return rholist >= rholist[-1] / 2.0**dyads * (1 - 1e-12)


def amplitude_b(rec: AsymptoticsRecord, y0: float = 0.0, flag_tol: float = 0.10) -> np.ndarray:
    """b(y) = |W+| at the largest rho, with convergence diagnostics.

    Diagnostics: relative variation of |W+| over the last dyad (where b is
    significant), windowed L^2_y differences of |W+| between rho and 2 rho, and
    the cutoff-independence comparison with the unprojected amplitude at ``y0``.
    """
    if rec.rholist.size < 8:
        raise ValueError("need at least 8 rho samples")
    if rec.rholist[-1] < 2 * rec.rholist[0] * (1 - 1e-12):
        raise ValueError("rho samples must span at least one dyad")
    A = np.abs(rec.Wplus)
    b = A[-1].copy()
    sig = significant(b)
    sel = last_dyads(rec.rholist, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.max(np.abs(A[sel] - b), axis=0) / b
    worst = float(np.max(var[sig])) if np.any(sig) else 0.0
    # windowed L^2_y differences of |W+| between dyadically spaced rho
    cauchy = []
    for i in range(rec.rholist.size):
        k = np.searchsorted(rec.rholist, 2 * rec.rholist[i] * (1 - 1e-12))
        if k < rec.rholist.size:
            d = math.sqrt(np.sum((A[k] - A[i]) ** 2) * rec.ygrid.spacing)
            cauchy.append((float(rec.rholist[i]), float(rec.rholist[k]), d))
    j0 = rec.column(y0)
    raw = float(np.abs(rec.W_raw[-1, j0])) if rec.W_raw is not None else float("nan")
    rec.b = b
    rec.diagnostics.update({
        "b_last_dyad_variation": worst,
        "b_converged": worst <= flag_tol,
        "b_y0": float(b[j0]),
        "b_unprojected_y0": raw,
        "cutoff_rel_diff_y0": abs(raw - b[j0]) / b[j0] if b[j0] > 0 else 0.0,
        "b_l2_cauchy": cauchy,
    })
    if worst > flag_tol:
        log.warning("|W+| varies by %.3g over the last dyad", worst)
    return b


def significant(b: np.ndarray, frac: float = 0.1) -> np.ndarray:
    top = np.max(b) if b.size else 0.0
    return b >= frac * top if top > 0 else np.zeros_like(b, dtype=bool)


class PhaseUnwrapError(RuntimeError):
    pass


def unwrap_phase(W: np.ndarray, jump: float = math.pi / 2) -> tuple[np.ndarray, np.ndarray]:
    """Unwrap arg W along rho (axis 0); also flag columns with a step beyond ``jump``."""
    ph = np.unwrap(np.angle(W), axis=0)
    flags = np.any(np.abs(np.diff(ph, axis=0)) > jump, axis=0) if W.shape[0] > 1 else np.zeros(W.shape[1], bool)
    return ph, flags


def phase_fit(rec: AsymptoticsRecord, reference: np.ndarray | None = None, dyads: float = 2.0,
              columns=None) -> np.ndarray:
    """Slope c(y) of the unwrapped phase of W+ against log rho over the last ``dyads``.

    ``reference``: optional W+ of a linear run with the same data and sampling; the
    phase of W+ / W+_ref is fitted instead, removing linear transients common to both.
    Columns with b < 0.1 max b are set to NaN.
    """
    if rec.b is None:
        amplitude_b(rec)
    W = rec.Wplus if reference is None else rec.Wplus / reference
    sel = last_dyads(rec.rholist, dyads)
    if sel.sum() < 4:
        raise ValueError("fewer than 4 rho samples in the fit window")
    ph, flags = unwrap_phase(W[sel])
    sig = significant(rec.b)
    cols = range(W.shape[1]) if columns is None else columns
    coeff = np.full(W.shape[1], np.nan)
    lr = np.log(rec.rholist[sel])
    bad = []
    for j in cols:
        if not sig[j]:
            continue
        if flags[j]:
            bad.append(j)
            continue
        coeff[j] = linear_fit(lr, ph[:, j])[0]
    if bad:
        rec.diagnostics["phase_unwrap_flagged"] = len(bad)
        if columns is not None:
            raise PhaseUnwrapError(f"phase steps beyond pi/2 at columns {bad}")
    rec.phase_coeff = coeff
    return coeff


def phase_fit_synthetic(rholist: np.ndarray, W: np.ndarray, dyads: float = 2.0) -> float:
    """Log-phase slope of a single W+(rho) sequence."""
    sel = last_dyads(np.asarray(rholist), dyads)
    ph, flags = unwrap_phase(np.asarray(W)[sel, None])
    if flags[0]:
        raise PhaseUnwrapError("phase step beyond pi/2")
    return linear_fit(np.log(np.asarray(rholist)[sel]), ph[:, 0])[0]


def correction_phase(beta0: float, b: np.ndarray, y: np.ndarray, rho) -> np.ndarray:
    """(3 beta0 / 8) b^2 / cosh(y) log(rho)."""
    return 3.0 * beta0 / 8.0 * b**2 / np.cosh(y) * np.log(rho)


def extract_a(rec: AsymptoticsRecord, dyads: float = 2.0) -> tuple[np.ndarray, float]:
    """a(y) from the phase-corrected W+ at the largest rho, and the fitted remainder decay nu.

    The remainder |a - W+ e^{+i theta(rho)}| is fitted to rho^{-nu} over the last
    ``dyads`` (excluding the final sample where it vanishes by construction) at the
    columns where b is significant; nu is the median over those columns.
    """
    if rec.b is None:
        amplitude_b(rec)
    y = rec.ylist
    theta = correction_phase(rec.beta0, rec.b[None, :], y[None, :], rec.rholist[:, None])
    corrected = rec.Wplus * np.exp(1j * theta)
    a = corrected[-1].copy()
    sel = last_dyads(rec.rholist, dyads)
    sel[-1] = False
    sig = significant(rec.b)
    nus = []
    for j in np.flatnonzero(sig):
        r = np.abs(a[j] - corrected[sel, j])
        if np.all(r > 0):
            nus.append(-loglog_fit(rec.rholist[sel], r).slope)
    nu = float(np.median(nus)) if nus else float("nan")
    rec.a, rec.nu_fit = a, nu
    if not nu > 0:
        rec.diagnostics["nu_nondecay"] = True
        log.warning("remainder does not decay (nu=%s)", nu)
    return a, nu


def predicted_u(a: complex, b: float, beta0: float, rho, y: float):
    """t^{-1/2} Im(exp(i(rho - (3/8) beta0 |a|^2/cosh(y) log rho)) a)."""
    rho = np.asarray(rho, dtype=float)
    t = rho * np.cosh(y)
    phase = rho - 3.0 * beta0 / 8.0 * abs(a) ** 2 / np.cosh(y) * np.log(rho)
    return np.imag(np.exp(1j * phase) * a) / np.sqrt(t)


def asymptotic_reconstruction(rec: AsymptoticsRecord, sampler, rho, y: float):
    """(u_pred, u_actual, sqrt(t)|u_pred - u_actual|) at the points (rho, y).

    ``sampler`` is a callable (t, x) -> dict with key ``u`` (e.g. a PointSampler), or
    an array of already-sampled values.
    """
    if rec.a is None:
        extract_a(rec)
    j = rec.column(y)
    yj = float(rec.ylist[j])
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    t, x = rho * np.cosh(yj), rho * np.sinh(yj)
    pred = predicted_u(rec.a[j], rec.b[j], rec.beta0, rho, yj)
    actual = sampler(t, x)["u"] if callable(sampler) else np.asarray(sampler, dtype=float)
    return pred, actual, np.sqrt(t) * np.abs(pred - actual)
