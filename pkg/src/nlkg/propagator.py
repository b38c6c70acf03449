"""Exact free Klein-Gordon flows and weighted local-decay operator norms."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .fitting import loglog_fit
from .grid import SpatialGrid, Spectrum, apply_multiplier, bump, japanese
from .report import ExperimentReport

log = logging.getLogger(__name__)


class LinearFlowKind(enum.Enum):
    HALF_PLUS = "half_plus"    # e^{+it<D>}
    HALF_MINUS = "half_minus"  # e^{-it<D>}
    COS_FLOW = "cos_flow"      # cos(t<D>)
    SINC_FLOW = "sinc_flow"    # sin(t<D>)/<D>


def flow_multiplier(kind: LinearFlowKind | str, t: float, xi: np.ndarray) -> np.ndarray:
    kind = LinearFlowKind(kind)
    jx = japanese(xi)
    if kind is LinearFlowKind.HALF_PLUS:
        return np.exp(1j * t * jx)
    if kind is LinearFlowKind.HALF_MINUS:
        return np.exp(-1j * t * jx)
    if kind is LinearFlowKind.COS_FLOW:
        return np.cos(t * jx)
    return np.sin(t * jx) / jx


def linear_flow(obj, t: float, kind: LinearFlowKind | str | None = None,
                grid: SpatialGrid | None = None):
    """Apply an exact free flow for time ``t``.

    * ``Spectrum``: multiply by the multiplier of ``kind``.
    * sample array (needs ``grid``): same, returned in physical space.
    * ``FieldState``: the full free Klein-Gordon group acting on (u, u_t); ``kind``
      must be omitted.
    """
    if not math.isfinite(t):
        raise ValueError("flow time must be finite")
    from .solver import FieldState  # circular at import time

    if isinstance(obj, FieldState):
        if kind is not None:
            raise ValueError("FieldState evolves under the full free group; omit kind")
        return free_evolve(obj, t)
    if kind is None:
        raise ValueError("kind is required for spectra and sample arrays")
    if isinstance(obj, Spectrum):
        return apply_multiplier(obj, lambda xi: flow_multiplier(kind, t, xi))
    if grid is None:
        raise ValueError("grid is required for sample arrays")
    f = grid.check_samples(obj)
    m = flow_multiplier(kind, t, grid.wavenumbers)
    out = np.fft.ifft(np.fft.fft(f) * m)
    if np.isrealobj(f) and LinearFlowKind(kind) in (LinearFlowKind.COS_FLOW, LinearFlowKind.SINC_FLOW):
        return out.real
    return out


def free_evolve(state, t: float):
    """Exact solution of the free equation from ``state`` after time ``t``."""
    from .solver import FieldState

    grid = state.grid
    xi = grid.rwavenumbers
    jx = japanese(xi)
    c, s = np.cos(t * jx), np.sin(t * jx)
    U, V = np.fft.rfft(state.u), np.fft.rfft(state.v)
    u = np.fft.irfft(c * U + (s / jx) * V, n=grid.n)
    v = np.fft.irfft(-s * jx * U + c * V, n=grid.n)
    return FieldState(state.t + t, u, v, grid)


# -- weighted local decay -----------------------------------------------------------

DERIVATIVES = ("none", "dx_over_jap", "dx")


@dataclass(frozen=True)
class WeightedOperatorSpec:
    """<x>^{-a} D <D>^{-b} e^{+-it<D>} <x>^{-a}, optionally precomposed with <D>^{-1} (H1 input).

    ``derivative``: ``none``, ``dx_over_jap`` (d/dx <D>^{-1}) or ``dx``.
    """

    a: float = 1.0
    b: float = 0.0
    derivative: str = "none"
    input_norm: str = "L2"
    t: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if self.derivative not in DERIVATIVES:
            raise ValueError(f"derivative must be one of {DERIVATIVES}")
        if self.input_norm not in ("L2", "H1"):
            raise ValueError("input_norm must be 'L2' or 'H1'")
        if self.derivative == "none" and (self.a < 1 or self.b < 0):
            raise ValueError("undifferentiated variant needs a >= 1 and b >= 0")
        if self.derivative != "none" and self.a != 2:
            raise ValueError("derivative variants use a = 2")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def variant(self) -> str:
        return f"{self.derivative}/{self.input_norm}"

    def at(self, t: float) -> "WeightedOperatorSpec":
        return replace(self, t=float(t))


class WeightedOperator:
    """Matrix-free discretization of a :class:`WeightedOperatorSpec` on a periodic grid.

    Frequencies above 2/3 of Nyquist are removed by a smooth cutoff: on the periodic
    grid the phase t<xi> has a kink where +-Nyquist wrap, which otherwise leaves a
    non-decaying grid artefact in the derivative variants.
    """

    def __init__(self, spec: WeightedOperatorSpec, grid: SpatialGrid, filter_fraction: float = 2 / 3):
        self.spec = spec
        self.grid = grid
        xi = grid.wavenumbers
        jx = japanese(xi)
        m = np.exp(spec.sign * 1j * spec.t * jx) * jx ** (-spec.b)
        if spec.derivative == "dx_over_jap":
            m = m * (1j * xi / jx)
        elif spec.derivative == "dx":
            m = m * (1j * xi)
        if filter_fraction:
            cut = 0.5 * filter_fraction * grid.nyquist
            m = m * bump(xi / cut)
        self.multiplier = m
        self.pre = 1.0 / jx if spec.input_norm == "H1" else None
        self.weight = japanese(grid.x) ** (-spec.a)

    def matvec(self, f: np.ndarray) -> np.ndarray:
        if self.pre is not None:
            f = np.fft.ifft(np.fft.fft(f) * self.pre)
        return self.weight * np.fft.ifft(self.multiplier * np.fft.fft(self.weight * f))

    def rmatvec(self, g: np.ndarray) -> np.ndarray:
        h = self.weight * np.fft.ifft(np.conj(self.multiplier) * np.fft.fft(self.weight * g))
        if self.pre is not None:
            h = np.fft.ifft(np.fft.fft(h) * self.pre)
        return h

    def dense(self) -> np.ndarray:
        """Full matrix (columns = images of unit vectors); for small grids only."""
        eye = np.eye(self.grid.n, dtype=complex)
        return np.stack([self.matvec(e) for e in eye], axis=1)


class PowerIterationError(RuntimeError):
    pass


def power_iteration_norm(op: WeightedOperator, tol: float = 1e-8, max_iter: int = 10000,
                         seed: int = 0) -> float:
    """Largest singular value via power iteration on K*K.

    The start vector is a fixed seeded Gaussian vector: it has components in both
    parity sectors, which the all-ones vector lacks.
    """
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(op.grid.n).astype(complex)
    f /= np.linalg.norm(f)
    lam_old = 0.0
    for it in range(1, max_iter + 1):
        g = op.rmatvec(op.matvec(f))
        lam = float(np.linalg.norm(g))
        if lam == 0.0:
            return 0.0
        f = g / lam
        if abs(lam - lam_old) <= tol * lam:
            log.debug("power iteration converged in %d iterations", it)
            return math.sqrt(lam)
        lam_old = lam
    raise PowerIterationError(
        f"power iteration did not converge in {max_iter} iterations (t={op.spec.t}); "
        "check grid resolution")


def weighted_operator_norm(spec: WeightedOperatorSpec, grid: SpatialGrid, tol: float = 1e-8,
                           max_iter: int = 10000, filter_fraction: float = 2 / 3) -> float:
    return power_iteration_norm(WeightedOperator(spec, grid, filter_fraction), tol, max_iter)


def sweep_grid(t_max: float, n: int = 4096) -> SpatialGrid:
    """Box for a norm sweep: L = 32 sqrt(t_max) + 64 rounded up to a multiple of 8."""
    L = 32.0 * math.sqrt(t_max) + 64.0
    return SpatialGrid(n, 8.0 * math.ceil(L / 8.0))


def decay_table(spec: WeightedOperatorSpec, times, grid: SpatialGrid | None = None,
                **kwargs) -> ExperimentReport:
    """Operator norms of ``spec`` over ``times`` and the fitted decay exponent."""
    times = [float(t) for t in times]
    if len(times) < 4:
        raise ValueError("need at least 4 times")
    if len(set(times)) != len(times):
        raise ValueError("duplicate times in sweep")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be increasing")
    if grid is None:
        grid = sweep_grid(max(times))
    rows = []
    for t in times:
        norm = weighted_operator_norm(spec.at(t), grid, **kwargs)
        rows.append({"t": t, "norm": norm, "variant": spec.variant, "a": spec.a, "b": spec.b,
                     "grid_n": grid.n, "grid_L": grid.length})
    fit = loglog_fit(times, [r["norm"] for r in rows])
    report = ExperimentReport(name=f"decay_table[{spec.variant},a={spec.a:g},b={spec.b:g}]")
    report.add_table("norms", rows)
    report.add_fit("norm_vs_t", fit)
    return report
