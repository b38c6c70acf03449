"""Periodic grids, Fourier transforms, multipliers and Littlewood-Paley projections."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np

Multiplier = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, complex, float]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid on [-L/2, L/2) with ``n`` points."""

    n: int
    length: float

    def __post_init__(self):
        n = int(self.n)
        if n < 16 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 16, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"grid length must be positive, got {self.length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def origin(self) -> float:
        return -0.5 * self.length

    @cached_property
    def x(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers 2*pi*j/L in FFT order (j = 0..n/2-1, -n/2..-1)."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def rwavenumbers(self) -> np.ndarray:
        """Nonnegative wavenumbers matching ``numpy.fft.rfft`` output."""
        return 2 * np.pi * np.fft.rfftfreq(self.n, d=self.spacing)

    @property
    def nyquist(self) -> float:
        return np.pi / self.spacing

    def refined(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(self.n * factor, self.length)

    def check_samples(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-1] != self.n:
            raise ValueError(f"expected {self.n} samples, got {f.shape[-1]}")
        return f


@dataclass(frozen=True)
class Spectrum:
    """Discrete approximation of the unitary transform u^(xi) on the grid wavenumbers.

    ``coeffs`` is in FFT order and samples (2 pi)^(-1/2) * int e^{-i x xi} u(x) dx.
    """

    grid: SpatialGrid
    coeffs: np.ndarray


def _phase(grid: SpatialGrid) -> np.ndarray:
    # shift from grid index 0 to the coordinate origin
    return np.exp(-1j * grid.wavenumbers * grid.origin)


def forward_transform(f: np.ndarray, grid: SpatialGrid) -> Spectrum:
    f = grid.check_samples(f)
    coeffs = np.fft.fft(f, axis=-1) * _phase(grid) * (grid.spacing / np.sqrt(2 * np.pi))
    return Spectrum(grid, coeffs)


def inverse_transform(s: Spectrum, real: bool | None = None) -> np.ndarray:
    """Exact inverse of :func:`forward_transform`.

    ``real=None`` drops the imaginary part only when it vanishes to round-off.
    """
    grid = s.grid
    f = np.fft.ifft(s.coeffs / _phase(grid), axis=-1) * (np.sqrt(2 * np.pi) / grid.spacing)
    if real is None:
        scale = np.max(np.abs(f), initial=0.0)
        real = bool(np.max(np.abs(f.imag), initial=0.0) <= 1e-13 * max(scale, 1e-300))
    return f.real if real else f


def _evaluate_multiplier(m: Multiplier, xi: np.ndarray) -> np.ndarray:
    values = m(xi) if callable(m) else m
    values = np.broadcast_to(np.asarray(values), xi.shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("multiplier is not finite on every grid wavenumber")
    return values


def apply_multiplier(s: Spectrum, m: Multiplier) -> Spectrum:
    """Multiply each coefficient by m(xi_j); ``m`` may be a callable, an array or a scalar."""
    values = _evaluate_multiplier(m, s.grid.wavenumbers)
    return Spectrum(s.grid, s.coeffs * values)


def fourier_multiply(f: np.ndarray, grid: SpatialGrid, m: Multiplier) -> np.ndarray:
    """Apply a Fourier multiplier directly to samples.

    Real input with a Hermitian-symmetric multiplier stays real; this is the hot path used
    by the solver so it skips the origin phase (multipliers commute with it).
    """
    f = grid.check_samples(f)
    if np.isrealobj(f):
        values = _evaluate_multiplier(m, grid.wavenumbers)
        pos = values[: grid.n // 2 + 1]
        neg = np.conj(values[(-np.arange(grid.n // 2 + 1)) % grid.n])
        if np.allclose(pos, neg, rtol=0, atol=1e-14 * (np.max(np.abs(pos)) + 1e-300)):
            return np.fft.irfft(np.fft.rfft(f, axis=-1) * pos, n=grid.n, axis=-1)
    values = _evaluate_multiplier(m, grid.wavenumbers)
    return np.fft.ifft(np.fft.fft(f, axis=-1) * values, axis=-1)


def japanese(s) -> np.ndarray:
    """<s> = (1 + s^2)^(1/2)."""
    return np.sqrt(1.0 + np.square(s))


def derivative(f: np.ndarray, grid: SpatialGrid, order: int = 1) -> np.ndarray:
    """Spectral derivative; the Nyquist mode is zeroed for odd orders."""
    f = grid.check_samples(f)
    xi = grid.rwavenumbers
    m = (1j * xi) ** order
    if order % 2 and grid.n % 2 == 0:
        m = m.copy()
        m[-1] = 0.0
    if np.isrealobj(f):
        return np.fft.irfft(np.fft.rfft(f, axis=-1) * m, n=grid.n, axis=-1)
    return derivative(f.real, grid, order) + 1j * derivative(f.imag, grid, order)


# -- Littlewood-Paley ---------------------------------------------------------------


def _smooth_step(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s, dtype=float)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def bump(eta) -> np.ndarray:
    """Smooth even bump: 1 on |eta| <= 1, 0 on |eta| >= 2."""
    a = np.abs(np.asarray(eta, dtype=float))
    upper = _smooth_step(2.0 - a)
    lower = _smooth_step(a - 1.0)
    out = np.where(a <= 1.0, 1.0, 0.0)
    mid = (a > 1.0) & (a < 2.0)
    out = np.where(mid, upper / np.where(mid, upper + lower, 1.0), out)
    return out


def band_bump(eta) -> np.ndarray:
    """psi(eta) = phi(eta) - phi(2 eta), supported in 1/2 <= |eta| <= 2."""
    eta = np.asarray(eta, dtype=float)
    return bump(eta) - bump(2.0 * eta)


def lp_project_low(f: np.ndarray, grid: SpatialGrid, lam: float) -> np.ndarray:
    """P_{<=lam} f with the exact (non-dyadic) cutoff ``lam``."""
    if not lam > 0:
        raise ValueError(f"cutoff must be positive, got {lam}")
    return fourier_multiply(f, grid, bump(grid.wavenumbers / lam))


def lp_project_high(f: np.ndarray, grid: SpatialGrid, lam: float) -> np.ndarray:
    if not lam > 0:
        raise ValueError(f"cutoff must be positive, got {lam}")
    return fourier_multiply(f, grid, 1.0 - bump(grid.wavenumbers / lam))


def lp_project_band(f: np.ndarray, grid: SpatialGrid, k: int) -> np.ndarray:
    """Dyadic band P_k f, frequencies 2^(k-1) <= |eta| <= 2^(k+1)."""
    k = int(k)
    if 2.0 ** (k + 1) > grid.nyquist:
        raise ValueError(f"band k={k} lies above the Nyquist frequency {grid.nyquist:.3g}")
    return fourier_multiply(f, grid, band_bump(grid.wavenumbers / 2.0**k))


def coefficient_B(rho: float, ygrid: SpatialGrid, coeffs, derivative_rho: bool = False):
    """Samples of B(rho, y) = (beta0 + beta(rho sinh y)) / cosh y on the y-grid.

    With ``derivative_rho=True`` also returns d/drho B = beta'(rho sinh y) tanh y.
    """
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    y = ygrid.x
    xs = rho * np.sinh(y)
    B = (coeffs.beta0 + coeffs.beta(xs)) / np.cosh(y)
    if not derivative_rho:
        return B
    return B, coeffs.dbeta(xs) * np.tanh(y)
