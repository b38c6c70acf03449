"""Hyperbolic coordinates, hyperboloid sampling, Lorentz boosts and interior/exterior energies.

Coordinates: t = rho cosh y, x = rho sinh y inside the light cone; the profile
variable is w = t^{1/2} u.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.integrate import simpson

from .coefficients import CoefficientProfile
from .grid import SpatialGrid, derivative, japanese
from .solver import FieldState, Trajectory, lorentz_boost_samples

log = logging.getLogger(__name__)

MAX_SNAP_CADENCE = 0.25


def to_hyperbolic(t, x):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t <= np.abs(x)):
        raise ValueError("to_hyperbolic needs t > |x| (interior of the light cone)")
    return np.sqrt(t * t - x * x), np.arctanh(x / t)


def from_hyperbolic(rho, y):
    rho = np.asarray(rho, dtype=float)
    y = np.asarray(y, dtype=float)
    return rho * np.cosh(y), rho * np.sinh(y)


def y_grid(Y: float = 3.0, n: int = 1024) -> SpatialGrid:
    """Uniform periodic y-grid on [-Y, Y)."""
    return SpatialGrid(n, 2.0 * Y)


def lorentz_boost(state: FieldState, c: CoefficientProfile | None = None) -> np.ndarray:
    """Z u = t d_x u + x d_t u on the grid (the coefficients do not enter)."""
    return lorentz_boost_samples(state)


# -- scattered-point sampling of a trajectory -----------------------------------------

def _quintic_basis(s: np.ndarray):
    """Quintic Hermite basis (value, first, second derivative in s), order p0,p0',p0'',p1,p1',p1''."""
    s2, s3, s4, s5 = s * s, s**3, s**4, s**5
    H0 = 1 - 10 * s3 + 15 * s4 - 6 * s5
    H1 = s - 6 * s3 + 8 * s4 - 3 * s5
    H2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5
    G1 = -4 * s3 + 7 * s4 - 3 * s5
    G2 = 0.5 * s3 - s4 + 0.5 * s5
    val = np.stack([H0, H1, H2, 1 - H0, G1, G2])
    dH0 = -30 * s2 + 60 * s3 - 30 * s4
    d1 = np.stack([dH0, 1 - 18 * s2 + 32 * s3 - 15 * s4, s - 4.5 * s2 + 6 * s3 - 2.5 * s4,
                   -dH0, -12 * s2 + 28 * s3 - 15 * s4, 1.5 * s2 - 4 * s3 + 2.5 * s4])
    ddH0 = -60 * s + 180 * s2 - 120 * s3
    d2 = np.stack([ddH0, -36 * s + 96 * s2 - 60 * s3, 1 - 9 * s + 18 * s2 - 10 * s3,
                   -ddH0, -24 * s + 84 * s2 - 60 * s3, 3 * s - 12 * s2 + 10 * s3])
    return val, d1, d2


SAMPLE_FIELDS = ("u", "ut", "utt", "ux", "uxt", "uxx")


class PointSampler:
    """Evaluate a trajectory at scattered (t, x).

    Space: trigonometric interpolation of the stored spectra. Time: quintic Hermite
    interpolation from the nodal values of u, u_t and u_tt at the two bracketing
    snapshots. Returns u and its derivatives up to second order.
    """

    def __init__(self, traj: Trajectory, margin: float = 0.0):
        if len(traj) < 2:
            raise ValueError("need at least two snapshots")
        times = traj.times
        if np.max(np.diff(times)) > MAX_SNAP_CADENCE + 1e-12:
            raise ValueError(f"snapshot cadence exceeds {MAX_SNAP_CADENCE}")
        self.traj = traj
        self.times = times
        self.margin = margin

    def check(self, t: np.ndarray, x: np.ndarray) -> None:
        g = self.traj.grid
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError(f"sample times leave the stored range [{self.times[0]}, {self.times[-1]}]")
        if np.any(np.abs(x) > 0.5 * g.length - self.margin):
            raise ValueError("sample points leave the computational box")

    def __call__(self, t, x) -> dict[str, np.ndarray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t, x = np.broadcast_arrays(t, x)
        shape = t.shape
        t, x = t.ravel(), x.ravel()
        self.check(t, x)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        out = {name: np.empty(t.size) for name in SAMPLE_FIELDS}
        order = np.argsort(k, kind="stable")
        ks = k[order]
        bounds = np.flatnonzero(np.diff(ks)) + 1
        for idx in np.split(order, bounds):
            if idx.size:
                vals = evaluate_interval(self.traj, int(k[idx[0]]), t[idx], x[idx])
                for name in SAMPLE_FIELDS:
                    out[name][idx] = vals[name]
        return {name: arr.reshape(shape) for name, arr in out.items()}


def _coefficient_block(grid: SpatialGrid, snap, K: int) -> np.ndarray:
    """Columns: (u, u_t, u_tt) x (d_x^0, d_x^1, d_x^2) interpolation coefficients."""
    xi = grid.rwavenumbers[:K]
    wts = np.full(K, 2.0 / grid.n)
    wts[0] = 1.0 / grid.n
    nyq = K == grid.n // 2 + 1
    if nyq:
        wts[-1] = 1.0 / grid.n
    cols = []
    for coeffs in (snap.u_hat, snap.v_hat, snap.a_hat):
        c = np.zeros(K, dtype=complex)
        m = min(K, coeffs.size)
        c[:m] = coeffs[:m]
        c *= wts
        for order in range(3):
            cm = c * (1j * xi) ** order
            if order % 2 and nyq:
                cm[-1] = 0.0
            cols.append(cm)
    return np.stack(cols, axis=1)


def evaluate_interval(traj: Trajectory, k: int, t: np.ndarray, x: np.ndarray) -> dict[str, np.ndarray]:
    s0, s1 = traj.snapshots[k], traj.snapshots[k + 1]
    return hermite_between(traj.grid, s0, s1, t, x)


def hermite_between(grid: SpatialGrid, s0, s1, t: np.ndarray, x: np.ndarray) -> dict[str, np.ndarray]:
    h = s1.t - s0.t
    K = max(s0.u_hat.size, s1.u_hat.size)
    E = np.exp(1j * np.outer(x - grid.origin, grid.rwavenumbers[:K]))
    C = np.concatenate([_coefficient_block(grid, s0, K), _coefficient_block(grid, s1, K)], axis=1)
    S = (E @ C).real  # columns: snapshot-major, then field (u, v, a), then x-order
    s = (t - s0.t) / h
    val, d1, d2 = _quintic_basis(s)
    out = {}
    names = (("u", "ut", "utt"), ("ux", "uxt", None), ("uxx", None, None))
    for order, (name0, name1, name2) in enumerate(names):
        nodes = [S[:, 0 + order], h * S[:, 3 + order], h * h * S[:, 6 + order],
                 S[:, 9 + order], h * S[:, 12 + order], h * h * S[:, 15 + order]]
        out[name0] = sum(b * p for b, p in zip(val, nodes))
        if name1:
            out[name1] = sum(b * p for b, p in zip(d1, nodes)) / h
        if name2:
            out[name2] = sum(b * p for b, p in zip(d2, nodes)) / (h * h)
    return out


class StreamingSampler:
    """Observer that evaluates requested (t, x) points while a run progresses.

    Keeps only the previous snapshot of one field component; call :meth:`values`
    after the run.
    """

    def __init__(self, grid: SpatialGrid, t, x, component: str = "u", spectral_tol: float = 1e-13):
        self.grid = grid
        self.t = np.asarray(t, dtype=float).ravel()
        self.x = np.asarray(x, dtype=float).ravel()
        if np.any(np.abs(self.x) > 0.5 * grid.length):
            raise ValueError("sample points leave the computational box")
        self.component = component
        self._buf = Trajectory(grid, spectral_tol=spectral_tol)
        self._out = {name: np.full(self.t.size, np.nan) for name in SAMPLE_FIELDS}
        self._done = np.zeros(self.t.size, dtype=bool)

    def __call__(self, t: float, fields: dict) -> None:
        u, v, a = fields[self.component]
        if self._buf.snapshots and t - self._buf.snapshots[-1].t > MAX_SNAP_CADENCE + 1e-12:
            raise ValueError(f"snapshot cadence exceeds {MAX_SNAP_CADENCE}")
        self._buf.append(t, u, v, a)
        if len(self._buf.snapshots) > 2:
            del self._buf.snapshots[0]
        if len(self._buf.snapshots) < 2:
            return
        s0, s1 = self._buf.snapshots
        sel = ~self._done & (self.t >= s0.t - 1e-12) & (self.t <= s1.t + 1e-12)
        if np.any(sel):
            vals = hermite_between(self.grid, s0, s1, self.t[sel], self.x[sel])
            for name in SAMPLE_FIELDS:
                self._out[name][sel] = vals[name]
            self._done |= sel

    def values(self) -> dict[str, np.ndarray]:
        if not np.all(self._done):
            raise ValueError("some requested points lie outside the simulated time range")
        return self._out


# -- hyperboloid slices ------------------------------------------------------------


@dataclass
class HyperbolicSlice:
    """Fields on H_rho over a uniform y-grid."""

    rho: float
    ygrid: SpatialGrid
    u: np.ndarray
    ut: np.ndarray
    ux: np.ndarray
    w: np.ndarray
    wrho: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def y(self) -> np.ndarray:
        return self.ygrid.x

    @property
    def t(self) -> np.ndarray:
        return self.rho * np.cosh(self.y)

    @property
    def x(self) -> np.ndarray:
        return self.rho * np.sinh(self.y)

    def to_rows(self) -> list[dict]:
        return [{"y": y, "u": a, "ut": b, "ux": c, "w": d, "wrho": e}
                for y, a, b, c, d, e in zip(self.y, self.u, self.ut, self.ux, self.w, self.wrho)]


def slice_from_samples(rho: float, ygrid: SpatialGrid, vals: dict[str, np.ndarray]) -> HyperbolicSlice:
    """Build a slice from point samples of u and its derivatives on H_rho."""
    y = ygrid.x
    t, x = rho * np.cosh(y), rho * np.sinh(y)
    u, ut, ux = vals["u"], vals["ut"], vals["ux"]
    sq = np.sqrt(t)
    w = sq * u
    wt = 0.5 * u / sq + sq * ut
    wx = sq * ux
    wrho = (t * wt + x * wx) / rho
    extra = {k: v for k, v in vals.items() if k not in ("u", "ut", "ux")}
    return HyperbolicSlice(float(rho), ygrid, u, ut, ux, w, wrho, extra)


def hyperboloid_points(rho: float, ygrid: SpatialGrid):
    return from_hyperbolic(rho, ygrid.x)


def sample_hyperboloid(traj: Trajectory, rho: float, ygrid: SpatialGrid) -> HyperbolicSlice:
    return sample_hyperboloids(traj, [rho], ygrid)[0]


def sample_hyperboloids(traj: Trajectory, rhos, ygrid: SpatialGrid) -> list[HyperbolicSlice]:
    """Sample several hyperboloids in one pass over the snapshots."""
    rhos = [float(r) for r in rhos]
    if any(r < 1 for r in rhos):
        raise ValueError("rho must be >= 1")
    sampler = PointSampler(traj)
    T = np.concatenate([from_hyperbolic(r, ygrid.x)[0] for r in rhos])
    X = np.concatenate([from_hyperbolic(r, ygrid.x)[1] for r in rhos])
    if T.max() > sampler.times[-1] + 1e-12:
        raise ValueError(f"rho cosh(Y) = {T.max():.4g} exceeds the last snapshot time {sampler.times[-1]:.4g}")
    vals = sampler(T, X)
    n = ygrid.n
    return [slice_from_samples(r, ygrid, {k: v[i * n:(i + 1) * n] for k, v in vals.items()})
            for i, r in enumerate(rhos)]


def slices_from_streaming(sampler: StreamingSampler, rhos, ygrid: SpatialGrid) -> list[HyperbolicSlice]:
    vals = sampler.values()
    n = ygrid.n
    return [slice_from_samples(r, ygrid, {k: v[i * n:(i + 1) * n] for k, v in vals.items()})
            for i, r in enumerate(rhos)]


def hyperboloid_request(rhos, ygrid: SpatialGrid):
    """Stacked (t, x) points of several hyperboloids, for :class:`StreamingSampler`."""
    pts = [from_hyperbolic(float(r), ygrid.x) for r in rhos]
    return np.concatenate([p[0] for p in pts]), np.concatenate([p[1] for p in pts])


# -- hyperbolic form of the equation -------------------------------------------------


def boost_derivatives(s: HyperbolicSlice):
    """d_y w and d_y^2 w via d_y = Z = t d_x + x d_t applied to sampled derivatives."""
    t, x = s.t, s.x
    u, ut, ux = s.u, s.ut, s.ux
    utt, uxt, uxx = s.extra["utt"], s.extra["uxt"], s.extra["uxx"]
    sq = np.sqrt(t)
    Zu = t * ux + x * ut
    Z2u = x * ux + t * ut + t * t * uxx + 2 * t * x * uxt + x * x * utt
    wy = 0.5 * x * u / sq + sq * Zu
    wyy = (0.5 * (-0.5 * x * x * u / (t * sq) + sq * u + x * Zu / sq)
           + 0.5 * x * Zu / sq + sq * Z2u)
    return wy, wyy


def hyperbolic_residual(prev: HyperbolicSlice, cur: HyperbolicSlice, nxt: HyperbolicSlice,
                        c: CoefficientProfile, y_window: float = 2.0) -> tuple[float, np.ndarray]:
    """Residual of the w-equation on H_rho.

    (d_rho^2 - rho^-2 d_y^2 + rho^-2 tanh(y) d_y + 1 + 3/(4 rho^2 cosh^2 y)) w
        - rho^-1 (beta0 + beta(rho sinh y)) / cosh(y) w^3

    d_rho^2 w by centered differences across the three slices; d_y from the chain rule.
    Returns (max over |y| <= y_window, residual array).
    """
    h = cur.rho - prev.rho
    if abs((nxt.rho - cur.rho) - h) > 1e-9 * cur.rho:
        raise ValueError("slices must be equispaced in rho")
    if h <= 0 or h > 0.05 + 1e-12:
        raise ValueError("slice spacing h must lie in (0, 0.05]")
    rho = cur.rho
    y = cur.y
    wrr = (nxt.w - 2 * cur.w + prev.w) / (h * h)
    wy, wyy = boost_derivatives(cur)
    ch = np.cosh(y)
    lhs = wrr - wyy / rho**2 + np.tanh(y) * wy / rho**2 + cur.w + 0.75 * cur.w / (rho**2 * ch**2)
    rhs = (c.beta0 + c.beta(rho * np.sinh(y))) / (rho * ch) * cur.w**3
    res = lhs - rhs
    mask = np.abs(y) <= y_window
    return float(np.max(np.abs(res[mask]))), res


# -- interior energies --------------------------------------------------------------


class WindowTruncationError(ValueError):
    pass


def interior_integrand(phi, phit, phix, t, x):
    return phit**2 + phix**2 + 2 * phit * phix * x / t + phi**2


def coercive_integrand(phi, phit, phix, t, x):
    rho2 = t * t - x * x
    return (phix + x / t * phit) ** 2 + phit**2 * rho2 / t**2 + phi**2


def interior_energy(phi, phit, phix, rho: float, ygrid: SpatialGrid, edge_fraction: float = 0.1,
                    tol: float = 1e-8, check: bool = True) -> dict[str, float]:
    """E_int on H_rho from samples over the y-grid, integrated in x (dx = rho cosh y dy).

    Returns the defining form, the coercive form and the share of the integrand mass
    in the outer ``edge_fraction`` of the window (raised on if above ``tol``).
    """
    y = ygrid.x
    t, x = rho * np.cosh(y), rho * np.sinh(y)
    jac = rho * np.cosh(y) * ygrid.spacing
    dens = interior_integrand(phi, phit, phix, t, x) * jac
    coer = coercive_integrand(phi, phit, phix, t, x) * jac
    E, Ec = float(np.sum(dens)), float(np.sum(coer))
    Y = 0.5 * ygrid.length
    edge = np.abs(y) >= (1 - edge_fraction) * Y
    share = float(np.sum(np.abs(dens[edge])) / E) if E > 0 else 0.0
    if check and share > tol:
        raise WindowTruncationError(f"integrand mass share {share:.3g} near |y|=Y exceeds {tol:g}")
    return {"E": E, "E_coercive": Ec, "edge_share": share}


def boost_fields(s: HyperbolicSlice):
    """(Z phi, d_t Z phi, d_x Z phi) on the slice, from sampled derivatives of phi."""
    t, x = s.t, s.x
    ut, ux = s.ut, s.ux
    utt, uxt, uxx = s.extra["utt"], s.extra["uxt"], s.extra["uxx"]
    Z = t * ux + x * ut
    Zt = ux + t * uxt + x * utt
    Zx = t * uxx + ut + x * uxt
    return Z, Zt, Zx


@dataclass
class EnergyReport:
    rho: float
    E_int_u: float
    E_int_Zu0: float
    E_int_Zu1: float
    edge_share: float

    @property
    def script_E(self) -> float:
        return self.E_int_u + self.E_int_Zu0 + self.E_int_Zu1

    def row(self) -> dict:
        return {"rho": self.rho, "E_int_u": self.E_int_u, "E_int_Zu0": self.E_int_Zu0,
                "E_int_Zu1": self.E_int_Zu1, "script_E": self.script_E}


def interior_functional_from_slices(s_u: HyperbolicSlice, s_u0: HyperbolicSlice | None,
                                    s_u1: HyperbolicSlice | None, tol: float = 1e-8,
                                    check: bool = True) -> EnergyReport:
    g = s_u.ygrid
    Eu = interior_energy(s_u.u, s_u.ut, s_u.ux, s_u.rho, g, tol=tol, check=check)
    parts, share = [], Eu["edge_share"]
    for s in (s_u0, s_u1):
        if s is None:
            parts.append(0.0)
            continue
        Z, Zt, Zx = boost_fields(s)
        E = interior_energy(Z, Zt, Zx, s.rho, g, tol=tol, check=check)
        parts.append(E["E"])
        share = max(share, E["edge_share"])
    return EnergyReport(s_u.rho, Eu["E"], parts[0], parts[1], share)


def interior_energy_functional(traj: Trajectory, traj_u0: Trajectory | None, traj_u1: Trajectory | None,
                               rho: float, ygrid: SpatialGrid, **kw) -> EnergyReport:
    """script E_int(rho) = E_int(u) + E_int(Z u0) + E_int(Z u1)."""
    s_u = sample_hyperboloid(traj, rho, ygrid)
    s0 = sample_hyperboloid(traj_u0, rho, ygrid) if traj_u0 is not None else None
    s1 = sample_hyperboloid(traj_u1, rho, ygrid) if traj_u1 is not None else None
    return interior_functional_from_slices(s_u, s0, s1, **kw)


# -- exterior energies --------------------------------------------------------------


def omega(j: int, N: int, t, x):
    """omega_j = (t + |x|)^{N-j} (|x| - t + 1)^j."""
    ax = np.abs(x)
    return (t + ax) ** (N - j) * (ax - t + 1) ** j


def time_derivative_fields(comps: list[tuple[np.ndarray, np.ndarray]], sources: list, grid: SpatialGrid,
                           order: int) -> list[list[np.ndarray]]:
    """d_t^k of each component for k <= order, from the equation.

    Component l solves (box + 1) u_l = s_l (sum_m u_m)^3; d_t^{k+2} u_l = (d_x^2 - 1) d_t^k u_l
    + s_l d_t^k (u^3), with the Leibniz rule for the cube.
    """
    D = [[np.asarray(u, float), np.asarray(v, float)] for u, v in comps]
    total = [sum(d[0] for d in D), sum(d[1] for d in D)]
    for k in range(2, order + 1):
        m = k - 2
        cube = np.zeros(grid.n)
        for a in range(m + 1):
            for b in range(m + 1 - a):
                c = m - a - b
                cube += factorial(m) // (factorial(a) * factorial(b) * factorial(c)) * total[a] * total[b] * total[c]
        new = []
        for d, s in zip(D, sources):
            new.append(derivative(d[m], grid, 2) - d[m] + s * cube)
        for d, nv in zip(D, new):
            d.append(nv)
        total.append(sum(new))
    return D


def _multi_indices(N: int):
    return [(i, j) for n in range(N + 1) for i in range(n, -1, -1) for j in [n - i]]


class ExteriorEnergyAccumulator:
    """Accumulates E_ext,T(d^I phi, omega_|I|) for phi in {u, Z u_l} over snapshots.

    Cone part {<x> = t}: at each snapshot the fields are evaluated at x = +-sqrt(t^2 - 1)
    and integrated in x (dx measure) over those nodes with Simpson's rule. Flat part
    {<x> >= T, t = T}: quadrature on the grid at the snapshot T.
    """

    def __init__(self, grid: SpatialGrid, c: CoefficientProfile, N: int, T_list, components: list[str]):
        self.grid, self.c, self.N = grid, c, N
        self.T_list = sorted(float(T) for T in T_list)
        self.components = components
        self.labels = ["u"] + [f"Z{name}" for name in components]
        self.indices = _multi_indices(N)
        self.cone: list[tuple[float, float, dict]] = []
        self.flat: dict[float, dict] = {}
        self.pointwise: dict[float, dict] = {}
        self._last_t = None

    def _sources(self):
        x = self.grid.x
        if self.components == ["u"]:
            return [self.c.total(x)]
        return [np.full(self.grid.n, float(self.c.beta0)), self.c.beta(x)]

    def add(self, t: float, comps: list[tuple[np.ndarray, np.ndarray]]) -> None:
        if self._last_t is not None and t - self._last_t > MAX_SNAP_CADENCE + 1e-12:
            raise ValueError(f"snapshot cadence exceeds {MAX_SNAP_CADENCE} for the cone integral")
        self._last_t = t
        grid = self.grid
        order = self.N + 2
        D = time_derivative_fields(comps, self._sources(), grid, order)
        total = [sum(d[k] for d in D) for k in range(order + 1)]
        hats = {"u": [np.fft.rfft(f) for f in total]}
        if self.components != ["u"]:
            for name, d in zip(self.components, D):
                hats[name] = [np.fft.rfft(f) for f in d]
        if t <= 1 + 1e-12:
            xs = np.array([0.0])
        else:
            r = math.sqrt(t * t - 1)
            xs = np.array([-r, r])
        vals = self._point_derivs(hats, xs)
        dens = self._densities(vals, t, xs, cone=True)
        for xv, col in zip(xs, range(xs.size)):
            self.cone.append((t, float(xv), {key: float(v[col]) for key, v in dens.items()}))
        for T in self.T_list:
            if abs(t - T) < 1e-9:
                self.flat[T], self.pointwise[T] = self._flat(hats, T)

    def _point_derivs(self, hats, xs):
        """All needed d_t^i d_x^j at the points xs."""
        g = self.grid
        xi = g.rwavenumbers
        wts = np.full(xi.size, 2.0)
        wts[0] = wts[-1] = 1.0
        E = np.exp(1j * np.outer(xs - g.origin, xi)) * (wts / g.n)
        out = {}
        for name, lst in hats.items():
            top = len(lst) - 1
            for i in range(top + 1):
                for j in range(top + 1 - i):
                    m = (1j * xi) ** j
                    if j % 2:
                        m = m.copy()
                        m[-1] = 0
                    out[name, i, j] = (E @ (lst[i] * m)).real
        return out

    def _phi_derivs(self, vals, name, t, x, i, j):
        """d_t^i d_x^j of u (name='u') or of Z u_l (name='Z'+component)."""
        if name == "u":
            return vals["u", i, j]
        base = name[1:]

        def D(a, b):
            return vals[base, a, b] if a >= 0 and b >= 0 else 0.0

        out = t * D(i, j + 1) + x * D(i + 1, j)
        if i:
            out = out + i * D(i - 1, j + 1)
        if j:
            out = out + j * D(i + 1, j - 1)
        return out

    def _densities(self, vals, t, x, cone: bool):
        dens = {}
        for name in self.labels:
            for (i, j) in self.indices:
                p = self._phi_derivs(vals, name, t, x, i, j)
                pt = self._phi_derivs(vals, name, t, x, i + 1, j)
                px = self._phi_derivs(vals, name, t, x, i, j + 1)
                q = pt**2 + px**2 + p**2
                if cone:
                    q = q + 2 * pt * px * x / t
                dens[name, i, j] = q * omega(i + j, self.N, t, x)
        return dens

    def _flat(self, hats, T):
        g = self.grid
        x = g.x
        mask = japanese(x) >= T
        n = g.n
        xi = g.rwavenumbers
        vals = {}
        for name, lst in hats.items():
            top = len(lst) - 1
            for i in range(top + 1):
                for j in range(top + 1 - i):
                    vals[name, i, j] = np.fft.irfft(lst[i] * (1j * xi) ** j, n=n)[mask]
        xs = x[mask]
        dens = self._densities(vals, T, xs, cone=False)
        energies = {k: float(np.sum(v) * g.spacing) for k, v in dens.items()}
        peaks = {}
        for name in self.labels:
            for (i, j) in self.indices:
                p = self._phi_derivs(vals, name, T, xs, i, j)
                peaks[name, i, j] = float(np.max(p**2 * omega(i + j, self.N, T, xs))) if xs.size else 0.0
        return energies, peaks

    def __call__(self, t: float, fields: dict) -> None:
        if self.components == ["u"]:
            comps = [fields["u"][:2]]
        else:
            comps = [fields[name][:2] for name in self.components]
        self.add(t, comps)

    def energies(self, T: float) -> dict:
        """E_ext,T for each (label, i, j)."""
        if T not in self.flat:
            raise KeyError(f"T={T} was not a requested snapshot time")
        pts = [(xv, d) for (tc, xv, d) in self.cone if tc <= T + 1e-12]
        pts.sort(key=lambda p: p[0])
        xs = np.array([p[0] for p in pts])
        out = {}
        for key, flat in self.flat[T].items():
            ys = np.array([p[1][key] for p in pts])
            cone = float(simpson(ys, x=xs)) if xs.size >= 3 else 0.0
            out[key] = flat + cone
        return out

    def table(self) -> list[dict]:
        rows = []
        for T in self.T_list:
            if T not in self.flat:
                continue
            E = self.energies(T)
            for j in range(self.N + 1):
                rows.append({"T": T, "j": j, "E_ext_j": sum(v for (name, a, b), v in E.items() if a + b == j)})
        return rows

    def totals(self) -> dict[float, float]:
        return {T: float(sum(self.energies(T).values())) for T in self.T_list if T in self.flat}

    def pointwise_ratios(self) -> dict[float, float]:
        """max over (label, I) of sup_{<x> >= T} (phi^2 omega_j)(T, x) / E_ext,T(phi, omega_j)."""
        out = {}
        for T, peaks in self.pointwise.items():
            E = self.energies(T)
            out[T] = max((peaks[k] / E[k] for k in peaks if E[k] > 0), default=0.0)
        return out


def exterior_energy(trajs: dict[str, Trajectory], c: CoefficientProfile, T_list, N: int = 2):
    """Exterior energy table from stored trajectories.

    ``trajs`` holds either ``{'u': traj}`` or ``{'u0': traj0, 'u1': traj1}``.
    """
    names = ["u"] if set(trajs) == {"u"} else ["u0", "u1"]
    if names == ["u0", "u1"] and not {"u0", "u1"} <= set(trajs):
        raise ValueError("pass either {'u'} or {'u0', 'u1'}")
    first = trajs[names[0]]
    T_max = max(T_list)
    if first.times[-1] < T_max - 1e-9:
        raise ValueError("trajectory does not reach the largest T")
    acc = ExteriorEnergyAccumulator(first.grid, c, N, T_list, names)
    for k, t in enumerate(first.times):
        if t > T_max + 1e-9:
            break
        comps = []
        for name in names:
            st = trajs[name].state(k)
            comps.append((st.u, st.v))
        acc.add(float(t), comps)
    return acc


class ExteriorDecayMonitor:
    """Running sup of <x>^{N/2} |u| over the exterior region 1 <= t <= <x>, per dyadic band."""

    def __init__(self, grid: SpatialGrid, N: int = 2, kmin: int = 3, kmax: int = 6, component: str = "u"):
        self.grid, self.N = grid, N
        self.ks = list(range(kmin, kmax + 1))
        self.component = component
        self.sup = {k: 0.0 for k in self.ks}
        jx = japanese(grid.x)
        self._jx = jx
        self._band = {k: (jx >= 2.0**k) & (jx < 2.0 ** (k + 1)) for k in self.ks}

    def add(self, t: float, u: np.ndarray) -> None:
        ext = self._jx >= t
        val = self._jx ** (self.N / 2) * np.abs(u)
        for k in self.ks:
            sel = ext & self._band[k]
            if np.any(sel):
                self.sup[k] = max(self.sup[k], float(val[sel].max()))

    def __call__(self, t: float, fields: dict) -> None:
        self.add(t, fields[self.component][0])


def exterior_decay_check(traj: Trajectory, N: int = 2, eps: float = 1.0, kmin: int = 3, kmax: int = 6,
                         ripple: float = 0.3) -> dict:
    """Band-wise sup of <x>^{N/2}|u|/eps over the exterior region with a flat-trend test."""
    mon = ExteriorDecayMonitor(traj.grid, N, kmin, kmax)
    for k in range(len(traj)):
        st = traj.state(k)
        mon.add(st.t, st.u)
    return band_summary(mon, eps, ripple)


def band_summary(mon: ExteriorDecayMonitor, eps: float, ripple: float = 0.3) -> dict:
    scale = 1.0 / eps if eps > 0 else 1.0
    rows = [{"k": k, "band_lo": 2.0**k, "band_hi": 2.0 ** (k + 1), "sup_ratio": mon.sup[k] * scale}
            for k in mon.ks]
    vals = [r["sup_ratio"] for r in rows]
    worst = max((b / a for a, b in zip(vals, vals[1:]) if a > 0), default=0.0)
    ok = all(np.isfinite(vals)) and all(b <= (1 + ripple) * a for a, b in zip(vals, vals[1:]))
    return {"rows": rows, "max_step_ratio": worst, "nonincreasing": bool(ok)}
