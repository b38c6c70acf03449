"""Pseudo-spectral Strang-split integrator for (d_t^2 - d_x^2 + 1) u = (beta0 + beta(x)) u^3."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .coefficients import CoefficientProfile
from .grid import SpatialGrid, derivative, japanese

log = logging.getLogger(__name__)

PROFILE_FAMILIES = ("zero", "gaussian", "sech")


class BlowUpError(FloatingPointError):
    """Non-finite values appeared during time stepping."""


class WrapRiskError(ValueError):
    """The box is too short: signals would wrap around the periodic domain."""


@dataclass
class FieldState:
    """Samples of (u, d_t u) at time ``t``."""

    t: float
    u: np.ndarray
    v: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != (self.grid.n,) or self.v.shape != (self.grid.n,):
            raise ValueError("u and v must have one sample per grid point")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise BlowUpError(f"non-finite field values at t={self.t}")

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.u.copy(), self.v.copy(), self.grid)


# -- initial data -------------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    family: str = "zero"
    amplitude: float = 0.0
    width: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.family not in PROFILE_FAMILIES:
            raise ValueError(f"unknown profile family {self.family!r}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.family == "zero" or self.amplitude == 0:
            return np.zeros_like(x, dtype=float)
        s = (x - self.center) / self.width
        if self.family == "gaussian":
            return self.amplitude * np.exp(-s * s)
        return self.amplitude / np.cosh(s)

    def scaled(self, factor: float) -> "Profile":
        return Profile(self.family, self.amplitude * factor, self.width, self.center)


@dataclass(frozen=True)
class InitialDataSpec:
    """Data (f, g) at t = 1.

    When ``epsilon`` is given, both amplitudes are rescaled by a common factor so the
    weighted norm ||<x>^{1+N/2} f||_{H^{N+2}} + ||<x>^{1+N/2} g||_{H^{N+1}} equals it.
    """

    f: Profile = Profile()
    g: Profile = Profile()
    N: int = 2
    epsilon: float | None = None


def weighted_sobolev_norm(h: np.ndarray, grid: SpatialGrid, weight_power: float, s: float) -> float:
    """||<x>^p h||_{H^s} with H^s defined through the <xi>^s multiplier."""
    wh = japanese(grid.x) ** weight_power * h
    coeffs = np.fft.fft(wh) * grid.spacing / math.sqrt(2 * math.pi)
    dens = japanese(grid.wavenumbers) ** (2 * s) * np.abs(coeffs) ** 2
    return math.sqrt(float(np.sum(dens)) * 2 * math.pi / grid.length)


def epsilon_norm(f: np.ndarray, g: np.ndarray, grid: SpatialGrid, N: int = 2) -> float:
    p = 1 + N / 2
    return weighted_sobolev_norm(f, grid, p, N + 2) + weighted_sobolev_norm(g, grid, p, N + 1)


def make_initial_data(spec: InitialDataSpec, grid: SpatialGrid) -> tuple[FieldState, float]:
    """Sample (f, g) at t = 1 and return the state with its weighted data norm."""
    for prof in (spec.f, spec.g):
        if prof.family != "zero" and prof.width < 8 * grid.spacing:
            raise ValueError(
                f"profile width {prof.width} is under 8 grid spacings ({grid.spacing:.4g})")
    f, g = spec.f(grid.x), spec.g(grid.x)
    eps = epsilon_norm(f, g, grid, spec.N)
    if spec.epsilon is not None:
        if eps == 0:
            raise ValueError("cannot rescale zero data to a nonzero epsilon")
        factor = spec.epsilon / eps
        f, g = f * factor, g * factor
        eps = epsilon_norm(f, g, grid, spec.N)
    return FieldState(1.0, f, g, grid), eps


def support_width(state: FieldState, rel_tol: float = 1e-10) -> float:
    """Length of the smallest interval outside which |u| + |v| <= rel_tol * max."""
    mag = np.abs(state.u) + np.abs(state.v)
    top = mag.max()
    if top == 0:
        return 0.0
    idx = np.nonzero(mag > rel_tol * top)[0]
    return float(state.grid.x[idx[-1]] - state.grid.x[idx[0]])


def check_wrap(state: FieldState, T_end: float) -> None:
    need = 2 * (T_end - state.t) + support_width(state) + 8
    if state.grid.length < need:
        raise WrapRiskError(
            f"box length L={state.grid.length:g} is below 2(T_end - t0) + support + 8 = {need:g} "
            f"for T_end={T_end:g}")


# -- time stepping ------------------------------------------------------------------


class StrangStepper:
    """N(dt/2) L(dt) N(dt/2); both sub-flows are exact.

    ``sources`` gives the coefficient of u^3 in each component's equation; with more
    than one component the cubic source uses the sum of all components.
    """

    def __init__(self, grid: SpatialGrid, sources: Sequence[np.ndarray | float], dt: float):
        if dt == 0 or not math.isfinite(dt):
            raise ValueError("time step must be finite and nonzero")
        self.grid = grid
        self.dt = dt
        jx = japanese(grid.rwavenumbers)
        self._cos = np.cos(dt * jx)
        self._sin_over = np.sin(dt * jx) / jx
        self._msin = -np.sin(dt * jx) * jx
        self.sources = [np.broadcast_to(np.asarray(s, dtype=float), (grid.n,)) for s in sources]
        self.active = [bool(np.any(s != 0)) for s in self.sources]

    def _kick(self, us, vs, tau):
        if not any(self.active):
            return vs
        total = us[0] if len(us) == 1 else sum(us)
        cube = total * total * total
        return [v + tau * s * cube if act else v for v, s, act in zip(vs, self.sources, self.active)]

    def _linear(self, us, vs):
        out_u, out_v = [], []
        n = self.grid.n
        for u, v in zip(us, vs):
            U, V = np.fft.rfft(u), np.fft.rfft(v)
            out_u.append(np.fft.irfft(self._cos * U + self._sin_over * V, n=n))
            out_v.append(np.fft.irfft(self._msin * U + self._cos * V, n=n))
        return out_u, out_v

    def step(self, us, vs):
        half = 0.5 * self.dt
        # overflow shows up as non-finite values, which the callers turn into BlowUpError
        with np.errstate(over="ignore", invalid="ignore"):
            vs = self._kick(us, vs, half)
            us, vs = self._linear(us, vs)
            vs = self._kick(us, vs, half)
        return us, vs


def step_strang(state: FieldState, dt: float, coeffs: CoefficientProfile) -> FieldState:
    stepper = StrangStepper(state.grid, [coeffs.samples(state.grid)], dt)
    (u,), (v,) = stepper.step([state.u], [state.v])
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise BlowUpError(f"non-finite values after step at t={state.t + dt}")
    return FieldState(state.t + dt, u, v, state.grid)


def second_time_derivative(u: np.ndarray, grid: SpatialGrid, source: np.ndarray | float,
                           cube: np.ndarray) -> np.ndarray:
    """d_t^2 u = d_x^2 u - u + source * cube, from the equation."""
    return derivative(u, grid, 2) - u + source * cube


def hamiltonian(state: FieldState, coeffs: CoefficientProfile) -> float:
    """int 1/2 v^2 + 1/2 (u_x)^2 + 1/2 u^2 - 1/4 (beta0 + beta) u^4 dx."""
    grid = state.grid
    ux = derivative(state.u, grid)
    u2 = state.u * state.u
    dens = 0.5 * (state.v**2 + ux**2 + u2) - 0.25 * coeffs.samples(grid) * u2 * u2
    return float(np.sum(dens) * grid.spacing)


# -- trajectories -------------------------------------------------------------------


def _cutoff(spec: np.ndarray, tol: float) -> int:
    """Number of leading coefficients to keep: up to the last one above tol * max."""
    if tol <= 0:
        return spec.size
    mag = np.abs(spec)
    keep = np.nonzero(mag > tol * mag.max(initial=0.0))[0]
    return int(keep[-1]) + 1 if keep.size else 1


@dataclass
class Snapshot:
    """One stored time level: rfft coefficients of u, u_t, u_tt truncated where negligible."""

    t: float
    u_hat: np.ndarray
    v_hat: np.ndarray
    a_hat: np.ndarray


@dataclass
class Trajectory:
    """Time-ordered snapshots of one field component.

    Spectra are truncated above the last coefficient of u or <xi>^{-1} u_t exceeding
    ``spectral_tol`` times the largest one; all three fields share that cutoff, since
    the tails of u_t and u_tt are round-off amplified by <xi> and xi^2. This keeps long runs in memory while
    trigonometric interpolation stays exact to that tolerance.
    """

    grid: SpatialGrid
    snapshots: list[Snapshot] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    spectral_tol: float = 1e-13

    def append(self, t: float, u: np.ndarray, v: np.ndarray, a: np.ndarray) -> None:
        if self.snapshots and t <= self.snapshots[-1].t:
            raise ValueError("snapshot times must increase")
        U, V, A = np.fft.rfft(u), np.fft.rfft(v), np.fft.rfft(a)
        K = max(_cutoff(U, self.spectral_tol),
                _cutoff(V / japanese(self.grid.rwavenumbers), self.spectral_tol))
        self.snapshots.append(Snapshot(t, U[:K].copy(), V[:K].copy(), A[:K].copy()))

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)

    def _expand(self, coeffs: np.ndarray) -> np.ndarray:
        full = np.zeros(self.grid.n // 2 + 1, dtype=complex)
        full[: coeffs.size] = coeffs
        return np.fft.irfft(full, n=self.grid.n)

    def index(self, t: float, atol: float = 1e-9) -> int:
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > atol:
            raise KeyError(f"t={t} is not a snapshot time (nearest {times[k]})")
        return k

    def state(self, k: int) -> FieldState:
        s = self.snapshots[k]
        return FieldState(s.t, self._expand(s.u_hat), self._expand(s.v_hat), self.grid)

    def state_at(self, t: float) -> FieldState:
        return self.state(self.index(t))

    def accel(self, k: int) -> np.ndarray:
        return self._expand(self.snapshots[k].a_hat)

    def __add__(self, other: "Trajectory") -> "Trajectory":
        if other.grid != self.grid or not np.array_equal(other.times, self.times):
            raise ValueError("trajectories must share grid and snapshot times")

        def add(p, q):
            out = np.zeros(max(p.size, q.size), dtype=complex)
            out[: p.size] += p
            out[: q.size] += q
            return out

        snaps = [Snapshot(a.t, add(a.u_hat, b.u_hat), add(a.v_hat, b.v_hat), add(a.a_hat, b.a_hat))
                 for a, b in zip(self.snapshots, other.snapshots)]
        return Trajectory(self.grid, snaps, dict(self.metadata), self.spectral_tol)


Observer = Callable[[float, dict], None]


def _run(states: list[FieldState], sources: list, T_end: float, dt: float, dt_snap: float,
         names: list[str], observers: Iterable[Observer], total_coeff: np.ndarray,
         coeffs: CoefficientProfile, wrap_check: bool):
    grid = states[0].grid
    t0 = states[0].t
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T_end <= t0:
        raise ValueError("T_end must exceed the initial time")
    sub = int(round(dt_snap / dt))
    if sub < 1 or abs(sub * dt - dt_snap) > 1e-9 * dt_snap:
        raise ValueError("snapshot cadence must be a positive multiple of dt")
    nsteps = int(round((T_end - t0) / dt))
    if abs(nsteps * dt - (T_end - t0)) > 1e-9 * max(1.0, T_end):
        raise ValueError("T_end - t0 must be a multiple of dt")
    if wrap_check:
        combined = FieldState(t0, sum(s.u for s in states), sum(s.v for s in states), grid)
        check_wrap(combined, T_end)
    observers = list(observers)
    stepper = StrangStepper(grid, sources, dt)
    us = [s.u for s in states]
    vs = [s.v for s in states]

    def emit(t):
        total = us[0] if len(us) == 1 else sum(us)
        cube = total**3
        fields = {}
        for name, u, v, src in zip(names, us, vs, sources):
            fields[name] = (u, v, second_time_derivative(u, grid, src, cube))
        if len(us) > 1:
            fields["u"] = (total, sum(vs), second_time_derivative(total, grid, total_coeff, cube))
        fields["_H"] = hamiltonian(FieldState(t, total, sum(vs) if len(vs) > 1 else vs[0], grid), coeffs)
        for obs in observers:
            obs(t, fields)

    emit(t0)
    if not any(stepper.active):
        # free evolution: jump straight to each snapshot with the exact flow
        jx = japanese(grid.rwavenumbers)
        hats = [(np.fft.rfft(u), np.fft.rfft(v)) for u, v in zip(us, vs)]
        for k in range(sub, nsteps + sub, sub):
            k = min(k, nsteps)
            tau = k * dt
            c, sn = np.cos(tau * jx), np.sin(tau * jx)
            us = [np.fft.irfft(c * U + sn / jx * V, n=grid.n) for U, V in hats]
            vs = [np.fft.irfft(-sn * jx * U + c * V, n=grid.n) for U, V in hats]
            emit(t0 + tau)
        return us, vs
    for k in range(1, nsteps + 1):
        us, vs = stepper.step(us, vs)
        if k % sub == 0 or k == nsteps:
            t = t0 + k * dt
            if not all(np.all(np.isfinite(u)) for u in us):
                raise BlowUpError(f"non-finite values at t={t:g}")
            emit(t)
    return us, vs


class TrajectoryRecorder:
    """Observer that stores snapshots of one component, optionally only inside a time window."""

    def __init__(self, grid: SpatialGrid, component: str = "u", t_min: float = -math.inf,
                 t_max: float = math.inf, spectral_tol: float = 1e-13, metadata: dict | None = None):
        self.component = component
        self.t_min, self.t_max = t_min, t_max
        self.trajectory = Trajectory(grid, metadata=dict(metadata or {}), spectral_tol=spectral_tol)
        self.hamiltonian: list[tuple[float, float]] = []

    def __call__(self, t: float, fields: dict) -> None:
        self.hamiltonian.append((t, fields["_H"]))
        if self.t_min - 1e-12 <= t <= self.t_max + 1e-12:
            self.trajectory.append(t, *fields[self.component])


def _finish(rec: TrajectoryRecorder, extra: dict) -> Trajectory:
    traj = rec.trajectory
    H = np.array([h for _, h in rec.hamiltonian])
    traj.metadata.update(extra)
    traj.metadata["hamiltonian"] = H.tolist()
    H0 = H[0]
    traj.metadata["hamiltonian_drift"] = float(np.max(np.abs(H - H0)) / abs(H0)) if H0 else 0.0
    return traj


def evolve(data: FieldState, coeffs: CoefficientProfile, T_end: float, dt: float,
           dt_snap: float, observers: Iterable[Observer] = (), store: bool = True,
           wrap_check: bool = True, spectral_tol: float = 1e-13,
           metadata: dict | None = None) -> Trajectory:
    """Integrate from ``data`` to ``T_end``; snapshots every ``dt_snap``.

    ``observers`` are called as ``obs(t, fields)`` at each snapshot with
    ``fields['u'] = (u, u_t, u_tt)``. With ``store=False`` only the first and last
    snapshots are kept.
    """
    meta = {"dt": dt, "dt_snap": dt_snap, "coefficients": coeffs.to_dict(), **(metadata or {})}
    rec = TrajectoryRecorder(data.grid, "u", spectral_tol=spectral_tol, metadata=meta)
    if not store:
        rec.t_max = data.t
    src = coeffs.samples(data.grid)
    us, vs = _run([data], [src], T_end, dt, dt_snap, ["u"], [rec, *observers], src, coeffs, wrap_check)
    traj = _finish(rec, {})
    if not store:
        cube = us[0] ** 3
        traj.append(T_end, us[0], vs[0], second_time_derivative(us[0], data.grid, src, cube))
    return traj


def evolve_decomposed(data: FieldState, coeffs: CoefficientProfile, T_end: float, dt: float,
                      dt_snap: float, observers: Iterable[Observer] = (), store: bool = True,
                      wrap_check: bool = True, spectral_tol: float = 1e-13,
                      metadata: dict | None = None) -> tuple[Trajectory, Trajectory]:
    """Co-evolve u0 (source beta0 u^3, data (f, g)) and u1 (source beta(x) u^3, zero data).

    Observers receive ``fields`` with keys ``u0``, ``u1`` and ``u`` (the sum).
    """
    grid = data.grid
    zero = FieldState(data.t, np.zeros(grid.n), np.zeros(grid.n), grid)
    meta = {"dt": dt, "dt_snap": dt_snap, "coefficients": coeffs.to_dict(), **(metadata or {})}
    rec0 = TrajectoryRecorder(grid, "u0", spectral_tol=spectral_tol, metadata=meta)
    rec1 = TrajectoryRecorder(grid, "u1", spectral_tol=spectral_tol, metadata=meta)
    if not store:
        rec0.t_max = rec1.t_max = data.t
    sources = [np.full(grid.n, float(coeffs.beta0)), coeffs.beta(grid.x)]
    _run([data, zero], sources, T_end, dt, dt_snap, ["u0", "u1"], [rec0, rec1, *observers],
         coeffs.samples(grid), coeffs, wrap_check)
    return _finish(rec0, {"component": "u0"}), _finish(rec1, {"component": "u1"})


# -- weighted bulk norms ------------------------------------------------------------


def _l2(f: np.ndarray, grid: SpatialGrid) -> float:
    return math.sqrt(float(np.sum(np.abs(f) ** 2)) * grid.spacing)


def cone_mask(t: float, x: np.ndarray, R: float) -> np.ndarray:
    """Sharp indicator of S_t^R = {t^2 - x^2 <= R^2} (t >= 1)."""
    return (t * t - x * x <= R * R).astype(float)


def u1_norms_of_state(state: FieldState, R: float) -> np.ndarray:
    """<x>^{-2} chi-weighted L2 norms of u1, d_x u1, d_x^2 u1 and d_x d_t u1."""
    if R < 1:
        raise ValueError("R must be >= 1")
    grid = state.grid
    w = japanese(grid.x) ** -2 * cone_mask(state.t, grid.x, R)
    fields = (state.u, derivative(state.u, grid), derivative(state.u, grid, 2), derivative(state.v, grid))
    return np.array([_l2(w * f, grid) for f in fields])


def weighted_u1_norms(traj_u1: Trajectory, traj_u: Trajectory | None, R: float, t: float) -> np.ndarray:
    """The four weighted u1 norms at snapshot ``t`` (``traj_u`` only checks the time grid)."""
    if traj_u is not None:
        traj_u.index(t)
    return u1_norms_of_state(traj_u1.state_at(t), R)


def lorentz_boost_samples(state: FieldState) -> np.ndarray:
    """Z u = t d_x u + x d_t u."""
    return state.t * derivative(state.u, state.grid) + state.grid.x * state.v


def bulk_norms_of_states(state: FieldState, state_u0: FieldState | None = None,
                         state_u1: FieldState | None = None, R: float = math.inf) -> dict[str, float]:
    chi = cone_mask(state.t, state.grid.x, R)
    out = {"dt_u": _l2(chi * state.v, state.grid),
           "Zu": _l2(chi * lorentz_boost_samples(state), state.grid)}
    for key, st in (("Zu0", state_u0), ("Zu1", state_u1)):
        if st is not None:
            out[key] = _l2(chi * lorentz_boost_samples(st), state.grid)
    return out


def bulk_growth_norms(traj: Trajectory, traj_u0: Trajectory | None, traj_u1: Trajectory | None,
                      R: float, t: float) -> dict[str, float]:
    """||chi d_t u||, ||chi Z u|| and, when components are given, ||chi Z u_l||."""
    if R < 1:
        raise ValueError("R must be >= 1")
    return bulk_norms_of_states(traj.state_at(t),
                                traj_u0.state_at(t) if traj_u0 is not None else None,
                                traj_u1.state_at(t) if traj_u1 is not None else None, R)


class NormMonitor:
    """Observer recording the weighted u1 norms and the bulk norms at every snapshot in a time window."""

    def __init__(self, grid: SpatialGrid, R: float, t_min: float, t_max: float):
        if R < 1:
            raise ValueError("R must be >= 1")
        self.grid, self.R = grid, R
        self.t_min, self.t_max = t_min, t_max
        self.rows: list[dict] = []

    def __call__(self, t: float, fields: dict) -> None:
        if not self.t_min - 1e-9 <= t <= self.t_max + 1e-9:
            return
        st = {k: FieldState(t, *fields[k][:2], self.grid) for k in ("u", "u0", "u1") if k in fields}
        row = {"t": t}
        if "u1" in st:
            n = u1_norms_of_state(st["u1"], self.R)
            row.update({"u1": n[0], "dx_u1": n[1], "dxx_u1": n[2], "dxdt_u1": n[3]})
        row.update(bulk_norms_of_states(st["u"], st.get("u0"), st.get("u1"), self.R))
        self.rows.append(row)
