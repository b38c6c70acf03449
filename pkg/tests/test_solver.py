import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlkg.coefficients import CoefficientProfile
from nlkg.grid import SpatialGrid
from nlkg.propagator import linear_flow
from nlkg.solver import (BlowUpError, FieldState, InitialDataSpec, NormMonitor, Profile,
                         StrangStepper, Trajectory, WrapRiskError, bulk_norms_of_states,
                         epsilon_norm, evolve, evolve_decomposed, hamiltonian,
                         make_initial_data, step_strang, support_width, u1_norms_of_state)

G = SpatialGrid(1024, 80.0)
GAUSS_BETA = CoefficientProfile(1.0, "gaussian", 1.0, 1.0)
FREE = CoefficientProfile(0.0)


def _data(eps=0.05, grid=G):
    spec = InitialDataSpec(Profile("gaussian", 1.0, 1.0), Profile("gaussian", 1.0, 1.0), 2, eps)
    return make_initial_data(spec, grid)[0]


def _mirror(f):
    # x -> -x on the periodic grid maps index i to n - i
    return np.concatenate([f[:1], f[:0:-1]])


# -- initial data ---------------------------------------------------------------------


def test_profiles():
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(Profile("gaussian", 2.0, 1.5, 0.5)(x), 2 * np.exp(-((x - 0.5) / 1.5) ** 2))
    np.testing.assert_allclose(Profile("sech", 1.0, 2.0)(x), 1 / np.cosh(x / 2))
    assert not np.any(Profile()(x))
    with pytest.raises(ValueError):
        Profile("box", 1.0)


def test_epsilon_rescaling_hits_target():
    st0, eps = make_initial_data(InitialDataSpec(Profile("gaussian", 1.0, 1.0), Profile("sech", 3.0, 2.0), 2, 0.03), G)
    assert abs(eps - 0.03) < 1e-12
    assert abs(epsilon_norm(st0.u, st0.v, G, 2) - 0.03) < 1e-12
    assert st0.t == 1.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 10.0))
def test_epsilon_norm_is_homogeneous(c):
    st0, eps = make_initial_data(InitialDataSpec(Profile("gaussian", 1.0, 1.0), Profile("gaussian", 0.5, 2.0)), G)
    assert abs(epsilon_norm(c * st0.u, c * st0.v, G) - c * eps) <= 1e-12 * c * eps


def test_narrow_profile_rejected():
    with pytest.raises(ValueError, match="8 grid spacings"):
        make_initial_data(InitialDataSpec(Profile("gaussian", 1.0, 0.1)), G)
    with pytest.raises(ValueError):
        make_initial_data(InitialDataSpec(epsilon=0.1), G)


def test_nonfinite_state_rejected():
    u = np.zeros(G.n)
    u[3] = np.nan
    with pytest.raises(BlowUpError):
        FieldState(1.0, u, np.zeros(G.n), G)


def test_support_width_gaussian():
    st0 = FieldState(1.0, np.exp(-G.x**2), np.zeros(G.n), G)
    # exp(-x^2) > 1e-10 for |x| < sqrt(10 ln 10)
    assert abs(support_width(st0) - 2 * math.sqrt(10 * math.log(10))) < 2 * G.spacing


# -- stepping -------------------------------------------------------------------------


def test_zero_coefficient_step_is_exact_linear_flow():
    st0 = _data()
    out = step_strang(st0, 0.37, FREE)
    ref = linear_flow(st0, 0.37)
    assert np.max(np.abs(out.u - ref.u)) < 1e-14 and np.max(np.abs(out.v - ref.v)) < 1e-14


def test_zero_state_stays_zero():
    z = FieldState(1.0, np.zeros(G.n), np.zeros(G.n), G)
    out = step_strang(z, 0.1, GAUSS_BETA)
    assert not np.any(out.u) and not np.any(out.v)


def test_step_is_time_reversible():
    st0 = _data(0.5)
    s = st0
    for _ in range(50):
        s = step_strang(s, 0.05, GAUSS_BETA)
    for _ in range(50):
        s = step_strang(s, -0.05, GAUSS_BETA)
    assert np.max(np.abs(s.u - st0.u)) < 1e-11 and np.max(np.abs(s.v - st0.v)) < 1e-11


def test_stepper_rejects_bad_dt():
    with pytest.raises(ValueError):
        StrangStepper(G, [1.0], 0.0)
    with pytest.raises(ValueError):
        StrangStepper(G, [1.0], float("inf"))


def test_hamiltonian_of_pure_velocity_data():
    A, w = 0.7, 1.5
    st0 = FieldState(1.0, np.zeros(G.n), A * np.exp(-(G.x / w) ** 2), G)
    assert abs(hamiltonian(st0, GAUSS_BETA) - 0.5 * A**2 * w * math.sqrt(math.pi / 2)) < 1e-12


def test_hamiltonian_drift_small():
    traj = evolve(_data(0.05), GAUSS_BETA, 20.0, 1e-3, 0.5, store=False)
    assert traj.metadata["hamiltonian_drift"] <= 1e-6


def test_second_order_in_dt():
    g = SpatialGrid(512, 64.0)
    st0 = make_initial_data(InitialDataSpec(Profile("gaussian", 0.5, 1.0), Profile("gaussian", 0.25, 1.0)), g)[0]
    finals = [evolve(st0, GAUSS_BETA, 3.0, dt, 1.0, store=False).state(-1).u
              for dt in (0.1, 0.05, 0.025)]
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    assert 1.8 <= math.log2(e1 / e2) <= 2.2


def test_even_data_stay_even():
    traj = evolve(_data(0.3), GAUSS_BETA, 6.0, 0.01, 1.0)
    for k in range(len(traj)):
        s = traj.state(k)
        assert np.max(np.abs(s.u - _mirror(s.u))) < 1e-11
        assert np.max(np.abs(s.v - _mirror(s.v))) < 1e-11


def test_evolve_argument_checks():
    st0 = _data()
    with pytest.raises(ValueError):
        evolve(st0, GAUSS_BETA, 2.0, 0.01, 0.015)
    with pytest.raises(ValueError):
        evolve(st0, GAUSS_BETA, 0.5, 0.01, 0.1)
    with pytest.raises(ValueError):
        evolve(st0, GAUSS_BETA, 2.0, -0.01, 0.1)


def test_wrap_risk_detected():
    g = SpatialGrid(256, 32.0)
    st0 = _data(0.05, g)
    with pytest.raises(WrapRiskError, match="T_end=20"):
        evolve(st0, GAUSS_BETA, 20.0, 0.01, 0.5)


def test_blowup_reported():
    g = SpatialGrid(512, 32.0)
    st0 = make_initial_data(InitialDataSpec(Profile("gaussian", 6.0, 1.0), Profile("gaussian", 6.0, 1.0)), g)[0]
    with pytest.raises(BlowUpError):
        evolve(st0, CoefficientProfile(5.0), 20.0, 0.05, 0.5, wrap_check=False)


# -- decomposition --------------------------------------------------------------------


def test_decomposition_sums_to_full_solution():
    st0 = _data(0.3)
    full = evolve(st0, GAUSS_BETA, 8.0, 0.01, 0.5)
    u0, u1 = evolve_decomposed(st0, GAUSS_BETA, 8.0, 0.01, 0.5)
    both = u0 + u1
    for k in range(len(full)):
        assert np.max(np.abs(both.state(k).u - full.state(k).u)) < 1e-8
        assert np.max(np.abs(both.state(k).v - full.state(k).v)) < 1e-8


def test_constant_coefficient_leaves_u1_zero():
    u0, u1 = evolve_decomposed(_data(0.3), CoefficientProfile(1.0), 6.0, 0.01, 0.5)
    assert max(np.max(np.abs(u1.state(k).u)) for k in range(len(u1))) <= 1e-9


# -- trajectories ---------------------------------------------------------------------


def test_trajectory_round_trip_and_lookup():
    traj = evolve(_data(0.3), GAUSS_BETA, 3.0, 0.01, 0.5, spectral_tol=0.0)
    ref = evolve(_data(0.3), GAUSS_BETA, 3.0, 0.01, 0.5, spectral_tol=1e-13)
    assert np.allclose(traj.times, [1, 1.5, 2, 2.5, 3])
    for k in range(len(traj)):
        a, b = traj.state(k), ref.state(k)
        assert np.max(np.abs(a.u - b.u)) <= 1e-12 * np.max(np.abs(a.u))
    assert traj.state_at(2.0).t == 2.0
    with pytest.raises(KeyError):
        traj.index(2.2)
    with pytest.raises(ValueError):
        traj.append(1.0, np.zeros(G.n), np.zeros(G.n), np.zeros(G.n))
    with pytest.raises(ValueError):
        traj + Trajectory(SpatialGrid(512, 80.0))


def test_observer_sees_equation_consistent_acceleration():
    seen = []
    evolve(_data(0.3), GAUSS_BETA, 2.0, 0.01, 0.5, observers=[lambda t, f: seen.append((t, f["u"]))])
    t, (u, v, a) = seen[-1]
    expect = np.fft.ifft(-(G.wavenumbers**2) * np.fft.fft(u)).real - u + GAUSS_BETA.samples(G) * u**3
    assert np.max(np.abs(a - expect)) < 1e-12


# -- weighted norms -------------------------------------------------------------------


def test_u1_norms_of_known_field():
    st0 = FieldState(3.0, np.exp(-G.x**2), np.zeros(G.n), G)
    n = u1_norms_of_state(st0, math.inf)
    w = (1 + G.x**2) ** -1
    assert abs(n[0] - math.sqrt(np.sum((w * st0.u) ** 2) * G.spacing)) < 1e-14
    assert n[3] == 0.0
    with pytest.raises(ValueError):
        u1_norms_of_state(st0, 0.5)


def test_bulk_norms_and_cone_cutoff():
    x = G.x
    st0 = FieldState(10.0, np.exp(-(x - 30) ** 2), np.exp(-(x - 30) ** 2), G)
    inside = bulk_norms_of_states(st0, R=math.inf)
    assert inside["dt_u"] > 0.5
    # points near x = 30 have t^2 - x^2 < 0 <= R^2; points near the origin are cut when R is small
    far = FieldState(10.0, np.exp(-x**2), np.exp(-x**2), G)
    # only |x| >= sqrt(96) survives, where the Gaussian is below e^{-96}
    assert bulk_norms_of_states(far, R=2.0)["dt_u"] < 1e-40
    # Z u = t u_x + x u_t
    zu = bulk_norms_of_states(FieldState(2.0, np.zeros(G.n), np.exp(-x**2), G))["Zu"]
    assert abs(zu - math.sqrt(np.sum((x * np.exp(-x**2)) ** 2) * G.spacing)) < 1e-14


def test_norm_monitor_rows():
    mon = NormMonitor(G, math.inf, 2.0, 4.0)
    evolve_decomposed(_data(0.3), GAUSS_BETA, 5.0, 0.01, 0.5, observers=[mon])
    assert [r["t"] for r in mon.rows] == [2.0, 2.5, 3.0, 3.5, 4.0]
    assert set(mon.rows[0]) == {"t", "u1", "dx_u1", "dxx_u1", "dxdt_u1", "dt_u", "Zu", "Zu0", "Zu1"}
    assert all(r["u1"] > 0 for r in mon.rows)
    with pytest.raises(ValueError):
        NormMonitor(G, 0.5, 0, 1)
