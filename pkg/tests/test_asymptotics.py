import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import nlkg.asymptotics as asy
from nlkg.grid import SpatialGrid, derivative, lp_project_high
from nlkg.hyperbolic import HyperbolicSlice, y_grid

YG = y_grid(2.0, 256)


def _slice(rho, w, wrho=None):
    z = np.zeros(YG.n)
    return HyperbolicSlice(float(rho), YG, z, z, z, np.asarray(w, float),
                           np.zeros(YG.n) if wrho is None else np.asarray(wrho, float))


def _record(rhos, W, beta0=0.0):
    return asy.AsymptoticsRecord(YG, np.asarray(rhos, float), np.asarray(W, complex), 0.3, beta0)


# -- oscillation variables ------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 1e3), st.floats(-math.pi, math.pi))
def test_w_plus_of_pure_oscillation(rho, theta):
    W = asy.w_plus(np.array([math.sin(rho + theta)]), np.array([math.cos(rho + theta)]), rho)
    assert abs(W[0] - complex(math.cos(theta), math.sin(theta))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.0, 500.0))
def test_reconstruction_and_modulus_identities(seed, rho):
    rng = np.random.default_rng(seed)
    Pw, dPw = rng.standard_normal(64), rng.standard_normal(64)
    Wp = asy.w_plus(Pw, dPw, rho)
    assert np.max(np.abs(asy.reconstruct_Pw(Wp, rho) - Pw)) < 1e-12
    assert np.max(np.abs(np.abs(Wp) ** 2 - asy.m_quantity(Pw, dPw))) < 1e-12 * max(1.0, np.max(np.abs(Wp)) ** 2)
    assert np.max(np.abs(asy.w_minus(Pw, dPw, rho) - np.conj(Wp))) < 1e-12


def test_zero_inputs():
    z = np.zeros(8)
    assert not np.any(asy.w_plus(z, z, 3.0))
    assert not np.any(asy.m_quantity(z, z))


def test_rho_sequence():
    r = asy.rho_sequence()
    assert r.size == 41 and r[0] == 4.0 and abs(r[-1] - 128.0) < 1e-12
    np.testing.assert_allclose(r[8::8] / r[:-8:8], 2.0, rtol=1e-14)
    assert asy.rho_sequence(rho_max=64.0)[-1] == pytest.approx(64.0)


# -- low-frequency profile ------------------------------------------------------------


def test_low_freq_profile_keeps_slow_modes_and_differences_in_rho():
    k = YG.wavenumbers[1]  # pi/2, inside the flat part of the cutoff at 10^0.3
    h = 0.05
    rho = 10.0
    shape = np.cos(k * YG.x)
    s_prev, s, s_next = (_slice(r, math.sin(r) * shape) for r in (rho - h, rho, rho + h))
    Pw, dPw = asy.low_freq_profile(s, s_prev, s_next, 0.3)
    assert np.max(np.abs(Pw - s.w)) < 1e-13
    expect = (math.sin(rho + h) - math.sin(rho - h)) / (2 * h) * shape
    assert np.max(np.abs(dPw - expect)) < 1e-13
    with pytest.raises(ValueError):
        asy.low_freq_profile(s, s, s_next, 0.3)


def test_low_freq_profile_removes_fast_modes():
    k = YG.wavenumbers[40]  # about 63, far above 10^0.3
    s_prev, s, s_next = (_slice(r, np.cos(k * YG.x)) for r in (9.95, 10.0, 10.05))
    Pw, _ = asy.low_freq_profile(s, s_prev, s_next, 0.3)
    assert np.max(np.abs(Pw)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.0, 8.0))
def test_bernstein_bound_for_high_part(seed, lam):
    # sup |P_{>lam} w| <= lam^{-1/2} ||d_y w||_2 for smooth periodic w
    g = SpatialGrid(256, 2 * math.pi)
    rng = np.random.default_rng(seed)
    modes = np.arange(1, 20)
    w = sum(rng.standard_normal() * np.cos(m * g.x + rng.uniform(0, 6.3)) / m**2 for m in modes)
    high = np.max(np.abs(lp_project_high(w, g, lam)))
    dw = math.sqrt(np.sum(derivative(w, g) ** 2) * g.spacing)
    assert high <= lam**-0.5 * dw * (1 + 1e-9)


# -- records ----------------------------------------------------------------------------


def test_build_record_of_zero_solution():
    rhos = asy.rho_sequence(4.0, 8, 12)
    z = np.zeros(YG.n)
    triples = [(_slice(r - 0.05, z), _slice(r, z), _slice(r + 0.05, z)) for r in rhos]
    rec = asy.build_record(triples)
    assert not np.any(rec.Wplus) and not np.any(rec.M)
    b = asy.amplitude_b(rec)
    assert not np.any(b) and not np.any(asy.significant(b))
    with pytest.raises(ValueError):
        asy.build_record(triples[::-1])


def test_amplitude_b_of_converging_sequence():
    rhos = asy.rho_sequence(4.0, 8, 25)  # 4 .. 32
    prof = np.exp(-YG.x**2)
    W = prof[None, :] * (1 + 0.5 / rhos[:, None])
    rec = _record(rhos, W)
    b = asy.amplitude_b(rec)
    np.testing.assert_allclose(b, prof * (1 + 0.5 / 32))
    # over [16, 32] the modulus moves by 0.5 (1/16 - 1/32) relative to 1 + 1/64
    assert rec.diagnostics["b_last_dyad_variation"] == pytest.approx(0.5 * (1 / 16 - 1 / 32) / (1 + 0.5 / 32))
    assert rec.diagnostics["b_converged"]
    # ||b(rho) - b(2 rho)||_{L^2_y} = 0.5 (1/rho - 1/(2 rho)) ||exp(-y^2)||, with the window error below 1e-3
    r0, r1, d = rec.diagnostics["b_l2_cauchy"][0]
    assert (r0, r1) == (4.0, 8.0)
    assert d == pytest.approx(0.0625 * (math.pi / 2) ** 0.25, rel=1e-3)
    assert len(rec.diagnostics["b_l2_cauchy"]) == 17
    with pytest.raises(ValueError):
        asy.amplitude_b(_record(rhos[:5], W[:5]))
    with pytest.raises(ValueError):
        asy.amplitude_b(_record(rhos[:8] * 0 + np.linspace(4, 6, 8), W[:8]))


def test_synthetic_log_phase_slope():
    rhos = asy.rho_sequence(4.0, 8, 41)
    for kappa in (0.0, 0.02, 0.375, 1.3):
        W = np.exp(-1j * kappa * np.log(rhos))
        assert abs(asy.phase_fit_synthetic(rhos, W) + kappa) < 1e-10


def test_phase_fit_per_column_and_reference():
    rhos = asy.rho_sequence(4.0, 8, 41)
    b = np.exp(-YG.x**2)
    slope = -0.375 * b**2 / np.cosh(YG.x)
    transient = np.exp(0.3j * np.sin(rhos))[:, None]
    W = b[None, :] * np.exp(1j * slope[None, :] * np.log(rhos)[:, None]) * transient
    rec = _record(rhos, W)
    ref = b[None, :] * transient
    c = asy.phase_fit(rec, reference=ref)
    sig = asy.significant(b)
    assert np.all(np.isnan(c[~sig]))
    assert np.max(np.abs(c[sig] - slope[sig])) < 1e-10


def test_phase_unwrap_flag():
    rhos = np.geomspace(4, 64, 17)
    W = np.exp(1j * np.where(np.arange(17) % 2, 2.0, 0.0))[:, None] * np.ones((1, YG.n))
    rec = _record(rhos, W)
    with pytest.raises(asy.PhaseUnwrapError):
        asy.phase_fit(rec, columns=[YG.n // 2])


def test_extract_a_recovers_profile_and_rate():
    rhos = asy.rho_sequence(4.0, 8, 41)
    beta0 = 1.0
    a0 = np.exp(-YG.x**2) * np.exp(0.7j)
    b = np.abs(a0)
    theta = asy.correction_phase(beta0, b[None, :], YG.x[None, :], rhos[:, None])
    # a unimodular remainder keeps |W+| = |a0| at every rho
    W = a0[None, :] * np.exp(-1j * theta) * np.exp(0.1j * rhos[:, None] ** -0.5)
    rec = _record(rhos, W, beta0)
    a, nu = asy.extract_a(rec)
    sig = asy.significant(rec.b)
    assert np.max(np.abs(np.abs(a[sig]) - rec.b[sig])) < 1e-15
    np.testing.assert_allclose(np.angle(a[sig]), 0.7 + 0.1 / math.sqrt(rhos[-1]), atol=1e-12)
    assert nu > 0


def test_linear_record_needs_no_correction():
    rhos = asy.rho_sequence(4.0, 8, 17)
    W = np.tile(np.exp(-YG.x**2) * (1 + 0.2j), (rhos.size, 1))
    rec = _record(rhos, W, 0.0)
    a, _ = asy.extract_a(rec)
    np.testing.assert_array_equal(a, W[-1])


def test_predicted_u_and_reconstruction():
    rhos = asy.rho_sequence(4.0, 8, 17)
    a0 = 0.3 - 0.4j
    W = np.full((rhos.size, YG.n), a0)
    rec = _record(rhos, W, 0.0)
    j = rec.column(0.0)
    y = float(YG.x[j])
    actual = np.imag(np.exp(1j * rhos) * a0) / np.sqrt(rhos * np.cosh(y))
    pred, act, err = asy.asymptotic_reconstruction(rec, actual, rhos, 0.0)
    assert np.max(err) < 1e-14
    # zero solution: both sides vanish
    zrec = _record(rhos, np.zeros((rhos.size, YG.n)), 1.0)
    pred, act, err = asy.asymptotic_reconstruction(zrec, np.zeros(rhos.size), rhos, 0.0)
    assert not np.any(pred) and not np.any(err)
