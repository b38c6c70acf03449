"""Acceptance suite: one PASS/FAIL line per criterion.

Each experiment runs once with its default configuration; the criteria below read
the measured values from the reports and apply their own tolerances. Run with
``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import math
import sys

import numpy as np
import pytest

from nlkg.coefficients import CoefficientProfile
from nlkg.config import defaults
from nlkg.experiments import run_experiment
from nlkg.grid import SpatialGrid, forward_transform, lp_project_band, lp_project_low
from nlkg.hyperbolic import coercive_integrand, interior_integrand
from nlkg.propagator import WeightedOperator, WeightedOperatorSpec, linear_flow, power_iteration_norm
from nlkg.solver import InitialDataSpec, Profile, evolve, evolve_decomposed, make_initial_data, step_strang
import nlkg.asymptotics as asy

_REPORTS = {}


def report(name):
    if name not in _REPORTS:
        _REPORTS[name] = run_experiment(name, defaults(name))
    return _REPORTS[name]


def measured(rep, prefix):
    hits = [c for c in rep.checks if c.rule.startswith(prefix)]
    if len(hits) != 1:
        raise LookupError(f"{rep.name}: {len(hits)} checks start with {prefix!r}")
    return hits[0].measured


def within(v, lo, hi):
    return bool(np.isfinite(v) and lo <= v <= hi)


# -- criteria -----------------------------------------------------------------------------


def criterion_1():
    rep = report("local-decay")
    s = measured(rep, "local decay slope [a1_plain]")
    ok = within(s, -0.6, -0.4) and rep.wall_clock <= 300
    return ok, f"slope={s:.4f} (target -0.5 +- 0.1), runtime={rep.wall_clock:.1f}s (<= 300s)"


def criterion_2():
    rep = report("local-decay")
    s1 = measured(rep, "local decay slope [a2_dx_over_jap]")
    s2 = measured(rep, "local decay slope [a2_dx_H1]")
    ok = within(s1, -1.65, -1.35) and within(s2, -1.65, -1.35)
    return ok, f"slopes={s1:.4f}, {s2:.4f} (target -1.5 +- 0.15)"


def criterion_3():
    rep = report("interior-decay")
    f = measured(rep, "interior sup t^1/2|u| flatness")
    ok = within(f, 0, 1.25) and rep.wall_clock <= 900
    return ok, f"max factor={f:.4f} (<= 1.25), runtime={rep.wall_clock:.1f}s (<= 900s)"


def criterion_4():
    rep = report("exterior-decay")
    r = measured(rep, "exterior <x>^(N/2)|u|/eps band-to-band ratio")
    return within(r, 0, 1.3), f"max band-to-band ratio={r:.4g} (<= 1.3)"


def criterion_5():
    rep = report("modified-scattering")
    s = measured(rep, "log-phase slope / b(0)^2")
    cs = measured(rep, "companion log-phase slope / b(0)^2")
    ok = within(s, -0.4125, -0.3375) and within(cs, -0.02, 0.02)
    return ok, f"slope/b^2={s:.4f} (-3/8 +- 10%), companion={cs:.4f} (0 +- 0.02)"


def criterion_6():
    rep = report("modified-scattering")
    m = measured(rep, "| |a(y)| - b(y) | / b(y)")
    return within(m, 0, 0.02), f"max relative mismatch={m:.3g} (<= 0.02)"


def criterion_7():
    rep = report("energy-growth")
    e = measured(rep, "interior energy growth exponent")
    return within(e, -math.inf, 0.1), f"2 delta={e:.4g} (<= 0.1)"


def criterion_8():
    rep = report("weighted-u1")
    s = [measured(rep, f"weighted {k} envelope slope") for k in ("u1", "dx_u1", "dxx_u1", "dxdt_u1")]
    ok = (within(s[0], -0.65, -0.35) and within(s[1], -1.7, -1.3)
          and within(s[2], -math.inf, -1.2) and within(s[3], -math.inf, -1.2))
    return ok, "slopes=" + ", ".join(f"{v:.4f}" for v in s) + " (-0.5 +- 0.15, -1.5 +- 0.2, <= -1.2, <= -1.2)"


def _property_suite():
    out = {}
    g = SpatialGrid(512, 64.0)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(g.n)
    out["unitarity"] = abs(np.linalg.norm(linear_flow(f, 37.3, "half_plus", g)) / np.linalg.norm(f) - 1)
    s = forward_transform(f, g)
    out["parseval"] = abs(np.sum(np.abs(s.coeffs) ** 2) * 2 * np.pi / g.length / (np.sum(f**2) * g.spacing) - 1)
    g2 = SpatialGrid(4096, 64.0)
    f2 = rng.standard_normal(g2.n)
    tel = lp_project_low(f2, g2, 1.0) + sum(lp_project_band(f2, g2, k) for k in range(1, 7))
    out["telescoping"] = float(np.max(np.abs(tel - lp_project_low(f2, g2, 64.0))))
    c = CoefficientProfile(1.0, "gaussian", 1.0, 1.0)
    gs = SpatialGrid(1024, 80.0)
    st0 = make_initial_data(InitialDataSpec(Profile("gaussian", 1.0, 1.0), Profile("gaussian", 1.0, 1.0), 2, 0.5), gs)[0]
    st = st0
    for _ in range(50):
        st = step_strang(st, 0.05, c)
    for _ in range(50):
        st = step_strang(st, -0.05, c)
    out["reversibility"] = float(max(np.max(np.abs(st.u - st0.u)), np.max(np.abs(st.v - st0.v))))
    small = make_initial_data(InitialDataSpec(Profile("gaussian", 1.0, 1.0), Profile("gaussian", 1.0, 1.0), 2, 0.05), gs)[0]
    d = [evolve(small, c, 20.0, dt, 1.0, store=False).metadata["hamiltonian_drift"] for dt in (0.02, 0.01)]
    out["drift_ratio"] = d[0] / d[1]
    full = evolve(st0, c, 8.0, 0.01, 0.5)
    u0, u1 = evolve_decomposed(st0, c, 8.0, 0.01, 0.5)
    both = u0 + u1
    out["decomposition"] = max(float(np.max(np.abs(both.state(k).u - full.state(k).u))) for k in range(len(full)))
    # finite propagation: compact-looking data stay inside |x| <= t - 1 + support
    gl = SpatialGrid(2048, 256.0)
    stl = make_initial_data(InitialDataSpec(g=Profile("gaussian", 1.0, 1.0), epsilon=0.05), gl)[0]
    trl = evolve(stl, c, 41.0, 0.02, 1.0, store=False)
    last = trl.state(len(trl) - 1)
    outside = np.abs(gl.x) > 40.0 + 12.0
    out["mass_leak"] = math.sqrt(np.sum(last.u[outside] ** 2 + last.v[outside] ** 2) * gl.spacing)
    t = rng.uniform(1, 50, 1000)
    x = t * rng.uniform(-0.99, 0.99, 1000)
    p, pt, px = rng.standard_normal((3, 1000))
    a, b = interior_integrand(p, pt, px, t, x), coercive_integrand(p, pt, px, t, x)
    out["coercive"] = float(np.max(np.abs(a - b) / np.maximum(1, np.abs(a))))
    Pw, dPw = rng.standard_normal((2, 256))
    out["reconstruction"] = float(np.max(np.abs(asy.reconstruct_Pw(asy.w_plus(Pw, dPw, 77.7), 77.7) - Pw)))
    gsvd = SpatialGrid(256, 64.0)
    worst = 0.0
    for spec in (WeightedOperatorSpec(a=1.0, t=5.0), WeightedOperatorSpec(a=2.0, derivative="dx_over_jap", t=5.0),
                 WeightedOperatorSpec(a=2.0, derivative="dx", input_norm="H1", t=5.0)):
        op = WeightedOperator(spec, gsvd)
        dense = np.linalg.svd(op.dense(), compute_uv=False)[0]
        worst = max(worst, abs(power_iteration_norm(op, tol=1e-12) - dense) / dense)
    out["svd"] = worst
    return out


PROPERTY_TOLERANCES = {
    "unitarity": (0, 1e-12), "parseval": (0, 1e-12), "telescoping": (0, 1e-12),
    "reversibility": (0, 1e-11), "drift_ratio": (3.0, 5.0), "decomposition": (0, 1e-8),
    "mass_leak": (0, 1e-9), "coercive": (0, 1e-10), "reconstruction": (0, 1e-12), "svd": (0, 1e-6),
}


def criterion_9():
    vals = _property_suite()
    bad = [k for k, (lo, hi) in PROPERTY_TOLERANCES.items() if not within(vals[k], lo, hi)]
    detail = ", ".join(f"{k}={v:.3g}" for k, v in vals.items())
    return not bad, detail + (f"; failing: {', '.join(bad)}" if bad else "")


def criterion_10():
    rep = report("convergence")
    orders = [c.measured for c in rep.checks if c.rule.startswith("Strang order")]
    red = measured(rep, "hyperbolic residual reduction factor")
    ok = bool(orders) and all(within(o, 1.8, 2.2) for o in orders) and within(red, 2.0, math.inf)
    return ok, "Strang orders=" + ", ".join(f"{o:.4f}" for o in orders) + f" (2 +- 0.2), residual reduction={red:.3g} (>= 2)"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 11)}


def _line(k, ok, detail):
    return f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, capsys):
    ok, detail = CRITERIA[k]()
    with capsys.disabled():
        print("\n" + _line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for k, fn in CRITERIA.items():
        ok, detail = fn()
        print(_line(k, ok, detail), flush=True)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
