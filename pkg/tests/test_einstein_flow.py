import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invmetrics import einstein_flow as ef
from invmetrics.geometry_core import poincare_disk, ricci

FIX = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def P():
    return ef.poincare_profile()


# ---- grid and profiles


@given(st.integers(1, 6))
def test_laplacian_exact_on_polynomials(k):
    grid = ef.cheb_grid(33, 0.9)
    s = grid.s
    assert np.allclose(grid.L @ s**k, k * k * s ** (k - 1), atol=1e-9)


def test_profile_curvature_matches_geometry_core(P):
    for s in (0.0, 0.3, 0.8):
        z = np.array([math.sqrt(s)])
        assert ricci(poincare_disk(), z)[0, 0].real == pytest.approx(-2 / (1 - s) ** 2, rel=1e-12)
    assert np.allclose(P.holomorphic_curvature(), -1.0, atol=1e-12)
    assert np.allclose(P.grid.L @ P.log_g, P.laplacian_log_g(), rtol=1e-7)


def test_profile_field_interpolates(P):
    f = P.field()
    for r in (0.0, 0.5, 0.9):
        assert f.matrix([r])[0, 0].real == pytest.approx(2 / (1 - r * r) ** 2, rel=1e-9)


def test_perturbed_laplacian_is_exact():
    Q = ef.perturbed_poincare(0.1)
    assert np.allclose(Q.grid.L @ Q.log_g, Q.laplacian_log_g(), rtol=1e-6)


def test_higher_dimension_behind_flag(P):
    with pytest.raises(NotImplementedError):
        ef.RadialProfile(P.grid, P.log_g, n=2)


# ---- Monge-Ampere


def test_newton_poincare_fixed_point(P):
    st_ = ef.ma_newton_solve(P, 0.0, np.zeros(P.grid.size))
    assert st_.residual < 1e-10 and np.abs(st_.u).max() < 1e-12


def test_newton_residual_monotone_and_positive():
    Q = ef.perturbed_poincare(0.1)
    s = ef.ma_newton_solve(Q, 0.0)
    assert s.residual < 1e-10
    assert all(b < a for a, b in zip(s.history, s.history[1:]))
    assert s.omega_t.min() > 0


def test_euclidean_self_convergence():
    coarse = ef.ma_newton_solve(ef.euclidean_profile(ef.cheb_grid(33, 0.81)), 1.0)
    fine = ef.ma_newton_solve(ef.euclidean_profile(ef.cheb_grid(321, 0.81)), 1.0)
    pc = coarse.u
    pf = ef.cheb_grid(321, 0.81).interpolant(fine.u)(ef.cheb_grid(33, 0.81).s)
    assert np.abs(pc - pf).max() < 1e-8


def test_t_doubling_reconverges_fast():
    Q = ef.perturbed_poincare(0.1)
    a = ef.ma_newton_solve(Q, 0.5)
    b = ef.ma_newton_solve(Q, 1.0, a.u)
    assert b.iterations <= 5


def test_positivity_precondition(P):
    with pytest.raises(ef.ContinuityStepTooLarge):
        ef.ma_newton_solve(P, 0.0, -10 * P.s**2 * 50)


def test_step_too_large():
    Q = ef.perturbed_poincare(0.1)
    with pytest.raises(ef.ContinuityStepTooLarge, match="continuity step too large"):
        ef.ma_newton_solve(Q, 0.0, np.full(Q.grid.size, 5.0), max_iter=1)


# ---- continuity path


def test_path_poincare_returns_poincare(P):
    r = ef.continuity_path(P)
    assert r.ke_defect < 1e-6
    assert np.abs(r.ke.log_g - P.log_g).max() < 1e-6


def test_path_uniqueness_from_twice_poincare(P):
    r = ef.continuity_path(P.scaled(2.0))
    assert r.ke_defect < 1e-6
    assert np.abs(np.exp(r.ke.log_g - P.log_g) - 1).max() < 1e-6


def test_path_perturbed_constant_fixture():
    ref = json.loads((FIX / "ke_perturbation.json").read_text())
    Q = ef.perturbed_poincare(0.1)
    r = ef.continuity_path(Q)
    P = ef.poincare_profile()
    dev = np.abs(r.ke.log_g - P.log_g)
    assert r.ke_defect < 1e-6
    assert dev.max() / 0.1 == pytest.approx(ref["C_full"], abs=1e-6)
    inner = np.abs(P.grid.interpolant(r.ke.log_g - P.log_g)(np.linspace(0, 0.8, 81)))
    assert inner.max() / 0.1 == pytest.approx(ref["C_inner"], abs=1e-6)


def test_path_start_must_be_positive():
    with pytest.raises(ValueError):
        ef.continuity_path(ef.euclidean_profile(), t_start=0.0)


def test_window_insensitivity_poincare_family():
    vals = []
    for s_max in (0.98, 0.99):
        r = ef.continuity_path(ef.poincare_profile(grid=ef.cheb_grid(129, s_max)).scaled(2.0))
        vals.append(r.ke.grid.interpolant(r.ke.log_g)(np.linspace(0, 0.8, 50)))
    assert np.abs(vals[0] - vals[1]).max() < 1e-6


# ---- a priori monitor


def test_apriori_sharp_case(P):
    s = ef.ma_newton_solve(P, 0.0, np.zeros(P.grid.size))
    rep = ef.apriori_monitor(s, P, ef.kappa_lower(P))
    assert rep.trace_bound == pytest.approx(1.0, abs=1e-12)
    assert rep.sup_trace == pytest.approx(1.0, abs=1e-6)
    assert rep.ok


def test_apriori_tripwire(P):
    s = ef.ma_newton_solve(P, 0.0, np.zeros(P.grid.size))
    shifted = ef.ContinuityState(s.t, s.u + 1, s.residual, s.sup_u + 1, s.inf_u + 1, s.trace, s.omega_t, 0)
    rep = ef.apriori_monitor(shifted, P, 1.0)
    assert not rep.residual_ok and not rep.ok


def test_apriori_euclidean_start_strictly_below():
    E = ef.euclidean_profile(ef.cheb_grid(65, 0.81))
    s = ef.ma_newton_solve(E, 1.0)
    # kappa proxy from the solved metric omega_t
    kap = 1.0 / s.trace.max()
    rep = ef.apriori_monitor(s, E, kap * 0.5)
    assert rep.sup_trace < rep.trace_bound


# ---- Ricci flow


@pytest.fixture(scope="module")
def grid33():
    return ef.cheb_grid(33, 0.98)


def test_flow_einstein_linear_growth(grid33):
    P = ef.poincare_profile(grid=grid33)
    res = ef.ricci_flow_run(P, 0.1, 1e-3)
    for t, w in zip(res.times[::20], res.log_g[::20]):
        assert np.abs(np.exp(w - P.log_g) - (1 + 4 * t)).max() < 1e-8


def test_flow_homothety(grid33):
    P = ef.poincare_profile(grid=grid33)
    lam = 3.0
    a = ef.ricci_flow_run(P.scaled(lam), 0.06, 1e-3)
    b = ef.ricci_flow_run(P, 0.02, 1e-3 / lam)
    # g_lam(t) = lam * g(t / lam)
    assert np.abs(np.exp(a.log_g[-1] - b.log_g[-1]) - lam).max() < 1e-8


def test_flow_flat_is_stationary(grid33):
    res = ef.ricci_flow_run(ef.euclidean_profile(grid33), 0.05, 1e-3)
    assert np.abs(res.log_g).max() == 0.0
    assert res.pinching_window == (0.0, 0.0)


def test_flow_fourth_order_self_convergence():
    g0 = ef.perturbed_poincare(-0.05, grid=ef.cheb_grid(17, 0.98))
    ref = ef.ricci_flow_run(g0, 0.1, 1e-4).log_g[-1]
    e1 = np.abs(ef.ricci_flow_run(g0, 0.1, 4e-3).log_g[-1] - ref).max()
    e2 = np.abs(ef.ricci_flow_run(g0, 0.1, 2e-3).log_g[-1] - ref).max()
    assert e1 / e2 >= 8


def test_flow_cfl_guard(grid33):
    P = ef.poincare_profile(grid=grid33)
    lim = ef.rk4_stability_limit(P)
    with pytest.raises(ef.FlowUnstable):
        ef.ricci_flow_run(P, 0.01, 2 * lim)


def test_flow_blow_up_truncates(grid33):
    P = ef.poincare_profile(grid=grid33)
    res = ef.ricci_flow_run(P, 1.0, 5e-3, check_stability=False)
    assert res.truncated and "blow-up" in res.diagnostic
    assert res.times[-1] < 1.0


def test_flow_pinching_against_fixture(grid33):
    ref = json.loads((FIX / "pinching_reference.json").read_text())
    g0 = ef.perturbed_poincare(ref["eps"], ref["shape"], grid33)
    res = ef.ricci_flow_run(g0, 0.05, 1e-3)
    idx = [int(round(t / 1e-3)) for t in ref["t"]]
    assert np.abs(res.h_max[idx] - ref["h_max"]).max() < 1e-3
    assert np.abs(res.h_min[idx] - ref["h_min"]).max() < 1e-3
    assert res.t0 is None  # h stays below -kappa1/2 over the whole run


# ---- dumps


def test_dump_roundtrip(P):
    text = ef.write_dump("state", {"t": 0.0, "n": 1}, {"s": P.s, "log_g": P.log_g})
    kind, meta, cols = ef.read_dump(text)
    assert kind == "state" and meta["n"] == "1"
    assert np.array_equal(cols["log_g"], P.log_g)


@pytest.mark.parametrize("bad", ["", "# invmetrics-state v9\na\n1\n", "# invmetrics-state v1\na,b\n1\n"])
def test_dump_malformed(bad):
    with pytest.raises(ValueError, match="malformed"):
        ef.read_dump(bad)
