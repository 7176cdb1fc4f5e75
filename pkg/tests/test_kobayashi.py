import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invmetrics.domains import ExteriorPoint, ball, disk, polydisk, punctured_disk
from invmetrics.geometry_core import ball_kobayashi_field, poincare_disk, scaled
from invmetrics.kobayashi import (
    CERT_RHO,
    BracketInversion,
    certify_disk,
    decreasing_property_check,
    estimate_kappa,
    kr_bracket,
    kr_exact_ball,
    kr_lower_schwarz,
    kr_upper,
)

CERT = 1 / CERT_RHO  # certification shrink factor on an extremal disk


# ---- ball oracle


def test_exact_ball_examples():
    assert kr_exact_ball(2.0, [0, 0], [3, 4]) == pytest.approx(2.5)
    assert kr_exact_ball(1, [0.5, 0], [1, 0]) == pytest.approx(4 / 3)
    assert kr_exact_ball(1, [0.5, 0], [0, 1]) == pytest.approx(np.sqrt(1 / 0.75))


def test_exact_ball_exterior():
    with pytest.raises(ExteriorPoint):
        kr_exact_ball(1, [1.0], [1])


@given(st.floats(0.0, 0.95), st.floats(0, 2 * np.pi), st.floats(0.1, 10))
def test_exact_ball_matches_ball_metric(r, th, lam):
    a = np.array([r * np.exp(1j * th), 0.1])
    xi = np.array([1.0, 1j]) * lam
    g = ball_kobayashi_field(2).matrix(a)
    assert kr_exact_ball(1, a, xi) ** 2 == pytest.approx(np.real(xi @ g @ xi.conj()), rel=1e-12)


# ---- upper bounds


def test_upper_linear_disk_extremal():
    up = kr_upper(ball(1, 1), [0], [1], poly_degree=1)
    assert 1.0 <= up.value <= CERT * (1 + 1e-6)
    assert not up.fallback


def test_upper_ball_two_dims():
    up = kr_upper(ball(1, 2), [0.5, 0], [1, 0])
    assert up.value == pytest.approx(4 / 3, rel=1e-2)
    assert up.value >= 4 / 3 * (1 - 1e-9)


def test_upper_polydisk_origin():
    assert kr_upper(polydisk(1, 1), [0, 0], [1, 0]).value == pytest.approx(1.0, rel=2e-3)


def test_witness_contained():
    d = ball(1, 2)
    up = kr_upper(d, [0.3, 0.1j], [1, 1])
    t = np.exp(2j * np.pi * np.arange(256) / 256)
    assert np.all(d.contains(up.witness(t)))
    assert certify_disk(d, up.witness.coefficients, rho=1.0)


def test_upper_rejects_exterior_and_zero():
    with pytest.raises(ExteriorPoint):
        kr_upper(disk(), [1.5], [1])
    with pytest.raises(ValueError):
        kr_upper(disk(), [0.1], [0])


@pytest.mark.parametrize("lam", [2, 1j, -3])
def test_upper_homogeneity(lam):
    x, xi = np.array([0.2, -0.3j]), np.array([1.0, 0.5])
    base = kr_upper(ball(1, 2), x, xi).value
    assert kr_upper(ball(1, 2), x, lam * xi).value == pytest.approx(abs(lam) * base, rel=1e-2)


def test_mobius_invariance():
    a, x, xi = 0.4 - 0.2j, 0.3 + 0.1j, 1.0
    phi = (x - a) / (1 - np.conj(a) * x)
    dphi = (1 - abs(a) ** 2) / (1 - np.conj(a) * x) ** 2
    lhs = kr_upper(disk(), [phi], [dphi * xi]).value
    assert lhs == pytest.approx(kr_upper(disk(), [x], [xi]).value, rel=1e-2)


def test_convex_degree_matters():
    # the low-degree family cannot reach the extremal Mobius disk off-center
    lo = kr_upper(disk(), [0.5], [1], poly_degree=4).value
    hi = kr_upper(disk(), [0.5], [1]).value
    assert hi < lo and hi == pytest.approx(4 / 3, rel=1e-2)


# ---- lower bounds and brackets


def test_schwarz_examples():
    P = poincare_disk()
    assert kr_lower_schwarz(P, [0], [1], 1.0) == pytest.approx(1.0)
    assert kr_lower_schwarz(P, [0.5], [1], 1.0) == pytest.approx(4 / 3)
    assert kr_lower_schwarz(P, [0.5], [2], 1.0) == pytest.approx(8 / 3)
    with pytest.raises(ValueError):
        kr_lower_schwarz(P, [0], [1], 0.0)


def test_estimate_kappa_poincare():
    probes = [([r], [1]) for r in np.linspace(0, 0.9, 10)]
    assert estimate_kappa(poincare_disk(), probes) == pytest.approx(1.0, rel=1e-5)


def test_bracket_examples():
    b = kr_bracket(disk(), [0], [1], reference=poincare_disk())
    assert b.valid and b.lower == pytest.approx(1.0, rel=1e-6) and b.upper <= CERT * (1 + 1e-6)
    b2 = kr_bracket(ball(1, 2), [0.1, 0], [1, 0])
    assert b2.lower == 0.0 and b2.upper > 0


@pytest.mark.slow
def test_bracket_punctured_disk_inclusion():
    b = kr_bracket(punctured_disk(), [0.5], [1])
    assert b.upper >= 4 / 3 * (1 - 1e-2)


def test_bracket_inversion_tripwire():
    with pytest.raises(BracketInversion):
        kr_bracket(disk(), [0.2], [1], reference=scaled(poincare_disk(), 9.0), kappa=1.0)


# ---- decreasing property


def test_decreasing_ball_in_ball_factor_two():
    rep = decreasing_property_check(ball(0.5, 1), ball(1, 1), [([0], [1])])
    _, _, ko, ki = rep.rows[0]
    assert rep.ok and ki / ko == pytest.approx(2.0, rel=1e-6)


def test_decreasing_disk_in_disk_equality():
    rep = decreasing_property_check(disk(), disk(), [([0.3], [1]), ([-0.2j], [1j])])
    assert rep.ok
    for _, _, ko, ki in rep.rows:
        assert ko == pytest.approx(ki, rel=1e-9)


def test_decreasing_requires_common_points():
    with pytest.raises(ValueError):
        decreasing_property_check(ball(0.5, 1), ball(1, 1), [([0.7], [1])])
