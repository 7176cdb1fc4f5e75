import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invmetrics.bergman import (
    FORM_PAIRING_FACTOR,
    KernelVanishes,
    bergman_field,
    bergman_metric_at,
    build_kernel,
    default_degree,
    diagonal_by_degree,
    interior_estimate_probe,
    kernel_at,
    kernel_derivative,
    load_kernel,
    pivoted_cholesky,
    save_kernel,
    truncation_report,
)
from invmetrics.domains import annulus, ball, dfh_omega, disk, polydisk, punctured_disk
from invmetrics.geometry_core import holo_sectional_curvature


@pytest.fixture(scope="module")
def disk40():
    return build_kernel(disk(), 40)


def disk_kernel_closed(z, w):
    return 1 / (np.pi * (1 - z * np.conj(w)) ** 2) / FORM_PAIRING_FACTOR(1)


# ---- build


def test_disk_gram_is_diagonal_closed_form():
    k = build_kernel(disk(), 12)
    j = np.arange(13)
    assert np.allclose(np.diag(k.gram).real, 2 * np.pi / (j + 1), rtol=1e-13)
    assert np.abs(k.gram - np.diag(np.diag(k.gram))).max() == 0.0


def test_polydisk_degree_one_orthogonal():
    k = build_kernel(polydisk(1, 1), 1)
    off = k.gram - np.diag(np.diag(k.gram))
    assert np.abs(off).max() < 1e-12 * np.abs(k.gram).max()


def test_punctured_gram_matches_disk():
    a, b = build_kernel(disk(), 20), build_kernel(punctured_disk(), 20)
    assert np.allclose(a.gram, b.gram, rtol=1e-12, atol=0)


def test_reconstruction_identity():
    for d, deg in ((disk(), 40), (annulus(0.2, 1), 12), (ball(1, 2), 8), (polydisk(1, 0.5), 6)):
        assert build_kernel(d, deg).reconstruction_error() < 1e-8


def test_dfh_kernel_builds_at_default_degree():
    k = build_kernel(dfh_omega(), quad_budget=100_000)
    assert k.degree == default_degree(dfh_omega()) == 6
    assert k.rank == len(k.exponents)
    g = bergman_metric_at(k, [-0.3, 0.1, 0.1])
    assert np.all(np.linalg.eigvalsh(g) > 0)


def test_pivoted_cholesky_rank_deficient(gen):
    A = gen.normal(size=(6, 3)) + 1j * gen.normal(size=(6, 3))
    G = A @ A.conj().T
    L, perm, rank = pivoted_cholesky(G)
    assert rank == 3
    P = np.eye(6)[:, perm]
    assert np.allclose(L[:, :rank] @ L[:, :rank].conj().T, P.T @ G @ P, atol=1e-10)


# ---- kernel values


def test_kernel_disk_values(disk40):
    assert kernel_at(build_kernel(disk(), 0), [0], [0]).real == pytest.approx(1 / (2 * np.pi), rel=1e-14)
    assert kernel_at(disk40, [0.5], [0.5]).real == pytest.approx(disk_kernel_closed(0.5, 0.5).real, rel=1e-6)


def test_kernel_closed_form_pinned_value(disk40):
    # b(0.5, 0.5) = 1 / (2 pi (1 - 1/4)^2) under the 2^n pairing
    assert kernel_at(disk40, [0.5], [0.5]).real == pytest.approx(1 / (2 * np.pi * 0.75**2), rel=1e-6)


@given(
    st.complex_numbers(max_magnitude=0.8, allow_nan=False),
    st.complex_numbers(max_magnitude=0.8, allow_nan=False),
)
def test_kernel_hermitian(z, w):
    k = build_kernel(ball(1, 1), 20)
    assert np.conj(kernel_at(k, [z], [w])) == kernel_at(k, [w], [z])


def test_diagonal_nondecreasing_in_degree():
    for d, z in ((disk(), [0.7]), (polydisk(1, 1), [0.5, 0.3j]), (annulus(0.2, 1), [0.6])):
        k = build_kernel(d, 12)
        diag = diagonal_by_degree(k, z)
        assert np.all(np.diff(diag) >= -1e-12 * diag[-1])


def test_dilation_covariance():
    b1 = kernel_at(build_kernel(disk(1.0), 10), [0], [0]).real
    for r in (0.5, 2.0, 0.125):
        br = kernel_at(build_kernel(disk(r), 10), [0], [0]).real
        assert br == pytest.approx(b1 / r**2, rel=1e-8)


def test_odd_derivative_vanishes_at_center(disk40):
    assert abs(kernel_derivative(disk40, [0], [0], [1], [0])) < 1e-15


# ---- metric


def test_bergman_metric_disk(disk40):
    assert bergman_metric_at(disk40, [0])[0, 0].real == pytest.approx(2.0, rel=1e-12)
    assert bergman_metric_at(disk40, [0.5])[0, 0].real == pytest.approx(32 / 9, rel=1e-6)


def test_punctured_metric_matches_disk(disk40):
    kp = build_kernel(punctured_disk(), 40)
    assert bergman_metric_at(kp, [0.3]) == pytest.approx(bergman_metric_at(disk40, [0.3]), rel=1e-10)


@given(
    st.complex_numbers(max_magnitude=0.5, allow_nan=False),
    st.complex_numbers(max_magnitude=0.3, allow_nan=False),
)
def test_mobius_invariance(z, a):
    k = build_kernel(disk(), 40)
    phi = (z - a) / (1 - np.conj(a) * z)
    dphi = (1 - abs(a) ** 2) / (1 - np.conj(a) * z) ** 2
    lhs = bergman_metric_at(k, [phi])[0, 0].real * abs(dphi) ** 2
    assert lhs == pytest.approx(bergman_metric_at(k, [z])[0, 0].real, rel=1e-5)


def test_ball_bergman_metric_closed_form():
    # ball in C^2: b ~ (1-|z|^2)^-3, metric 3 * d dbar(-log(1-|z|^2))
    k = build_kernel(ball(1, 2), 14)
    z = np.array([0.3, 0.2j])
    s = np.vdot(z, z).real
    exact = 3 * (np.eye(2) / (1 - s) + np.outer(z.conj(), z) / (1 - s) ** 2)
    assert bergman_metric_at(k, z) == pytest.approx(exact, rel=1e-5)


def test_bergman_field_curvature_disk(disk40):
    f = bergman_field(disk40)
    assert holo_sectional_curvature(f, [0.3], [1]) == pytest.approx(-1.0, abs=1e-5)


def test_kernel_vanishes_error(disk40):
    with pytest.raises(KernelVanishes):
        bergman_metric_at(disk40, [0.2], tol=1e9)


# ---- diagnostics


def test_interior_estimates_dilation_slopes():
    ks = [build_kernel(disk(r), 8) for r in (1, 0.5, 0.25, 0.125)]
    E = [[[0]]] * 4
    e00 = interior_estimate_probe(ks, [0], [0], E)
    e11 = interior_estimate_probe(ks, [1], [1], E)
    assert e00.slope == pytest.approx(2, abs=1e-8) and e00.within_bound
    assert e11.slope == pytest.approx(4, abs=1e-8) and e11.within_bound


def test_truncation_report_examples():
    assert truncation_report(build_kernel(disk(), 10), [0]).recommended_degree == 0
    rep = truncation_report(build_kernel(disk(), 40), [0.9])
    assert rep.recommended_degree >= 88
    poly = truncation_report(build_kernel(polydisk(1, 1), 20), [0.5, 0.5])
    assert poly.recommended_degree == 15  # fixture


def test_serialization_roundtrip(tmp_path, disk40):
    path = tmp_path / "k.npz"
    save_kernel(disk40, path)
    k2 = load_kernel(path)
    assert k2.domain == disk40.domain and k2.degree == disk40.degree
    for z in ([0.1], [0.6 - 0.2j]):
        assert kernel_at(k2, z, z) == kernel_at(disk40, z, z)
