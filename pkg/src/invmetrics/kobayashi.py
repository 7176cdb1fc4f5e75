"""Kobayashi-Royden metric: ball formula, analytic-disk upper bounds, Schwarz lower bounds.

Upper bounds come from polynomial disks written on the unit disk,

    psi(t) = x + R * xhat * t + sum_{k=2..m} c_k t^k,     |t| < 1,

where ``xhat = xi / |xi|``.  If ``psi`` maps the closed disk of radius ``rho``
into the domain then ``K(x, xi) <= |xi| / (rho R)``.

Containment is certified on ``|t| = rho`` (rho = 1 - 2**-10 by default) from
1024 circle samples.  Every quantity checked there is a real trigonometric
polynomial in the angle, so the FFT of the samples gives its exact Fourier
coefficients and hence a bound on how far the true sup can exceed the sampled
max.  Plurisubharmonic defining functions obey the maximum principle, which
pushes the circle bound to the whole disk.  Zero-free conditions (punctured
disk, annulus) are checked on the roots of the coordinate polynomial.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from scipy import optimize

from .domains import DomainSpec, ExteriorPoint, rng
from .geometry_core import MetricField, as_point, holo_sectional_curvature, norm_sq

__all__ = [
    "AnalyticDisk",
    "KRBracket",
    "KRUpper",
    "kr_exact_ball",
    "kr_upper",
    "certify_disk",
    "kr_lower_schwarz",
    "kr_bracket",
    "DecreasingReport",
    "decreasing_property_check",
    "SCHWARZ_STATED_CONSTANT_NOTE",
]

log = logging.getLogger(__name__)

CERT_RHO = 1.0 - 2.0**-10
CERT_POINTS = 1024
OPT_POINTS = 256
CONVEX_KINDS = ("ball", "polydisk")

SCHWARZ_STATED_CONSTANT_NOTE = (
    "lower bound uses sqrt(kappa/2)|xi|; the constant sqrt(2/kappa) contradicts the disk "
    "equality case K_D(0, 1) = 1 for the H = -1 Poincare field and is not used"
)


@dataclass(frozen=True)
class AnalyticDisk:
    """``coefficients[:, k]`` multiplies ``t^k``; column 0 is the base point."""

    coefficients: np.ndarray  # (n, m + 1)
    radius: float  # certified R * rho: the disk psi(rho t) has derivative radius * xhat

    @property
    def poly_degree(self) -> int:
        return self.coefficients.shape[1] - 1

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=complex))
        powers = t[:, None] ** np.arange(self.coefficients.shape[1])[None, :]
        return powers @ self.coefficients.T


@dataclass(frozen=True)
class KRUpper:
    value: float
    witness: AnalyticDisk
    fallback: bool = False
    route: str = "convex"


@dataclass(frozen=True)
class KRBracket:
    lower: float
    upper: float
    witness: AnalyticDisk | None
    flags: tuple[str, ...] = field(default=())

    @property
    def valid(self) -> bool:
        return self.lower <= self.upper


class BracketInversion(RuntimeError):
    """lower > upper beyond tolerance: a convention or implementation bug."""


def kr_exact_ball(r: float, a, xi) -> float:
    """Kobayashi-Royden length of ``xi`` at ``a`` in the ball of radius ``r``."""
    a, xi = as_point(a), as_point(xi)
    d = r * r - float(np.vdot(a, a).real)
    if d <= 0:
        raise ExteriorPoint(f"{a} is not inside the ball of radius {r}")
    if not np.any(xi):
        raise ValueError("zero tangent vector")
    return float(np.sqrt(np.vdot(xi, xi).real / d + abs(np.vdot(a, xi)) ** 2 / d**2))


# ---------------------------------------------------------------- certification


def _curvature_slack(values: np.ndarray) -> float:
    """``delta^2 / 8 * sum p^2 |a_p|`` for a real trig polynomial sampled at N uniform angles.

    The FFT returns the exact Fourier coefficients as long as the degree is
    below N/2; ``sum p^2 |a_p|`` bounds the second derivative, and every point
    of the circle lies within delta/2 of a sample.
    """
    N = len(values)
    a = np.fft.rfft(values) / N
    p = np.arange(len(a))
    if np.abs(a[-max(2, N // 16):]).max() > 1e-12 * max(1.0, np.abs(a).max()):
        return np.inf  # too few samples for this degree
    delta = 2 * np.pi / N
    return float(delta**2 / 8 * 2 * np.sum(p**2 * np.abs(a)))


def _sup_bound(values: np.ndarray) -> float:
    return float(values.max() + _curvature_slack(values))


def _inf_bound(values: np.ndarray) -> float:
    return float(values.min() - _curvature_slack(values))


def _zero_free(poly: np.ndarray, rho: float) -> bool:
    """No zeros of ``sum poly[k] t^k`` in the closed disk ``|t| <= rho``."""
    c = np.trim_zeros(poly, "b")
    if len(c) <= 1:
        return bool(abs(c[0]) > 0) if len(c) else False
    roots = np.roots(c[::-1])
    return bool(np.all(np.abs(roots) > rho * (1 + 1e-9)))


def certify_disk(d: DomainSpec, coefficients: np.ndarray, rho: float = CERT_RHO, n_points: int = CERT_POINTS) -> bool:
    """Is ``t -> sum coefficients[:, k] (rho t)^k`` a map of the closed unit disk into ``d``?"""
    C = np.asarray(coefficients, dtype=complex)
    m = C.shape[1] - 1
    Cr = C * rho ** np.arange(m + 1)[None, :]
    t = np.exp(2j * np.pi * np.arange(n_points) / n_points)
    P = (t[:, None] ** np.arange(m + 1)[None, :]) @ Cr.T  # (N, n)
    if d.kind == "ball":
        return _sup_bound(np.sum(np.abs(P) ** 2, axis=1)) < d.radii[0] ** 2
    if d.kind == "polydisk":
        return all(_sup_bound(np.abs(P[:, k]) ** 2) < d.radii[k] ** 2 for k in range(d.dim))
    if d.kind == "punctured_disk":
        return _sup_bound(np.abs(P[:, 0]) ** 2) < 1.0 and _zero_free(Cr[0], 1.0)
    if d.kind == "annulus":
        rin, rout = d.radii
        f = np.abs(P[:, 0]) ** 2
        return _sup_bound(f) < rout**2 and _zero_free(Cr[0], 1.0) and _inf_bound(f) > rin**2
    if d.kind == "dfh_omega":
        # rho o psi is subharmonic with angular frequencies up to 12 m
        return _sup_bound(d.defining(P)) < 0.0
    raise ValueError(f"cannot certify disks in {d}")


# ---------------------------------------------------------------- convex route


@functools.lru_cache(maxsize=32)
def _convex_problem(kind: str, n: int, m: int, n_points: int):
    t = np.exp(2j * np.pi * np.arange(n_points) / n_points)
    x = cp.Parameter(n, complex=True)
    xhat = cp.Parameter(n, complex=True)
    radii = cp.Parameter(n, nonneg=True)
    R = cp.Variable(nonneg=True)
    expr = np.ones((n_points, 1)) @ cp.reshape(x, (1, n), order="C")
    expr = expr + t[:, None] @ cp.reshape(R * xhat, (1, n), order="C")
    if m >= 2:
        Cv = cp.Variable((m - 1, n), complex=True)
        T = np.stack([t**k for k in range(2, m + 1)], axis=1)
        expr = expr + T @ Cv
    else:
        Cv = None
    if kind == "ball":
        cons = [cp.norm(expr, 2, axis=1) <= radii[0]]
    else:
        cons = [cp.abs(expr[:, k]) <= radii[k] for k in range(n)]
    return cp.Problem(cp.Maximize(R), cons), x, xhat, radii, R, Cv


def _solve_convex(d: DomainSpec, x: np.ndarray, xhat: np.ndarray, m: int):
    radii = np.full(d.dim, d.radii[0]) if d.kind == "ball" else np.array(d.radii)
    for build in (_convex_problem, _convex_problem.__wrapped__):
        prob, px, pxh, pr, R, Cv = build(d.kind, d.dim, m, max(OPT_POINTS, 4 * m))
        px.value, pxh.value, pr.value = x, xhat, radii
        try:
            prob.solve(solver=cp.CLARABEL)
            break
        except Exception as exc:  # noqa: BLE001
            # the cached parametrized problem occasionally hands the solver a
            # malformed matrix after a parameter update; a fresh build does not
            log.debug("cached convex problem failed (%s); rebuilding", exc)
    if R.value is None:
        raise RuntimeError(f"disk optimization failed: {prob.status}")
    C = np.zeros((d.dim, m + 1), dtype=complex)
    C[:, 0] = x
    C[:, 1] = float(R.value) * xhat
    if Cv is not None:
        C[:, 2:] = Cv.value.T
    return C


# ---------------------------------------------------------------- generic route


def _margin(d: DomainSpec, C: np.ndarray, t: np.ndarray) -> float:
    P = (t[:, None] ** np.arange(C.shape[1])[None, :]) @ C.T
    if d.kind == "dfh_omega":
        return float(d.defining(P).max())
    p = P[:, 0]
    f = np.abs(p)
    out = f.max() - d.outer_radius
    hole = d.radii[0] if d.kind == "annulus" else 0.0
    out = max(out, hole + 1e-3 - f.min())
    # a zero inside the disk shows up as nonzero winding about the origin
    winding = np.sum(np.angle(np.roll(p, -1) / p)) / (2 * np.pi)
    if abs(winding) > 0.5:
        out = max(out, 0.0) + 1.0
    return float(out)


def _solve_generic(d: DomainSpec, x: np.ndarray, xhat: np.ndarray, m: int, restarts: int, seed: int):
    n = d.dim
    t = np.exp(2j * np.pi * np.arange(OPT_POINTS) / OPT_POINTS)
    gen = rng(seed)

    def coeffs(R, v):
        C = np.zeros((n, m + 1), dtype=complex)
        C[:, 0] = x
        C[:, 1] = R * xhat
        if m >= 2:
            h = v.reshape(2, n, m - 1)
            C[:, 2:] = h[0] + 1j * h[1]
        return C

    def feasible(R, warm):
        starts = [warm] + [gen.normal(scale=0.1 * R, size=warm.size) for _ in range(restarts)]
        for v0 in starts:
            if m < 2:
                v = v0
            else:
                res = optimize.minimize(
                    lambda v: _margin(d, coeffs(R, v), t),
                    v0,
                    method="Nelder-Mead",
                    options={"xatol": 1e-6, "fatol": 1e-9, "maxfev": 200 * v0.size},
                )
                v = res.x
            C = coeffs(R, v)
            if _margin(d, C, t) < 0 and certify_disk(d, C):
                return v
        return None

    v = np.zeros(2 * n * max(m - 1, 0))
    lo = 0.0
    hi = 2.0 * d.outer_radius + (abs(x).max() if d.kind == "dfh_omega" else 0.0) + 1.0
    best = None
    for _ in range(24):
        mid = 0.5 * (lo + hi)
        got = feasible(mid, v if best is None else best)
        if got is not None:
            lo, best = mid, got
        else:
            hi = mid
        if hi - lo < 1e-3 * hi:
            break
    if best is None:
        return None
    return coeffs(lo, best)


# ---------------------------------------------------------------- public API


def convex_degree(d: DomainSpec, x: np.ndarray, tol: float = 1e-2) -> int:
    """Default disk degree: extremal disks have Taylor coefficients decaying like ``q**k``.

    ``q = 1 - dist / outer_radius``; the degree is chosen so that ``q**m <= tol``,
    clamped to ``[32, 64]``.
    """
    q = 1.0 - d.boundary_distance(x) / d.outer_radius
    if q <= 0:
        return 32
    return int(np.clip(np.ceil(np.log(tol) / np.log(q)), 32, 64))


def cert_points(m: int) -> int:
    """Certification sample count; the curvature slack scales like ``(m / N)**2``."""
    return max(CERT_POINTS, 1 << int(np.ceil(np.log2(256 * m))))


def kr_upper(
    d: DomainSpec,
    x,
    xi,
    poly_degree: int | None = None,
    restarts: int = 8,
    seed: int = 0,
) -> KRUpper:
    """Certified upper bound ``|xi| / R`` from the best polynomial disk found.

    Ball and polydisk: the disk family is optimized as a second-order cone
    program (degree from :func:`convex_degree`).  Other domains: bisection on ``R`` with
    Nelder-Mead over the higher coefficients (default degree 4, ``restarts``
    random restarts).
    """
    x, xi = as_point(x), as_point(xi)
    if not d.contains(x):
        raise ExteriorPoint(f"{x} is not inside {d}")
    norm = float(np.linalg.norm(xi))
    if norm == 0:
        raise ValueError("zero tangent vector")
    xhat = xi / norm
    convex = d.kind in CONVEX_KINDS
    m = poly_degree if poly_degree is not None else (convex_degree(d, x) if convex else 4)
    C = _solve_convex(d, x, xhat, m) if convex else _solve_generic(d, x, xhat, m, restarts, seed)
    fallback = False
    rho = CERT_RHO
    if C is not None:
        # shrink until certified; convex solutions sit on the sampled constraint
        N = cert_points(C.shape[1] - 1)
        while rho > 0.5 and not certify_disk(d, C, rho, N):
            rho *= 1 - 2.0**-10
        if rho <= 0.5:
            C = None
    if C is None:
        fallback = True
        dist = d.boundary_distance(x)
        C = np.zeros((d.dim, 2), dtype=complex)
        C[:, 0] = x
        C[:, 1] = dist * xhat
        rho = CERT_RHO
        log.warning("no certified polynomial disk found; using the linear disk")
    R = float(np.real(np.vdot(xhat, C[:, 1]))) * rho
    witness = AnalyticDisk(C * rho ** np.arange(C.shape[1])[None, :], R)
    return KRUpper(norm / R, witness, fallback, "convex" if convex else "nelder-mead")


def estimate_kappa(metric: MetricField, probes, safety: float = 1e-6) -> float:
    """``kappa`` with ``H <= -kappa`` on the probes, reduced by a relative safety margin."""
    hs = [holo_sectional_curvature(metric, z, eta) for z, eta in probes]
    return -max(hs) * (1 - safety)


def kr_lower_schwarz(metric: MetricField, x, xi, kappa: float) -> float:
    """Schwarz-lemma lower bound ``sqrt(kappa / 2) |xi|_omega`` when ``H(omega) <= -kappa``."""
    if not kappa > 0:
        raise ValueError("Schwarz lower bound needs H <= -kappa with kappa > 0")
    return float(np.sqrt(kappa / 2 * norm_sq(metric, x, xi)))


def kr_bracket(
    d: DomainSpec,
    x,
    xi,
    reference: MetricField | None = None,
    kappa: float | None = None,
    probes=None,
    tol: float = 1e-2,
    **upper_kw,
) -> KRBracket:
    """Combine the Schwarz lower bound (if a negatively curved reference is given) with ``kr_upper``."""
    up = kr_upper(d, x, xi, **upper_kw)
    flags = []
    if up.fallback:
        flags.append("linear-disk-fallback")
    lower = 0.0
    if reference is not None:
        if kappa is None:
            probes = probes if probes is not None else [(x, xi)]
            kappa = estimate_kappa(reference, probes)
        lower = kr_lower_schwarz(reference, x, xi, kappa)
        flags.append("schwarz-constant-sqrt(kappa/2)")
    if lower > up.value * (1 + tol):
        raise BracketInversion(
            f"Kobayashi bracket inverted: lower {lower:.6g} > upper {up.value:.6g}"
        )
    return KRBracket(lower, up.value, up.witness, tuple(flags))


@dataclass(frozen=True)
class DecreasingReport:
    rows: list  # (x, xi, K_outer_upper, K_inner_upper)
    violations: list
    tol: float

    @property
    def ok(self) -> bool:
        return not self.violations


def decreasing_property_check(inner: DomainSpec, outer: DomainSpec, samples, tol: float = 1e-2, **upper_kw) -> DecreasingReport:
    """Inclusion ``inner`` in ``outer`` forces ``K_outer <= K_inner`` (up to certification tolerance)."""
    rows, bad = [], []
    for x, xi in samples:
        x = as_point(x)
        if not (inner.contains(x) and outer.contains(x)):
            raise ValueError(f"sample {x} is not in both domains")
        ko = kr_upper(outer, x, xi, **upper_kw).value
        ki = kr_upper(inner, x, xi, **upper_kw).value
        rows.append((x, as_point(xi), ko, ki))
        if ko > ki * (1 + tol):
            bad.append(rows[-1])
    return DecreasingReport(rows, bad, tol)
