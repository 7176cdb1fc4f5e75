"""Hermitian metric fields on open subsets of C^n and their curvature.

Conventions
-----------
A field returns the coefficient matrix ``g[i, j] = g_{i jbar}`` of the Kahler
form ``omega = (sqrt(-1)/2) sum g_{i jbar} dz^i ^ dzbar^j``.  Lengths are
``|xi|^2 = sum g_{i jbar} xi^i conj(xi^j)``, so the Euclidean field is the
identity matrix.

Derivative arrays use Wirtinger derivatives::

    dg[k, i, j]     = d g_{i jbar} / d z^k
    ddg[k, l, i, j] = d^2 g_{i jbar} / d z^k d zbar^l
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "MetricDegenerate",
    "InsufficientRegularity",
    "MetricField",
    "CurvatureAtPoint",
    "RatioStats",
    "as_point",
    "norm_sq",
    "curvature_tensor",
    "holo_sectional_curvature",
    "ricci",
    "scalar_curvature",
    "curvature_norm",
    "metric_ratio_stats",
    "euclidean",
    "radial_field",
    "poincare_disk",
    "punctured_poincare",
    "ball_kobayashi_field",
    "scaled",
]


class MetricDegenerate(ValueError):
    """The metric matrix is not positive definite at the query point."""


class InsufficientRegularity(ValueError):
    """Finite-difference stencil would leave the region where the field is valid."""


def as_point(z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if z.ndim != 1 or z.size < 1:
        raise ValueError("a point is a 1-d array of n >= 1 complex coordinates")
    if not np.all(np.isfinite(z)):
        raise ValueError("point has non-finite coordinates")
    return z


@dataclass(frozen=True)
class MetricField:
    """Hermitian metric ``z -> g(z)`` with optional analytic derivatives.

    ``dg`` and ``ddg`` follow the layout in the module docstring.  Without them
    the derivatives come from central differences (Richardson-extrapolated once)
    with step ``fd_step * regularity_radius``.  ``boundary_distance`` lets the
    field refuse finite-difference probes that get closer than four steps to the
    edge of its domain.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray] | None = None
    ddg: Callable[[np.ndarray], np.ndarray] | None = None
    regularity_radius: float = 1.0
    boundary_distance: Callable[[np.ndarray], float] | None = None
    name: str = "metric"
    fd_step: float = 1e-4

    @property
    def derivative_mode(self) -> str:
        return "analytic" if self.dg is not None and self.ddg is not None else "fd"

    def matrix(self, z) -> np.ndarray:
        z = self._check(z)
        return np.asarray(self.eval(z), dtype=complex).reshape(self.dim, self.dim)

    def first_derivatives(self, z) -> np.ndarray:
        z = self._check(z)
        if self.dg is not None:
            return np.asarray(self.dg(z), dtype=complex)
        return _fd_first(self, z, self._step(z))

    def second_derivatives(self, z) -> np.ndarray:
        z = self._check(z)
        if self.ddg is not None:
            return np.asarray(self.ddg(z), dtype=complex)
        return _fd_second(self, z, self._step(z))

    def _check(self, z) -> np.ndarray:
        z = as_point(z)
        if z.size != self.dim:
            raise ValueError(f"point has dimension {z.size}, metric has {self.dim}")
        return z

    def _step(self, z: np.ndarray) -> float:
        h = self.fd_step * self.regularity_radius
        if self.boundary_distance is not None and self.boundary_distance(z) < 4 * h:
            raise InsufficientRegularity(
                f"insufficient regularity radius: point within {4 * h:.3g} of the boundary"
            )
        return h


# ---------------------------------------------------------------- finite differences


def _real_shift(n: int, a: int) -> np.ndarray:
    e = np.zeros(n, dtype=complex)
    e[a % n] = 1.0 if a < n else 1j
    return e


def _fd_first(m: MetricField, z: np.ndarray, h: float) -> np.ndarray:
    n = m.dim

    def grad(step):
        out = np.empty((2 * n, n, n), dtype=complex)
        for a in range(2 * n):
            e = _real_shift(n, a) * step
            out[a] = (m.eval(z + e) - m.eval(z - e)) / (2 * step)
        return out

    g1, g2 = grad(h), grad(h / 2)
    real = (4 * g2 - g1) / 3
    return 0.5 * (real[:n] - 1j * real[n:])


def _fd_second(m: MetricField, z: np.ndarray, h: float) -> np.ndarray:
    n = m.dim
    g0 = np.asarray(m.eval(z), dtype=complex)

    def hess(step):
        out = np.empty((2 * n, 2 * n, n, n), dtype=complex)
        for a in range(2 * n):
            ea = _real_shift(n, a) * step
            out[a, a] = (m.eval(z + ea) - 2 * g0 + m.eval(z - ea)) / step**2
            for b in range(a + 1, 2 * n):
                eb = _real_shift(n, b) * step
                v = (
                    m.eval(z + ea + eb)
                    - m.eval(z + ea - eb)
                    - m.eval(z - ea + eb)
                    + m.eval(z - ea - eb)
                ) / (4 * step**2)
                out[a, b] = out[b, a] = v
        return out

    h1, h2 = hess(h), hess(h / 2)
    H = (4 * h2 - h1) / 3
    xx, xy, yx, yy = H[:n, :n], H[:n, n:], H[n:, :n], H[n:, n:]
    # d_k dbar_l = 1/4 (d_xk - i d_yk)(d_xl + i d_yl)
    return 0.25 * (xx + 1j * xy - 1j * yx + yy)


# ---------------------------------------------------------------- pointwise geometry


def _cholesky_or_raise(g: np.ndarray) -> None:
    if not np.allclose(g, g.conj().T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise MetricDegenerate("metric degenerate: matrix is not Hermitian")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise MetricDegenerate("metric degenerate: matrix is not positive definite") from exc


def norm_sq(metric: MetricField, z, xi) -> float:
    """Squared length ``sum g_{i jbar} xi^i conj(xi^j)`` of ``xi`` at ``z``."""
    g = metric.matrix(z)
    _cholesky_or_raise(g)
    xi = as_point(xi)
    return float(np.real(xi @ g @ xi.conj()))


@dataclass(frozen=True)
class CurvatureAtPoint:
    base: np.ndarray
    components: np.ndarray  # R[i, j, k, l] = R_{i jbar k lbar}
    metric: np.ndarray

    def contract(self, eta) -> complex:
        eta = np.asarray(eta, dtype=complex)
        ec = eta.conj()
        return complex(np.einsum("ijkl,i,j,k,l->", self.components, eta, ec, eta, ec))

    def symmetry_defect(self) -> float:
        """Largest violation of the conjugation and Kahler symmetries."""
        R = self.components
        conj_sym = np.abs(R.conj() - R.transpose(1, 0, 3, 2)).max()
        kahler = max(
            np.abs(R - R.transpose(2, 1, 0, 3)).max(),
            np.abs(R - R.transpose(0, 3, 2, 1)).max(),
        )
        return float(max(conj_sym, kahler))


def curvature_tensor(metric: MetricField, z) -> CurvatureAtPoint:
    """``R_{i jbar k lbar} = -d_k dbar_l g_{i jbar} + g^{p qbar} d_k g_{i qbar} dbar_l g_{p jbar}``."""
    z = as_point(z)
    g = metric.matrix(z)
    _cholesky_or_raise(g)
    dg = metric.first_derivatives(z)  # [k, i, q]
    ddg = metric.second_derivatives(z)  # [k, l, i, j]
    ginv = np.linalg.inv(g)  # ginv[q, p] = g^{p qbar}
    # dbar_l g_{p jbar} = conj(d_l g_{j pbar})
    dbar = dg.conj().transpose(0, 2, 1)  # [l, p, j]
    R = -ddg.transpose(2, 3, 0, 1) + np.einsum("qp,kiq,lpj->ijkl", ginv, dg, dbar)
    return CurvatureAtPoint(base=z, components=R, metric=g)


def holo_sectional_curvature(metric: MetricField, z, eta) -> float:
    """Holomorphic sectional curvature in direction ``eta`` (normalized internally)."""
    eta = as_point(eta)
    if not np.any(eta):
        raise ValueError("holomorphic sectional curvature needs a nonzero direction")
    curv = curvature_tensor(metric, z)
    nsq = float(np.real(eta @ curv.metric @ eta.conj()))
    return float(np.real(curv.contract(eta))) / nsq**2


def _ddbar_logdet(metric: MetricField, z) -> tuple[np.ndarray, np.ndarray]:
    g = metric.matrix(z)
    _cholesky_or_raise(g)
    dg = metric.first_derivatives(z)
    ddg = metric.second_derivatives(z)
    ginv = np.linalg.inv(g)
    n = metric.dim
    out = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            dbar_j = dg[j].conj().T
            out[i, j] = np.trace(ginv @ ddg[i, j]) - np.trace(ginv @ dg[i] @ ginv @ dbar_j)
    return g, out


def ricci(metric: MetricField, z) -> np.ndarray:
    """Ricci form coefficients ``-d_i dbar_j log det g``."""
    _, h = _ddbar_logdet(metric, z)
    ric = -h
    return 0.5 * (ric + ric.conj().T)


def scalar_curvature(metric: MetricField, z) -> float:
    g, h = _ddbar_logdet(metric, z)
    return float(np.real(np.trace(np.linalg.solve(g, -h))))


def curvature_norm(metric: MetricField, z) -> float:
    """Pointwise ``|Rm|`` measured with the metric itself."""
    curv = curvature_tensor(metric, z)
    # unitary frame: columns of E satisfy E^T g conj(E) = I
    E = np.linalg.inv(np.linalg.cholesky(curv.metric)).T
    Ec = E.conj()
    Rf = np.einsum("ijkl,ia,jb,kc,ld->abcd", curv.components, E, Ec, E, Ec)
    return float(np.sqrt(np.sum(np.abs(Rf) ** 2)))


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class RatioStats:
    """Directional and eigenvalue extremes of ``|v|_b^2 / |v|_a^2``."""

    inf_ratio: float
    sup_ratio: float
    eig_min: float
    eig_max: float
    argmin: int
    argmax: int
    per_sample: np.ndarray = field(repr=False)


def metric_ratio_stats(a: MetricField, b: MetricField, samples: Sequence) -> RatioStats:
    """Ratio statistics of metric ``b`` against ``a`` over ``(z, xi)`` samples.

    Besides the directional ratios, each base point contributes the extreme
    generalized eigenvalues of the pencil ``(g_b, g_a)``, which bracket every
    direction at that point.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("metric_ratio_stats needs at least one sample")
    ratios = np.empty(len(samples))
    lo, hi = np.inf, -np.inf
    for idx, (z, xi) in enumerate(samples):
        ga, gb = a.matrix(z), b.matrix(z)
        _cholesky_or_raise(ga)
        _cholesky_or_raise(gb)
        xi = as_point(xi)
        ratios[idx] = np.real(xi @ gb @ xi.conj()) / np.real(xi @ ga @ xi.conj())
        if a is b:
            ev = np.ones(1)
        else:
            L = np.linalg.cholesky(ga)
            Linv = np.linalg.inv(L)
            ev = np.linalg.eigvalsh(Linv @ gb @ Linv.conj().T)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    if a is b:
        ratios[:] = 1.0
    return RatioStats(
        inf_ratio=float(ratios.min()),
        sup_ratio=float(ratios.max()),
        eig_min=float(lo),
        eig_max=float(hi),
        argmin=int(ratios.argmin()),
        argmax=int(ratios.argmax()),
        per_sample=ratios,
    )


# ---------------------------------------------------------------- built-in fields


def euclidean(n: int = 1) -> MetricField:
    eye = np.eye(n, dtype=complex)
    zero1 = np.zeros((n, n, n), dtype=complex)
    zero2 = np.zeros((n, n, n, n), dtype=complex)
    return MetricField(
        dim=n,
        eval=lambda z: eye,
        dg=lambda z: zero1,
        ddg=lambda z: zero2,
        regularity_radius=np.inf,
        name="euclidean",
    )


def radial_field(
    G: Callable[[float], float],
    dG: Callable[[float], float],
    d2G: Callable[[float], float],
    name: str = "radial",
    regularity_radius: float = 1.0,
) -> MetricField:
    """One-variable field ``g(z) = G(|z|^2)`` with exact Wirtinger derivatives."""

    def ev(z):
        return np.array([[G(abs(z[0]) ** 2)]], dtype=complex)

    def dg(z):
        s = abs(z[0]) ** 2
        return np.array([[[dG(s) * np.conj(z[0])]]], dtype=complex)

    def ddg(z):
        s = abs(z[0]) ** 2
        return np.array([[[[dG(s) + s * d2G(s)]]]], dtype=complex)

    return MetricField(dim=1, eval=ev, dg=dg, ddg=ddg, name=name, regularity_radius=regularity_radius)


def poincare_disk(c: float = 2.0) -> MetricField:
    """``g = c / (1 - |z|^2)^2``; ``c = 2`` is the complete metric with H = -1."""
    return radial_field(
        lambda s: c / (1 - s) ** 2,
        lambda s: 2 * c / (1 - s) ** 3,
        lambda s: 6 * c / (1 - s) ** 4,
        name="poincare" if c == 2.0 else f"poincare[c={c:g}]",
    )


def punctured_poincare() -> MetricField:
    """Complete metric ``g = 2 / (|z|^2 log^2 |z|^2)`` on the punctured disk."""

    def G(s):
        L = np.log(s)
        return 2.0 / (s * L * L)

    def dG(s):
        L = np.log(s)
        return -2.0 * (L + 2) / (s**2 * L**3)

    def d2G(s):
        L = np.log(s)
        return 2.0 * (2 * L * L + 6 * L + 6) / (s**3 * L**4)

    return radial_field(G, dG, d2G, name="poincare_punctured")


def ball_kobayashi_field(n: int, r: float = 1.0) -> MetricField:
    """Hermitian metric whose length is the Kobayashi metric of the ball ``B(r)``.

    ``g = d dbar (-log(r^2 - |z|^2))``; its squared length at ``a`` is
    ``|xi|^2/(r^2-|a|^2) + |<xi, a>|^2/(r^2-|a|^2)^2``.
    """
    r2 = r * r

    def ev(z):
        d = r2 - np.vdot(z, z).real
        return np.eye(n) / d + np.outer(z.conj(), z) / d**2

    def dg(z):
        d = r2 - np.vdot(z, z).real
        zc = z.conj()
        P = np.outer(zc, z)
        out = np.empty((n, n, n), dtype=complex)
        for k in range(n):
            t = np.eye(n) * zc[k] / d**2 + 2 * zc[k] * P / d**3
            t[:, k] += zc / d**2
            out[k] = t
        return out

    def ddg(z):
        d = r2 - np.vdot(z, z).real
        zc = z.conj()
        P = np.outer(zc, z)
        out = np.empty((n, n, n, n), dtype=complex)
        for k in range(n):
            for l in range(n):
                dkl = float(k == l)
                t = np.eye(n) * (dkl / d**2 + 2 * zc[k] * z[l] / d**3)
                t += (2 * dkl / d**3 + 6 * zc[k] * z[l] / d**4) * P
                t[:, k] += 2 * zc * z[l] / d**3
                t[l, :] += 2 * z * zc[k] / d**3
                t[l, k] += 1 / d**2
                out[k, l] = t
        return out

    return MetricField(dim=n, eval=ev, dg=dg, ddg=ddg, name=f"ball_kobayashi[n={n}]", regularity_radius=r)


def scaled(metric: MetricField, lam: float) -> MetricField:
    """Homothety ``lam * g``."""
    dg = None if metric.dg is None else (lambda z: lam * metric.dg(z))
    ddg = None if metric.ddg is None else (lambda z: lam * metric.ddg(z))
    return MetricField(
        dim=metric.dim,
        eval=lambda z: lam * np.asarray(metric.eval(z)),
        dg=dg,
        ddg=ddg,
        regularity_radius=metric.regularity_radius,
        boundary_distance=metric.boundary_distance,
        name=f"{lam:g}*{metric.name}",
        fd_step=metric.fd_step,
    )
