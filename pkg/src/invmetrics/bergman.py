"""Bergman kernel and Bergman metric from truncated monomial bases.

The L^2 pairing of holomorphic (n,0)-forms ``f dz^1 ^ ... ^ dz^n`` reduces to
``2^n * int f conj(h) dV`` (``FORM_PAIRING_FACTOR``).  Every kernel value in the
package goes through that one constant.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import lapack

from .domains import DomainSpec, ExteriorPoint, parse_domain
from .geometry_core import MetricField

__all__ = [
    "FORM_PAIRING_FACTOR",
    "QuadratureTooSmall",
    "KernelVanishes",
    "KernelModel",
    "default_degree",
    "monomial_exponents",
    "pivoted_cholesky",
    "build_kernel",
    "kernel_at",
    "kernel_derivative",
    "bergman_metric_at",
    "bergman_field",
    "InteriorEstimate",
    "interior_estimate_probe",
    "TruncationReport",
    "diagonal_by_degree",
    "truncation_report",
    "save_kernel",
    "load_kernel",
]

SERIAL_VERSION = 1
DROP_TOL = 1e-12


def FORM_PAIRING_FACTOR(n: int) -> float:
    return float(2**n)


class QuadratureTooSmall(RuntimeError):
    pass


class KernelVanishes(ValueError):
    pass


def default_degree(d: DomainSpec) -> int:
    if d.kind == "dfh_omega":
        return 6
    return 40 if d.dim == 1 else 12


def monomial_exponents(n: int, degree: int, laurent: bool = False) -> np.ndarray:
    """Exponents graded by total degree (|alpha| = 0, 1, ...).

    With ``laurent`` (one variable only) the degree-k block is ``{k, -k}``, so
    the annulus basis contains ``z^-1, z^-2, ...``.
    """
    if laurent:
        if n != 1:
            raise ValueError("Laurent bases are one-variable only")
        ex = [0]
        for k in range(1, degree + 1):
            ex += [k, -k]
        return np.array(ex, dtype=int)[:, None]
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            e = np.zeros(n, dtype=int)
            for c in combo:
                e[c] += 1
            out.append(e)
    return np.array(out, dtype=int)


def pivoted_cholesky(G: np.ndarray, drop_tol: float = DROP_TOL):
    """``P^T G P = L L^H`` truncated where the pivot falls below ``drop_tol * max diag``.

    Returns ``(L, perm, rank)`` with ``L`` of shape (N, rank) in pivoted order.
    """
    G = np.asarray(G, dtype=complex)
    scale = float(np.max(np.real(np.diag(G))))
    if scale <= 0:
        raise QuadratureTooSmall("gram matrix has no positive diagonal")
    c, piv, rank, info = lapack.zpstrf(G, tol=drop_tol * scale, lower=1)
    if info < 0:
        raise RuntimeError(f"zpstrf failed (info={info})")
    L = np.tril(c)[:, :rank]
    return L, piv - 1, int(rank)


@dataclass(frozen=True)
class KernelModel:
    """Truncated orthonormal basis ``e_j = sum_alpha coeffs[alpha, j] m_alpha``.

    ``m_alpha(z) = ((z - center) / scale)^alpha``.  ``kmat = coeffs @ coeffs^H``
    so that ``b(z, w) = m(z)^T kmat conj(m(w))``.
    """

    domain: DomainSpec
    degree: int
    exponents: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    gram: np.ndarray
    coeffs: np.ndarray
    kmat: np.ndarray
    quad_budget: int
    seed: int
    scheme: str
    rank: int = field(default=0)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def zeta(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex).reshape(-1)
        if z.size != self.dim:
            raise ValueError(f"dimension mismatch: point has {z.size} coordinates, domain has {self.dim}")
        return (z - self.center) / self.scale

    def monomials(self, z, alpha: Sequence[int] | None = None) -> np.ndarray:
        """``d^alpha m(z)`` (holomorphic derivative, multi-index ``alpha``)."""
        zeta = self.zeta(z)
        E = self.exponents
        alpha = np.zeros(self.dim, dtype=int) if alpha is None else np.asarray(alpha, dtype=int)
        coef = np.ones(len(E))
        for k in range(self.dim):
            for step in range(alpha[k]):
                coef = coef * (E[:, k] - step)
        pw = E - alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.prod(np.where(coef[:, None] != 0, zeta[None, :] ** pw, 0), axis=1)
        vals = np.where(coef != 0, coef * vals, 0)
        return vals / np.prod(self.scale**alpha)

    def reconstruction_error(self) -> float:
        C = self.coeffs
        return float(np.abs(C.conj().T @ self.gram @ C - np.eye(C.shape[1])).max())


def _diag_gram(d: DomainSpec, E: np.ndarray, scale: np.ndarray) -> np.ndarray:
    n = d.dim
    if d.is_disk_like:
        vals = np.array([d.radial_moment(int(e[0])) / scale[0] ** (2 * e[0]) for e in E])
    elif d.kind == "ball":
        r = d.radii[0]
        vals = np.array(
            [
                math.pi**n
                * math.prod(math.factorial(int(a)) for a in e)
                * r ** (2 * int(e.sum()) + 2 * n)
                / math.factorial(int(e.sum()) + n)
                / np.prod(scale ** (2 * e))
                for e in E
            ]
        )
    elif d.kind == "polydisk":
        vals = np.array(
            [
                math.prod(math.pi * rk ** (2 * int(a) + 2) / (int(a) + 1) for a, rk in zip(e, d.radii))
                / np.prod(scale ** (2 * e))
                for e in E
            ]
        )
    else:
        raise ValueError(f"no semi-analytic gram for {d}")
    return np.diag(FORM_PAIRING_FACTOR(n) * vals).astype(complex)


def build_kernel(d: DomainSpec, degree: int | None = None, quad_budget: int = 200_000, seed: int = 0) -> KernelModel:
    """Gram assembly + pivoted Cholesky orthonormalization.

    Rotationally symmetric domains (disk, annulus, punctured disk, ball,
    polydisk) have diagonal grams whose entries are computed from radial moments;
    ``dfh_omega`` uses the Sobol rejection rule from :meth:`DomainSpec.sample`.
    """
    degree = default_degree(d) if degree is None else int(degree)
    if degree < 0:
        raise ValueError("degree must be >= 0")
    center, scale = d.affine_frame
    E = monomial_exponents(d.dim, degree, laurent=(d.kind == "annulus"))
    if d.kind == "dfh_omega":
        ss = d.sample(quad_budget, seed)
        if len(ss.points) < len(E):
            raise QuadratureTooSmall("quadrature budget too small for degree")
        zeta = (ss.points - center) / scale
        M = np.prod(zeta[:, None, :] ** E[None, :, :], axis=2)
        G = FORM_PAIRING_FACTOR(d.dim) * (M.conj().T * ss.weights) @ M
        G = 0.5 * (G + G.conj().T)
        scheme = ss.scheme
    else:
        G = _diag_gram(d, E, scale)
        scheme = "semi-analytic-radial"
    ev_min = np.linalg.eigvalsh(G)[0]
    if ev_min < -1e-10 * np.abs(G).max():
        raise QuadratureTooSmall("quadrature budget too small for degree: gram is indefinite")
    # equilibrate first: monomial norms span many decades on small or annular domains
    dscale = 1.0 / np.sqrt(np.real(np.diag(G)))
    L, perm, rank = pivoted_cholesky(G * np.outer(dscale, dscale))
    if rank < len(E) and d.kind != "dfh_omega":
        raise QuadratureTooSmall("quadrature budget too small for degree: gram lost rank")
    keep = perm[:rank]
    C = np.zeros((len(E), rank), dtype=complex)
    C[keep, :] = np.linalg.inv(L[:rank, :rank]).conj().T
    C = dscale[:, None] * C
    return KernelModel(
        domain=d,
        degree=degree,
        exponents=E,
        center=center,
        scale=scale,
        gram=G,
        coeffs=C,
        kmat=C @ C.conj().T,
        quad_budget=quad_budget,
        seed=seed,
        scheme=scheme,
        rank=rank,
    )


def _check_inside(k: KernelModel, z) -> None:
    if not k.domain.contains(np.asarray(z, dtype=complex).reshape(-1)):
        raise ExteriorPoint(f"{z} is not inside {k.domain}")


def kernel_derivative(k: KernelModel, z, w, alpha=None, beta=None) -> complex:
    """``d_z^alpha dbar_w^beta b(z, w)`` of the truncated kernel."""
    _check_inside(k, z)
    _check_inside(k, w)
    # sum over the orthonormal basis: conj(b(z, w)) == b(w, z) holds bit for bit
    fz = k.monomials(z, alpha) @ k.coeffs
    fw = k.monomials(w, beta) @ k.coeffs
    re = np.sum(fz.real * fw.real + fz.imag * fw.imag)
    im = np.sum(fz.imag * fw.real - fz.real * fw.imag)
    return complex(re, im)


def kernel_at(k: KernelModel, z, w) -> complex:
    return kernel_derivative(k, z, w)


def _metric_parts(k: KernelModel, z):
    m = k.monomials(z)
    n = k.dim
    d1 = np.stack([k.monomials(z, np.eye(n, dtype=int)[i]) for i in range(n)])
    K = k.kmat
    b = float(np.real(m @ K @ m.conj()))
    db = d1 @ K @ m.conj()  # d_i b
    ddb = d1 @ K @ d1.conj().T  # d_i dbar_j b
    return b, db, ddb


def bergman_metric_at(k: KernelModel, z, tol: float = 1e-300) -> np.ndarray:
    """``d_i dbar_j log b`` from exact monomial derivatives."""
    _check_inside(k, z)
    b, db, ddb = _metric_parts(k, z)
    if not b > tol:
        raise KernelVanishes("kernel vanishes; Bergman metric undefined")
    g = ddb / b - np.outer(db, db.conj()) / b**2
    return 0.5 * (g + g.conj().T)


def bergman_field(k: KernelModel) -> MetricField:
    d = k.domain
    return MetricField(
        dim=d.dim,
        eval=lambda z: bergman_metric_at(k, z),
        regularity_radius=1e-1 * float(np.min(k.scale)),
        boundary_distance=d.boundary_distance,
        name=f"bergman[d={k.degree}]",
    )


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class InteriorEstimate:
    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    sups: np.ndarray
    dists: np.ndarray
    slope: float
    predicted_exponent: int

    @property
    def within_bound(self) -> bool:
        return bool(np.isnan(self.slope) or self.slope <= self.predicted_exponent + 0.05)


def interior_estimate_probe(kernels: Sequence[KernelModel] | KernelModel, alpha, beta, probes) -> InteriorEstimate:
    """Sup of ``|d^alpha dbar^beta b|`` over E x E, and its log-log slope in 1/dist.

    ``kernels`` and ``probes`` are parallel sequences describing a family of
    shrinking domains (a single kernel gives a NaN slope).
    """
    if isinstance(kernels, KernelModel):
        kernels, probes = [kernels], [probes]
    alpha = np.atleast_1d(np.asarray(alpha, dtype=int))
    beta = np.atleast_1d(np.asarray(beta, dtype=int))
    sups, dists = [], []
    for k, E in zip(kernels, probes):
        E = [np.atleast_1d(np.asarray(p, dtype=complex)) for p in E]
        sups.append(max(abs(kernel_derivative(k, z, w, alpha, beta)) for z in E for w in E))
        dists.append(min(k.domain.boundary_distance(z) for z in E))
    sups, dists = np.array(sups), np.array(dists)
    slope = np.nan
    if len(kernels) > 1 and np.all(sups > 0):
        slope = float(np.polyfit(np.log(1 / dists), np.log(sups), 1)[0])
    n = kernels[0].dim
    return InteriorEstimate(
        tuple(alpha), tuple(beta), sups, dists, slope, 2 * n + int(alpha.sum() + beta.sum())
    )


def diagonal_by_degree(k: KernelModel, z) -> np.ndarray:
    """``b_d(z, z)`` for every truncation degree d = 0..k.degree."""
    m = k.monomials(z)
    deg = np.abs(k.exponents).sum(axis=1)
    out = np.empty(k.degree + 1)
    dscale = 1.0 / np.sqrt(np.real(np.diag(k.gram)))
    Gs = k.gram * np.outer(dscale, dscale)
    ms = m * dscale
    for d in range(k.degree + 1):
        idx = np.flatnonzero(deg <= d)
        L, perm, rank = pivoted_cholesky(Gs[np.ix_(idx, idx)])
        y = np.linalg.solve(L[:rank, :rank], ms[idx][perm[:rank]].conj())
        out[d] = float(np.sum(np.abs(y) ** 2))
    return out


@dataclass(frozen=True)
class TruncationReport:
    diagonal: np.ndarray
    cauchy_difference: float
    tail_estimate: float
    ratio: float
    recommended_degree: int


def truncation_report(k: KernelModel, z, target: float = 1e-8) -> TruncationReport:
    bd = diagonal_by_degree(k, z)
    c = np.diff(bd)
    if np.any(c < -1e-12 * max(1.0, bd[-1])):
        raise RuntimeError("internal error: truncated kernel diagonal decreased with degree")
    c = np.clip(c, 0.0, None)
    cauchy = float(bd[-1] - bd[k.degree // 2])
    big = np.flatnonzero(c >= target)
    if big.size == 0:
        return TruncationReport(bd, cauchy, 0.0, 0.0, 0)
    last = int(big[-1]) + 1  # c[j-1] is the degree-j contribution
    if last < k.degree:
        return TruncationReport(bd, cauchy, float(c[last:].sum()), 0.0, last)
    tail_terms = c[-4:]
    q = float(np.exp(np.mean(np.diff(np.log(tail_terms))))) if np.all(tail_terms > 0) else 0.0
    if not 0 < q < 1:
        return TruncationReport(bd, cauchy, np.inf, q, -1)
    extra = int(np.ceil(np.log(target / c[-1]) / np.log(q)))
    return TruncationReport(bd, cauchy, float(c[-1] * q / (1 - q)), q, k.degree + max(extra, 1))


# ---------------------------------------------------------------- serialization


def save_kernel(k: KernelModel, path: str | Path) -> None:
    meta = {
        "version": SERIAL_VERSION,
        "domain": k.domain.spec_string,
        "degree": k.degree,
        "quad_budget": k.quad_budget,
        "seed": k.seed,
        "scheme": k.scheme,
        "rank": k.rank,
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
            exponents=k.exponents,
            center=k.center,
            scale=k.scale,
            gram=k.gram,
            coeffs=k.coeffs,
            kmat=k.kmat,
        )


def load_kernel(path: str | Path) -> KernelModel:
    with np.load(path) as data:
        meta = json.loads(data["meta"].tobytes().decode())
        if meta.get("version") != SERIAL_VERSION:
            raise ValueError(f"unsupported kernel dump version {meta.get('version')}")
        arrays = {key: data[key] for key in ("exponents", "center", "scale", "gram", "coeffs", "kmat")}
    return KernelModel(
        domain=parse_domain(meta["domain"]),
        degree=meta["degree"],
        quad_budget=meta["quad_budget"],
        seed=meta["seed"],
        scheme=meta["scheme"],
        rank=meta["rank"],
        **arrays,
    )
