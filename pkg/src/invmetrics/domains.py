"""Model domains in C^n: membership, boundary distance and quadrature.

Spec strings accepted by :func:`parse_domain`::

    ball:r=1,n=2   polydisk:1,1   punctured_disk   annulus:0.2,1   dfh_omega
    disk           (alias for ball:r=1,n=1)
"""

from __future__ import annotations

import warnings

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize
from scipy.stats import qmc

__all__ = [
    "DomainSpec",
    "SampleSet",
    "ExteriorPoint",
    "rng",
    "parse_domain",
    "ball",
    "disk",
    "polydisk",
    "punctured_disk",
    "annulus",
    "dfh_omega",
    "dfh_defining",
    "DFH_BOX",
]

KINDS = ("ball", "polydisk", "punctured_disk", "annulus", "dfh_omega")

# Re z1 in (-1, 0), |Im z1| < 1, |z2| < 1, |z3| < 1: every nonnegative term of the
# defining function is below -Re z1 - |z1|^2 <= 1/4 < 1.
DFH_BOX = ((-1.0, 0.0), (-1.0, 1.0), 1.0, 1.0)


class ExteriorPoint(ValueError):
    pass


def rng(seed: int) -> np.random.Generator:
    """Counter-based generator; the only source of randomness in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


def dfh_defining(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2]
    a, b = np.abs(z2) ** 2, np.abs(z3) ** 2
    return z1.real + np.abs(z1) ** 2 + a**6 + b**6 + a**2 * b + a * b**3


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray  # (N, n) complex
    weights: np.ndarray  # (N,) Lebesgue volume weights
    seed: int
    scheme: str

    def integrate(self, values) -> complex:
        return complex(np.sum(self.weights * np.asarray(values)))

    def tobytes(self) -> bytes:
        return self.points.tobytes() + self.weights.tobytes()


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    dim: int
    radii: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if self.kind == "annulus" and not self.radii[0] < self.radii[1]:
            raise ValueError("annulus needs r_in < r_out")
        if self.kind == "dfh_omega" and self.dim != 3:
            raise ValueError("dfh_omega lives in C^3")
        if self.kind == "polydisk" and len(self.radii) != self.dim:
            raise ValueError("polydisk needs one radius per coordinate")

    # ------------------------------------------------------------ description

    @property
    def spec_string(self) -> str:
        if self.kind == "ball":
            return f"ball:r={self.radii[0]:g},n={self.dim}"
        if self.kind == "polydisk":
            return "polydisk:" + ",".join(f"{r:g}" for r in self.radii)
        if self.kind == "annulus":
            return f"annulus:{self.radii[0]:g},{self.radii[1]:g}"
        return self.kind

    def __str__(self) -> str:
        return self.spec_string

    @property
    def is_disk_like(self) -> bool:
        """One-variable and rotationally symmetric about 0."""
        return self.dim == 1 and self.kind in ("ball", "polydisk", "punctured_disk", "annulus")

    @property
    def outer_radius(self) -> float:
        if self.kind in ("ball", "annulus"):
            return self.radii[-1]
        if self.kind == "polydisk":
            return max(self.radii)
        if self.kind == "punctured_disk":
            return 1.0
        return 1.0

    @cached_property
    def affine_frame(self) -> tuple[np.ndarray, np.ndarray]:
        """Center and per-coordinate scale used to condition monomial bases."""
        if self.kind == "dfh_omega":
            return np.array([-0.5, 0, 0], dtype=complex), np.array([0.5, 1.0, 1.0])
        if self.kind == "polydisk":
            return np.zeros(self.dim, dtype=complex), np.array(self.radii, dtype=float)
        return np.zeros(self.dim, dtype=complex), np.full(self.dim, self.outer_radius)

    # ------------------------------------------------------------ geometry

    def _coerce(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if z.ndim == 0:
            z = z.reshape(1)
        if z.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: point has {z.shape[-1]} coordinates, domain has {self.dim}")
        return z

    def defining(self, z) -> np.ndarray:
        """Negative exactly on the domain (vectorized over leading axes)."""
        z = self._coerce(z)
        m = np.abs(z)
        if self.kind == "ball":
            return np.sum(m**2, axis=-1) - self.radii[0] ** 2
        if self.kind == "polydisk":
            return np.max(m / np.array(self.radii) - 1.0, axis=-1)
        if self.kind == "punctured_disk":
            r = m[..., 0]
            return np.where(r == 0, 0.0, r**2 - 1.0)
        if self.kind == "annulus":
            r = m[..., 0]
            rin, rout = self.radii
            return np.maximum(r - rout, rin - r)
        return dfh_defining(z)

    def contains(self, z) -> bool | np.ndarray:
        z = self._coerce(z)
        inside = self.defining(z) < 0
        return bool(inside) if np.ndim(inside) == 0 else inside

    def boundary_distance(self, z) -> float:
        z = self._coerce(z)
        if z.ndim != 1:
            raise ValueError("boundary_distance takes a single point")
        if not self.contains(z):
            raise ExteriorPoint(f"{z} is not inside {self}")
        m = np.abs(z)
        if self.kind == "ball":
            return float(self.radii[0] - np.linalg.norm(m))
        if self.kind == "polydisk":
            return float(np.min(np.array(self.radii) - m))
        if self.kind == "punctured_disk":
            return float(min(m[0], 1.0 - m[0]))
        if self.kind == "annulus":
            return float(min(m[0] - self.radii[0], self.radii[1] - m[0]))
        return _dfh_distance(z)

    # ------------------------------------------------------------ quadrature

    def sample(self, budget: int, seed: int = 0) -> SampleSet:
        """Quadrature rule with roughly ``budget`` nodes; deterministic in (budget, seed)."""
        if budget < 1:
            raise ValueError("budget must be >= 1")
        if self.kind == "dfh_omega":
            return _sobol_rejection(budget, seed)
        if self.kind == "polydisk":
            per = max(1, int(round(budget ** (1.0 / self.dim))))
            rules = [_disk_rule(per, 0.0, r) for r in self.radii]
            pts, wts = rules[0]
            pts = pts[:, None]
            for p2, w2 in rules[1:]:
                pts = np.concatenate(
                    [np.repeat(pts, len(p2), axis=0), np.tile(p2, len(pts))[:, None]], axis=1
                )
                wts = np.outer(wts, w2).ravel()
            return SampleSet(pts, wts, seed, "tensor-gauss-radial")
        if self.kind == "ball" and self.dim > 1:
            pts, wts = _ball_rule(self.dim, self.radii[0], budget)
            return SampleSet(pts, wts, seed, "tensor-gauss-radial")
        if self.kind == "punctured_disk":
            pts, wts = _disk_rule(budget, 0.0, 1.0, squared_map=True)
        elif self.kind == "annulus":
            pts, wts = _disk_rule(budget, *self.radii)
        else:
            pts, wts = _disk_rule(budget, 0.0, self.radii[0])
        return SampleSet(pts[:, None], wts, seed, "tensor-gauss-radial")

    def radial_moment(self, j: int, nodes: int | None = None) -> float:
        """``int |z|^(2j) dA`` over a one-variable rotationally symmetric domain.

        The angular integral is exact; the radial one uses Gauss-Legendre (with the
        r = rho^2 map for the punctured disk, so the origin is never a node).
        """
        if not self.is_disk_like:
            raise ValueError("radial moments need a rotationally symmetric planar domain")
        rin, rout = (self.radii if self.kind == "annulus" else (0.0, self.outer_radius))
        nodes = nodes or (2 * abs(j) + 4)
        x, w = np.polynomial.legendre.leggauss(nodes)
        if self.kind == "punctured_disk":
            rho = 0.5 * (x + 1)
            r = rho**2
            jac = 0.5 * w * 2 * rho
        else:
            r = rin + 0.5 * (x + 1) * (rout - rin)
            jac = 0.5 * w * (rout - rin)
        return float(2 * np.pi * np.sum(jac * r ** (2 * j + 1)))


def _disk_rule(budget: int, rin: float, rout: float, squared_map: bool = False):
    n_r = max(1, int(np.sqrt(budget / 2.0)))
    n_t = max(1, budget // n_r)
    x, w = np.polynomial.legendre.leggauss(n_r)
    if squared_map:
        rho = 0.5 * (x + 1) * np.sqrt(rout)
        r = rho**2
        wr = 0.5 * w * np.sqrt(rout) * 2 * rho * r
    else:
        r = rin + 0.5 * (x + 1) * (rout - rin)
        wr = 0.5 * w * (rout - rin) * r
    theta = 2 * np.pi * (np.arange(n_t) + 0.5) / n_t
    pts = (r[:, None] * np.exp(1j * theta[None, :])).ravel()
    wts = np.repeat(wr * (2 * np.pi / n_t), n_t)
    return pts, wts


def _ball_rule(n: int, r: float, budget: int):
    # |z_k|^2 = r^2 u w_k with w on the simplex (collapsed coordinates),
    # dV = prod(1/2 dx_k dphi_k) = 2^-n r^(2n) u^(n-1) J(t) du dt dphi.
    m_phi = max(2, int(round((budget / 4.0) ** (1.0 / (n + n)))) * 2)
    m_g = max(2, m_phi // 2)
    xg, wg = np.polynomial.legendre.leggauss(m_g)
    tg, twg = 0.5 * (xg + 1), 0.5 * wg
    grids = np.meshgrid(*([tg] * n), indexing="ij")
    wgrids = np.meshgrid(*([twg] * n), indexing="ij")
    u = grids[0].ravel()
    wt = np.prod([g.ravel() for g in wgrids], axis=0) * u ** (n - 1)
    fr = np.ones_like(u)
    frac = []
    for i in range(1, n):
        t = grids[i].ravel()
        frac.append(fr * t)
        wt = wt * fr
        fr = fr * (1 - t)
    frac.append(fr)
    frac = np.stack(frac, axis=1)  # (M, n), rows sum to 1
    mod = r * np.sqrt(u[:, None] * frac)
    phis = 2 * np.pi * (np.arange(m_phi) + 0.5) / m_phi
    ang = np.stack(np.meshgrid(*([phis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    pts = (mod[:, None, :] * np.exp(1j * ang[None, :, :])).reshape(-1, n)
    wts = np.repeat(wt * (2.0 ** -n) * r ** (2 * n) * (2 * np.pi / m_phi) ** n, len(ang))
    return pts, wts


def _sobol_rejection(budget: int, seed: int) -> SampleSet:
    (re_lo, re_hi), (im_lo, im_hi), r2, r3 = DFH_BOX
    lo = np.array([re_lo, im_lo, -r2, -r2, -r3, -r3])
    hi = np.array([re_hi, im_hi, r2, r2, r3, r3])
    box_vol = float(np.prod(hi - lo))
    sob = qmc.Sobol(d=6, scramble=True, seed=rng(seed))
    pts, n_raw = [], 0
    chunk = 1 << 16
    while n_raw < budget:
        take = min(chunk, budget - n_raw)
        with warnings.catch_warnings():
            # budgets need not be powers of two; balance is not relied on
            warnings.simplefilter("ignore", UserWarning)
            x = lo + (hi - lo) * sob.random(take)
        z = np.stack([x[:, 0] + 1j * x[:, 1], x[:, 2] + 1j * x[:, 3], x[:, 4] + 1j * x[:, 5]], axis=1)
        pts.append(z[dfh_defining(z) < 0])
        n_raw += take
    pts = np.concatenate(pts, axis=0)
    return SampleSet(pts, np.full(len(pts), box_vol / n_raw), seed, "sobol-rejection")


def _dfh_distance(z: np.ndarray) -> float:
    """Distance to {rho = 0}: SLSQP from several starts, keep the best certified foot point."""
    x0 = np.concatenate([z.real, z.imag])

    def to_c(x):
        return x[:3] + 1j * x[3:]

    def rho(x):
        return float(dfh_defining(to_c(x)))

    starts = []
    # ray bisection from z in the coordinate directions and toward the z1-circle
    dirs = [np.eye(6)[k] * s for k in range(6) for s in (1.0, -1.0)]
    c1 = np.zeros(6)
    c1[0] = -0.5
    dirs.append((x0 - c1) / max(np.linalg.norm(x0 - c1), 1e-12))
    for d in dirs:
        t_hi = 2.0
        if rho(x0 + t_hi * d) <= 0:
            continue
        t_lo = 0.0
        for _ in range(80):
            t = 0.5 * (t_lo + t_hi)
            t_lo, t_hi = (t, t_hi) if rho(x0 + t * d) < 0 else (t_lo, t)
        starts.append(x0 + t_hi * d)
    best = min(np.linalg.norm(s - x0) for s in starts)
    for s in starts:
        res = optimize.minimize(
            lambda x: np.sum((x - x0) ** 2),
            s,
            jac=lambda x: 2 * (x - x0),
            constraints=[{"type": "eq", "fun": rho}],
            method="SLSQP",
            options={"ftol": 1e-15, "maxiter": 200},
        )
        if res.success and abs(rho(res.x)) < 1e-10:
            best = min(best, float(np.linalg.norm(res.x - x0)))
    return best


# ---------------------------------------------------------------- constructors


def ball(r: float = 1.0, n: int = 1) -> DomainSpec:
    return DomainSpec("ball", n, (float(r),))


def disk(r: float = 1.0) -> DomainSpec:
    return ball(r, 1)


def polydisk(*radii: float) -> DomainSpec:
    return DomainSpec("polydisk", len(radii), tuple(float(r) for r in radii))


def punctured_disk() -> DomainSpec:
    return DomainSpec("punctured_disk", 1, (1.0,))


def annulus(r_in: float, r_out: float) -> DomainSpec:
    return DomainSpec("annulus", 1, (float(r_in), float(r_out)))


def dfh_omega() -> DomainSpec:
    return DomainSpec("dfh_omega", 3)


def parse_domain(text: str) -> DomainSpec:
    text = text.strip()
    kind, _, args = text.partition(":")
    kind = kind.strip()
    parts = [p.strip() for p in args.split(",") if p.strip()] if args else []
    try:
        if kind == "disk":
            return disk(float(parts[0]) if parts else 1.0)
        if kind == "ball":
            kw = dict(p.split("=", 1) for p in parts)
            return ball(float(kw.get("r", 1.0)), int(kw.get("n", 1)))
        if kind == "polydisk":
            return polydisk(*(float(p) for p in parts))
        if kind == "annulus":
            return annulus(float(parts[0]), float(parts[1]))
        if kind == "punctured_disk" and not parts:
            return punctured_disk()
        if kind == "dfh_omega" and not parts:
            return dfh_omega()
    except (ValueError, IndexError) as exc:
        raise ValueError(f"bad domain spec {text!r}: {exc}") from exc
    raise ValueError(f"bad domain spec {text!r}")
