"""Rotationally symmetric Kahler geometry on the unit disk.

A radial metric is ``g(z) = G(s)`` with ``s = |z|^2``.  For radial functions
``d dbar f = (s f')' = s f'' + f'``, so with the form convention of
:mod:`invmetrics.geometry_core`

    Ric(g) = -L log g,        H(g) = -L log g / g,       L f = s f'' + f'.

Functions of ``s`` live on Chebyshev nodes of ``[0, s_max]``.  Equations are
collocated at every node except ``s_max``, which carries the boundary
condition; ``s = 0`` needs none because ``L`` degenerates there.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry_core import MetricField, ricci

__all__ = [
    "RADIAL_DIMENSIONS",
    "ContinuityStepTooLarge",
    "FlowUnstable",
    "ChebGrid",
    "cheb_grid",
    "RadialProfile",
    "poincare_profile",
    "euclidean_profile",
    "profile_from_function",
    "perturbed_poincare",
    "ContinuityState",
    "ma_residual",
    "ma_newton_solve",
    "PathResult",
    "continuity_path",
    "kappa_lower",
    "AprioriReport",
    "apriori_monitor",
    "FlowResult",
    "ricci_flow_run",
    "rk4_stability_limit",
    "write_dump",
    "read_dump",
]

# radial reduction for n >= 2 (Kahler potentials) is not implemented
RADIAL_DIMENSIONS = (1,)
RK4_REAL_AXIS = 2.785


class ContinuityStepTooLarge(RuntimeError):
    pass


class FlowUnstable(ValueError):
    pass


def _require_n(n: int) -> None:
    if n not in RADIAL_DIMENSIONS:
        raise NotImplementedError(f"radial reduction for n = {n} is not available")


@dataclass(frozen=True)
class ChebGrid:
    s: np.ndarray  # ascending, s[0] = 0, s[-1] = s_max
    D: np.ndarray  # d/ds
    L: np.ndarray  # s d^2/ds^2 + d/ds

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    @property
    def size(self) -> int:
        return len(self.s)

    def interpolant(self, values: np.ndarray) -> np.polynomial.Chebyshev:
        return np.polynomial.Chebyshev.fit(self.s, values, len(self.s) - 1, domain=[0.0, self.s_max])


def cheb_grid(nodes: int = 129, s_max: float = 0.98) -> ChebGrid:
    N = nodes - 1
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.hstack([2, np.ones(N - 1), 2]) * (-1.0) ** np.arange(N + 1)
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1 / c) / (dX + np.eye(N + 1))
    D = D - np.diag(D.sum(axis=1))
    # ascending s on [0, s_max]
    s = (x[::-1] + 1) * s_max / 2
    D = D[::-1, ::-1] * (2 / s_max)
    L = s[:, None] * (D @ D) + D
    return ChebGrid(s, D, L)


@dataclass(frozen=True)
class RadialProfile:
    """``log g`` on a Chebyshev grid; ``lap_log_g`` holds ``L log g`` when known exactly."""

    grid: ChebGrid
    log_g: np.ndarray
    lap_log_g: np.ndarray | None = None
    n: int = 1
    name: str = "radial"

    def __post_init__(self):
        _require_n(self.n)
        if not np.all(np.isfinite(self.log_g)):
            raise ValueError("profile must be finite on the grid")

    @property
    def s(self) -> np.ndarray:
        return self.grid.s

    @property
    def g(self) -> np.ndarray:
        return np.exp(self.log_g)

    def laplacian_log_g(self) -> np.ndarray:
        return self.lap_log_g if self.lap_log_g is not None else self.grid.L @ self.log_g

    def ricci(self) -> np.ndarray:
        return -self.laplacian_log_g()

    def holomorphic_curvature(self) -> np.ndarray:
        return -self.laplacian_log_g() / self.g

    def scaled(self, lam: float) -> "RadialProfile":
        return RadialProfile(self.grid, self.log_g + math.log(lam), self.lap_log_g, self.n, f"{lam:g}*{self.name}")

    def field(self) -> MetricField:
        """Spectral interpolant as a :class:`MetricField` with exact derivatives."""
        p = self.grid.interpolant(self.log_g)
        p1, p2 = p.deriv(1), p.deriv(2)
        s_max = self.grid.s_max

        def parts(z):
            s = abs(z[0]) ** 2
            G = math.exp(p(s))
            return s, G, p1(s) * G, (p2(s) + p1(s) ** 2) * G

        def ev(z):
            return np.array([[parts(z)[1]]], dtype=complex)

        def dg(z):
            s, G, G1, _ = parts(z)
            return np.array([[[G1 * np.conj(z[0])]]], dtype=complex)

        def ddg(z):
            s, G, G1, G2 = parts(z)
            return np.array([[[[G1 + s * G2]]]], dtype=complex)

        return MetricField(
            dim=1,
            eval=ev,
            dg=dg,
            ddg=ddg,
            regularity_radius=math.sqrt(s_max),
            boundary_distance=lambda z: math.sqrt(s_max) - abs(z[0]),
            name=self.name,
        )


def profile_from_function(
    log_G: Callable[[np.ndarray], np.ndarray],
    grid: ChebGrid | None = None,
    lap_log_G: Callable[[np.ndarray], np.ndarray] | None = None,
    name: str = "radial",
) -> RadialProfile:
    grid = grid or cheb_grid()
    lap = None if lap_log_G is None else np.asarray(lap_log_G(grid.s), dtype=float)
    return RadialProfile(grid, np.asarray(log_G(grid.s), dtype=float), lap, 1, name)


def poincare_profile(c: float = 2.0, grid: ChebGrid | None = None) -> RadialProfile:
    """``g = c / (1 - s)^2``; ``L log g = 2 / (1 - s)^2`` exactly."""
    return profile_from_function(
        lambda s: math.log(c) - 2 * np.log1p(-s),
        grid,
        lambda s: 2 / (1 - s) ** 2,
        "poincare" if c == 2.0 else f"poincare[c={c:g}]",
    )


def euclidean_profile(grid: ChebGrid | None = None) -> RadialProfile:
    return profile_from_function(np.zeros_like, grid, np.zeros_like, "euclidean")


def perturbed_poincare(eps: float, shape: str = "1-s", grid: ChebGrid | None = None) -> RadialProfile:
    """``g = 2 / (1 - s)^2 * (1 + eps * q(s))`` with ``q = 1 - s`` or ``q = s``.

    ``L log g`` is exact: the Poincare part plus ``L log(1 + eps q)``.
    """
    if shape == "1-s":
        q, q1 = (lambda s: 1 - s), (lambda s: -np.ones_like(s))
    elif shape == "s":
        q, q1 = (lambda s: s), (lambda s: np.ones_like(s))
    else:
        raise ValueError(f"unknown perturbation shape {shape!r}")

    def lap(s):
        p = 1 + eps * q(s)
        # (s (log p)')' with q linear: (s eps q1 / p)' = eps q1 / p - s eps^2 q1^2 / p^2
        return 2 / (1 - s) ** 2 + eps * q1(s) / p - s * (eps * q1(s)) ** 2 / p**2

    return profile_from_function(
        lambda s: math.log(2.0) - 2 * np.log1p(-s) + np.log1p(eps * q(s)),
        grid,
        lap,
        f"poincare*(1{eps:+g}({shape}))",
    )


# ---------------------------------------------------------------- Monge-Ampere


@dataclass(frozen=True)
class ContinuityState:
    t: float
    u: np.ndarray
    residual: float
    sup_u: float
    inf_u: float
    trace: np.ndarray  # S = tr_{omega_t} omega on the grid
    omega_t: np.ndarray  # metric coefficient of t omega + dd^c log omega + dd^c u
    iterations: int
    history: tuple[float, ...] = field(default=())


def _omega_t(omega: RadialProfile, t: float, u: np.ndarray) -> np.ndarray:
    return t * omega.g + omega.laplacian_log_g() + omega.grid.L @ u


def ma_residual(omega: RadialProfile, t: float, u: np.ndarray) -> np.ndarray:
    """``(t g + L log g + L u - e^u g) / g`` at the collocation nodes (boundary node excluded)."""
    r = (_omega_t(omega, t, u) - np.exp(u) * omega.g) / omega.g
    return r[:-1]


def _newton_system(omega, t, u, boundary):
    grid = omega.grid
    g = omega.g
    F = np.empty_like(u)
    F[:-1] = ma_residual(omega, t, u)
    J = (grid.L - np.diag(np.exp(u) * g)) / g[:, None]
    if boundary == "neumann":
        F[-1] = grid.D[-1] @ u
        J[-1] = grid.D[-1]
    else:
        F[-1] = u[-1]
        J[-1] = 0.0
        J[-1, -1] = 1.0
    return F, J


def ma_newton_solve(
    omega: RadialProfile,
    t: float,
    u0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 60,
    boundary: str = "neumann",
) -> ContinuityState:
    """Damped Newton for ``(t omega + dd^c log omega^n + dd^c u)^n = e^u omega^n``.

    Steps are halved until ``omega_t`` stays positive and the residual drops.
    ``boundary`` is the condition at ``s_max``: ``"neumann"`` (u' = 0) or
    ``"dirichlet"`` (u = 0).
    """
    _require_n(omega.n)
    u = np.zeros(omega.grid.size) if u0 is None else np.array(u0, dtype=float)
    if not np.all(_omega_t(omega, t, u) > 0):
        raise ContinuityStepTooLarge("initial guess does not give a positive omega_t")
    F, J = _newton_system(omega, t, u, boundary)
    res = float(np.abs(F).max())
    history = [res]
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise ContinuityStepTooLarge(f"continuity step too large: residual {res:.3g} after {it} steps")
        du = np.linalg.solve(J, -F)
        lam = 1.0
        while True:
            cand = u + lam * du
            if np.all(_omega_t(omega, t, cand) > 0):
                Fc, Jc = _newton_system(omega, t, cand, boundary)
                rc = float(np.abs(Fc).max())
                if rc < res:
                    break
            lam *= 0.5
            if lam < 2.0**-20:
                if res < 1e3 * tol:
                    # stagnated at rounding level
                    rc = res
                    cand, Fc, Jc = u, F, J
                    break
                raise ContinuityStepTooLarge(f"continuity step too large: damping failed at residual {res:.3g}")
        it += 1
        if cand is u:
            break
        u, F, J, res = cand, Fc, Jc, rc
        history.append(res)
    wt = _omega_t(omega, t, u)
    return ContinuityState(
        t=float(t),
        u=u,
        residual=res,
        sup_u=float(u.max()),
        inf_u=float(u.min()),
        trace=omega.g / wt,
        omega_t=wt,
        iterations=it,
        history=tuple(history),
    )


def kappa_lower(omega: RadialProfile) -> float:
    """Largest ``kappa`` with ``H(omega) <= -kappa`` on the grid."""
    return float(np.min(-omega.holomorphic_curvature()))


@dataclass(frozen=True)
class PathResult:
    states: list
    ke: RadialProfile
    ke_defect: float  # max |Ric(omega_KE) + omega_KE| / omega_KE through geometry_core
    t_start: float
    last_good_t: float


def _ke_defect(ke: RadialProfile) -> float:
    fld = ke.field()
    worst = 0.0
    for s, g in zip(ke.s, ke.g):
        z = np.array([math.sqrt(s)])
        ric = ricci(fld, z)[0, 0].real
        worst = max(worst, abs(ric + g) / g)
    return worst


def continuity_path(
    omega: RadialProfile,
    t_start: float | None = None,
    t_end: float = 0.0,
    t_floor: float = 1e-9,
    tol: float = 1e-10,
    boundary: str = "neumann",
    max_steps: int = 400,
) -> PathResult:
    """Follow ``(MA)_t`` from ``t_start`` down to ``t = 0`` by halving ``t``.

    Without ``t_start`` the path starts at ``2 t1`` with ``t1 = 1.01 sqrt(n) B0``
    and ``B0`` the grid sup of ``|Ric(omega)|_omega``.
    """
    _require_n(omega.n)
    if t_start is None:
        B0 = float(np.max(np.abs(omega.ricci()) / omega.g))
        t_start = 2 * 1.01 * math.sqrt(omega.n) * max(B0, 1e-12)
    if not np.all(t_start * omega.g + omega.laplacian_log_g() > 0):
        raise ValueError("t_start too small: t omega + dd^c log omega^n is not positive")
    states = [ma_newton_solve(omega, t_start, None, tol, boundary=boundary)]
    t = t_start
    target = t_start / 2
    steps = 0
    while t > t_end:
        steps += 1
        if steps > max_steps:
            raise ContinuityStepTooLarge(f"path failure; last good t = {t:.6g}")
        if target < t_floor * t_start:
            target = t_end
        try:
            st = ma_newton_solve(omega, target, states[-1].u, tol, boundary=boundary)
        except ContinuityStepTooLarge:
            if t - target < 1e-14 * t_start:
                raise ContinuityStepTooLarge(f"path failure; last good t = {t:.6g}")
            target = 0.5 * (t + target)
            continue
        states.append(st)
        t = target
        target = t / 2
    u = states[-1].u
    ke = RadialProfile(omega.grid, omega.log_g + u, None, omega.n, "kahler_einstein")
    return PathResult(states, ke, _ke_defect(ke), float(t_start), float(t))


@dataclass(frozen=True)
class AprioriReport:
    sup_u: float
    inf_u: float
    sup_trace: float
    trace_bound: float
    residual: float
    trace_bound_ok: bool
    residual_ok: bool

    @property
    def ok(self) -> bool:
        return self.trace_bound_ok and self.residual_ok


def apriori_monitor(state: ContinuityState, omega: RadialProfile, kappa1: float, residual_tol: float = 1e-8) -> AprioriReport:
    """Check ``sup S <= 2n / ((n+1) kappa1)`` and recompute the equation residual from ``u``."""
    n = omega.n
    bound = 2 * n / ((n + 1) * kappa1) if kappa1 > 0 else math.inf
    wt = _omega_t(omega, state.t, state.u)
    S = omega.g / wt
    res = float(np.abs(ma_residual(omega, state.t, state.u)).max())
    return AprioriReport(
        sup_u=float(state.u.max()),
        inf_u=float(state.u.min()),
        sup_trace=float(S.max()),
        trace_bound=bound,
        residual=res,
        trace_bound_ok=bool(S.max() <= bound * (1 + 1e-6)),
        residual_ok=bool(res <= residual_tol),
    )


# ---------------------------------------------------------------- Kahler-Ricci flow


@dataclass(frozen=True)
class FlowResult:
    times: np.ndarray
    log_g: np.ndarray  # (steps + 1, nodes)
    h_max: np.ndarray  # max over the grid of H(g(t))
    h_min: np.ndarray
    envelope: np.ndarray  # max |log(g(t) / g0)|
    rm_proxy: np.ndarray  # max |Rm| (= max |H| for n = 1)
    kappa1: float
    t0: float | None  # first time h exceeds -kappa1 / 2 (None: never within the run)
    truncated: bool = False
    diagnostic: str = ""

    @property
    def pinching_window(self) -> tuple[float, float]:
        return float(self.h_min.min()), float(self.h_max.max())


def _neumann_projector(grid: ChebGrid):
    Dl = grid.D[-1]

    def proj(v):
        v = v.copy()
        v[-1] = -(Dl[:-1] @ v[:-1]) / Dl[-1]
        return v

    return proj


def rk4_stability_limit(g0: RadialProfile) -> float:
    """Largest stable RK4 step for the flow linearized at ``g0`` (Neumann boundary row eliminated)."""
    grid = g0.grid
    N = grid.size - 1
    P = np.vstack([np.eye(N), -grid.D[-1, :-1] / grid.D[-1, -1]])
    A = (4 * grid.L / g0.g[:, None]) @ P
    rho = float(np.max(np.abs(np.linalg.eigvals(A[:N]))))
    return RK4_REAL_AXIS / rho


def ricci_flow_run(g0: RadialProfile, t_max: float, dt: float, check_stability: bool = True) -> FlowResult:
    """RK4 method of lines for ``dg/dt = -4 Ric(g)``.

    Works with ``w = log g = log g0 + v``; ``L log g0`` is taken from the
    profile (exact when known) and ``v`` carries a Neumann condition at
    ``s_max``.  Raises :class:`FlowUnstable` when ``dt`` exceeds the RK4
    stability limit of the linearized operator.
    """
    _require_n(g0.n)
    stationary = not np.any(g0.laplacian_log_g())
    # a stationary start (flat metric) is integrated exactly for any dt
    if check_stability and not stationary:
        lim = rk4_stability_limit(g0)
        if dt > lim:
            raise FlowUnstable(f"dt = {dt:g} exceeds the RK4 stability limit {lim:.3g} on this grid")
    grid = g0.grid
    w0 = g0.log_g
    Lw0 = g0.laplacian_log_g()
    L = grid.L
    proj = _neumann_projector(grid)

    def rhs(v):
        return 4 * np.exp(-(w0 + v)) * (Lw0 + L @ v)

    def H(v):
        return -(Lw0 + L @ v) / np.exp(w0 + v)

    steps = int(round(t_max / dt))
    v = np.zeros_like(w0)
    times, logs, hmax, hmin, env = [0.0], [w0.copy()], [], [], []
    h = H(v)
    hmax.append(h.max())
    hmin.append(h.min())
    env.append(0.0)
    truncated, diag = False, ""
    for k in range(steps):
        k1 = rhs(v)
        k2 = rhs(proj(v + 0.5 * dt * k1))
        k3 = rhs(proj(v + 0.5 * dt * k2))
        k4 = rhs(proj(v + dt * k3))
        v = proj(v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        w = w0 + v
        if not np.all(np.isfinite(w)) or np.abs(v).max() > 50:
            truncated, diag = True, f"blow-up at t = {(k + 1) * dt:.6g}: g left the representable range"
            break
        times.append(round((k + 1) * dt, 12))
        logs.append(w)
        h = H(v)
        hmax.append(h.max())
        hmin.append(h.min())
        env.append(float(np.abs(v).max()))
    kappa1 = kappa_lower(g0)
    hmax_a = np.array(hmax)
    above = np.flatnonzero(hmax_a > -kappa1 / 2)
    return FlowResult(
        times=np.array(times),
        log_g=np.array(logs),
        h_max=hmax_a,
        h_min=np.array(hmin),
        envelope=np.array(env),
        rm_proxy=np.maximum(np.abs(hmax_a), np.abs(np.array(hmin))),
        kappa1=kappa1,
        t0=float(times[above[0]]) if above.size else None,
        truncated=truncated,
        diagnostic=diag,
    )


# ---------------------------------------------------------------- dumps

DUMP_VERSION = 1


def write_dump(kind: str, meta: dict, columns: dict[str, np.ndarray]) -> str:
    """Versioned columnar text: ``# invmetrics-<kind> v1``, ``# key=value`` lines, header, rows."""
    out = io.StringIO()
    out.write(f"# invmetrics-{kind} v{DUMP_VERSION}\n")
    for key in sorted(meta):
        out.write(f"# {key}={meta[key]}\n")
    names = list(columns)
    out.write(",".join(names) + "\n")
    cols = [np.asarray(columns[k], dtype=float) for k in names]
    for row in zip(*cols):
        out.write(",".join(repr(float(x)) for x in row) + "\n")
    return out.getvalue()


def read_dump(text: str) -> tuple[str, dict, dict[str, np.ndarray]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# invmetrics-"):
        raise ValueError("malformed dump: missing invmetrics header")
    head = lines[0][2:].split()
    kind = head[0][len("invmetrics-"):]
    if head[1] != f"v{DUMP_VERSION}":
        raise ValueError(f"malformed dump: unsupported version {head[1]}")
    meta, i = {}, 1
    while i < len(lines) and lines[i].startswith("# "):
        key, _, val = lines[i][2:].partition("=")
        meta[key] = val
        i += 1
    if i >= len(lines):
        raise ValueError("malformed dump: no column header")
    names = lines[i].split(",")
    rows = [list(map(float, ln.split(","))) for ln in lines[i + 1:] if ln.strip()]
    if any(len(r) != len(names) for r in rows):
        raise ValueError("malformed dump: ragged rows")
    data = np.array(rows).reshape(-1, len(names))
    return kind, meta, {k: data[:, j] for j, k in enumerate(names)}
