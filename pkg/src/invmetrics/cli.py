"""``invmetrics`` command line: compute, compare, flow, report.

Exit codes: 0 pass, 1 assertion failure, 2 usage, 3 numerical failure.

Configuration is plain ``key = value`` text with ``[section]`` headers.  Keys
before the first header belong to ``[run]``.  Environment variables
``INVMETRICS_<SECTION>_<KEY>`` (or ``INVMETRICS_<KEY>`` for ``[run]``) override
the file, and command-line flags override both.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy

from . import __version__
from . import bergman as bg
from . import einstein_flow as ef
from . import geometry_core as gc
from . import kobayashi as kb
from .domains import DomainSpec, parse_domain, rng

SCHEMA = "invmetrics-report"
SCHEMA_VERSION = 1
FOOTER_KEY = "footer"
HERMITIAN = ("euclidean", "poincare", "bergman", "kahler_einstein")
KOBAYASHI_NOTE = (
    "kobayashi columns hold the squared Finsler value K(z,xi)^2 per sampled direction, "
    "not a Hermitian form; ratios against a Hermitian metric g are K^2/|xi|_g^2 and "
    "the equality case of the Schwarz bound reads K^2 = |xi|_g^2 / 2"
)

EXIT_PASS, EXIT_ASSERT, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

NUMERICAL_ERRORS = (
    ef.ContinuityStepTooLarge,
    ef.FlowUnstable,
    gc.MetricDegenerate,
    gc.InsufficientRegularity,
    bg.KernelVanishes,
    bg.QuadratureTooSmall,
    np.linalg.LinAlgError,
    FloatingPointError,
)


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, column: int | None = None, source: str = "config"):
        where = f"{source}:{line}:{column}: " if line is not None else ""
        super().__init__(where + msg)
        self.line, self.column = line, column


class ProvenanceMismatch(ValueError):
    pass


class MalformedDump(ValueError):
    pass


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class BergmanOptions:
    degree: int | None = None
    budget: int = 200_000
    seed: int = 0


@dataclass(frozen=True)
class KobayashiOptions:
    m: int | None = None
    budget: int = 8
    restarts: int = 8


@dataclass(frozen=True)
class KEOptions:
    nodes: int = 129
    s_max: float = 0.98
    boundary: str = "neumann"


@dataclass(frozen=True)
class FlowOptions:
    start: str = "perturbed"
    eps: float = -0.05
    shape: str = "1-s"
    t_max: float = 0.05
    dt: float = 1e-3
    nodes: int = 33
    s_max: float = 0.98


@dataclass(frozen=True)
class Assertions:
    equivalence_tol: float | None = None
    sup_ratio_above: float | None = None
    kobayashi_half_norm_tol: float | None = None
    kobayashi_value: float | None = None
    kobayashi_value_tol: float = 0.01
    pinching_lo: float | None = None
    pinching_hi: float | None = None


@dataclass(frozen=True)
class RunConfig:
    domain: str
    metrics: tuple[str, ...]
    seed: int
    budget: int = 64
    format: str = "json"
    radius_fraction: float = 0.7
    points: str | None = None
    profile: str | None = None
    bergman: BergmanOptions = BergmanOptions()
    kobayashi: KobayashiOptions = KobayashiOptions()
    kahler_einstein: KEOptions = KEOptions()
    flow: FlowOptions = FlowOptions()
    tolerances: Assertions = Assertions()

    def canonical(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


SECTIONS = {
    "run": None,
    "bergman": BergmanOptions,
    "kobayashi": KobayashiOptions,
    "kahler_einstein": KEOptions,
    "flow": FlowOptions,
    "tolerances": Assertions,
}
RUN_KEYS = {"domain", "metrics", "seed", "budget", "format", "radius_fraction", "points", "profile"}


def parse_config_text(text: str, source: str = "config") -> dict[str, dict[str, tuple[str, int, int]]]:
    """Raw ``{section: {key: (value, line, column)}}``; errors carry line and column."""
    out: dict[str, dict[str, tuple[str, int, int]]] = {"run": {}}
    section = "run"
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", lineno, col + len(stripped), source)
            section = stripped[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno, col + 1, source)
            out.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ConfigError("expected key = value", lineno, col, source)
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        if not key:
            raise ConfigError("empty key", lineno, col, source)
        if key in out[section]:
            raise ConfigError(f"duplicate key {key!r}", lineno, col, source)
        vcol = raw.index("=") + 2 + (len(value) - len(value.lstrip()))
        out[section][key] = (value.strip(), lineno, vcol)
    return out


def _env_overrides(environ) -> dict[str, dict[str, tuple[str, None, None]]]:
    out: dict[str, dict] = {}
    for name, value in sorted(environ.items()):
        if not name.startswith("INVMETRICS_"):
            continue
        rest = name[len("INVMETRICS_"):].lower()
        for sec in SECTIONS:
            if rest.startswith(sec + "_"):
                out.setdefault(sec, {})[rest[len(sec) + 1:]] = (value, None, None)
                break
        else:
            out.setdefault("run", {})[rest] = (value, None, None)
    return out


def _coerce(kind, value: str, where):
    text = value.strip()
    try:
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
        if kind in ("int|None", "float|None"):
            if text.lower() in ("", "none", "auto"):
                return None
            return int(text) if kind == "int|None" else float(text)
        if kind == "str|None":
            return text or None
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as {kind}", *where) from None
    return text


def _field_kind(cls, name):
    ann = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    ann = str(ann).replace(" ", "")
    return {"int": "int", "float": "float", "str": "str", "int|None": "int|None", "float|None": "float|None", "str|None": "str|None"}.get(ann, "str")


def build_config(raw: dict, cli: dict | None = None, source: str = "config") -> RunConfig:
    """Merge raw sections (file, then env) and CLI values into a :class:`RunConfig`."""
    run: dict[str, Any] = {}
    subs: dict[str, dict[str, Any]] = {}
    for sec, items in raw.items():
        for key, (value, line, col) in items.items():
            where = (line, col, source)
            if sec == "run":
                if key not in RUN_KEYS:
                    raise ConfigError(f"unknown key {key!r} in [run]", *where)
                run[key] = (value, where)
            else:
                cls = SECTIONS[sec]
                names = {f.name for f in dataclasses.fields(cls)}
                if key not in names:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", *where)
                subs.setdefault(sec, {})[key] = _coerce(_field_kind(cls, key), value, where)
    for key, value in (cli or {}).items():
        if value is not None:
            run[key] = (str(value), (None, None, "command line"))
    if "seed" not in run:
        raise ConfigError("seed is mandatory")
    if "domain" not in run:
        raise ConfigError("domain is mandatory")
    metrics_raw, where = run.get("metrics", ("", (None, None, source)))
    metrics = tuple(m.strip() for m in metrics_raw.split(",") if m.strip())
    if not metrics:
        raise ConfigError("empty metric list", *where)
    for m in metrics:
        if m not in HERMITIAN + ("kobayashi",) and not m.startswith("radial:"):
            raise ConfigError(f"unknown metric {m!r}", *where)
    fmt = run.get("format", ("json", None))[0].lower()
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}", *run["format"][1])
    kwargs = dict(
        domain=run["domain"][0],
        metrics=metrics,
        seed=_coerce("int", run["seed"][0], run["seed"][1]),
        format=fmt,
    )
    for key, kind in (("budget", "int"), ("radius_fraction", "float"), ("points", "str|None"), ("profile", "str|None")):
        if key in run:
            kwargs[key] = _coerce(kind, run[key][0], run[key][1])
    for sec, vals in subs.items():
        kwargs[sec] = SECTIONS[sec](**vals)
    try:
        parse_domain(kwargs["domain"])
    except ValueError as exc:
        raise ConfigError(str(exc), *run["domain"][1]) from None
    return RunConfig(**kwargs)


def load_config(path: str | None, cli: dict | None = None, environ=None) -> RunConfig:
    raw: dict = {"run": {}}
    source = "config"
    if path:
        source = path
        raw = parse_config_text(Path(path).read_text(encoding="utf-8"), path)
    for sec, items in _env_overrides(os.environ if environ is None else environ).items():
        raw.setdefault(sec, {}).update(items)
    return build_config(raw, cli, source)


# ---------------------------------------------------------------- metrics and samples


def _parse_points(text: str, dim: int) -> list[np.ndarray]:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        coords = [complex(c.strip().replace(" ", "")) for c in chunk.split(",")]
        if len(coords) != dim:
            raise ConfigError(f"point {chunk!r} has {len(coords)} coordinates, domain needs {dim}")
        pts.append(np.array(coords, dtype=complex))
    return pts


def sample_pairs(d: DomainSpec, cfg: RunConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic ``(z, xi)`` samples inside ``radius_fraction`` of the domain."""
    g = rng(cfg.seed)
    n, k, frac = d.dim, cfg.budget, cfg.radius_fraction
    if cfg.points:
        pts = _parse_points(cfg.points, n)
    elif d.kind == "punctured_disk":
        # log-uniform radii so the samples reach |z| = 1e-3
        r = np.exp(np.linspace(math.log(1e-3), math.log(frac), k))
        pts = [np.array([ri * np.exp(2j * np.pi * g.random())]) for ri in r]
    elif d.kind == "annulus":
        a, b = d.radii
        r = a + (b - a) * (0.5 + (g.random(k) - 0.5) * frac)
        pts = [np.array([ri * np.exp(2j * np.pi * g.random())]) for ri in r]
    elif d.kind == "ball":
        v = g.normal(size=(k, n)) + 1j * g.normal(size=(k, n))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = frac * d.radii[0] * g.random(k) ** (1 / (2 * n))
        pts = list(v * r[:, None])
    elif d.kind == "polydisk":
        r = frac * np.asarray(d.radii) * np.sqrt(g.random((k, n)))
        pts = list(r * np.exp(2j * np.pi * g.random((k, n))))
    else:
        cand = d.sample(max(8 * k, 256), cfg.seed).points
        inner = cand[d.defining(cand) < -0.05]
        pts = list(inner[:k])
    if n == 1:
        dirs = [np.ones(1, dtype=complex)] * len(pts)
    else:
        v = g.normal(size=(len(pts), n)) + 1j * g.normal(size=(len(pts), n))
        dirs = list(v / np.linalg.norm(v, axis=1, keepdims=True))
    return list(zip(pts, dirs))


def _poincare_for(d: DomainSpec) -> gc.MetricField:
    if d.kind == "punctured_disk":
        return gc.punctured_poincare()
    if d.kind == "ball" and d.dim == 1:
        r2 = d.radii[0] ** 2
        if r2 == 1.0:
            return gc.poincare_disk()
        return gc.radial_field(
            lambda s: 2 * r2 / (r2 - s) ** 2,
            lambda s: 4 * r2 / (r2 - s) ** 3,
            lambda s: 12 * r2 / (r2 - s) ** 4,
            name="poincare",
            regularity_radius=d.radii[0],
        )
    raise ConfigError(f"poincare metric is not available on {d.spec_string}")


def _ke_for(d: DomainSpec, cfg: RunConfig) -> tuple[gc.MetricField, ef.PathResult]:
    if not (d.kind == "ball" and d.dim == 1 and d.radii[0] == 1.0):
        raise ConfigError("kahler_einstein is available on the unit disk only (radial solver)")
    opts = cfg.kahler_einstein
    grid = ef.cheb_grid(opts.nodes, opts.s_max)
    start = _load_profile(cfg.profile, grid) if cfg.profile else ef.poincare_profile(grid=grid)
    path = ef.continuity_path(start, boundary=opts.boundary)
    return path.ke.field(), path


def _load_profile(path: str, grid: ef.ChebGrid) -> ef.RadialProfile:
    kind, meta, cols = ef.read_dump(Path(path).read_text(encoding="utf-8"))
    if "s" not in cols or "log_g" not in cols:
        raise MalformedDump(f"{path}: radial profile needs s and log_g columns")
    poly = np.polynomial.Chebyshev.fit(cols["s"], cols["log_g"], min(len(cols["s"]) - 1, 64))
    return ef.RadialProfile(grid, poly(grid.s), None, 1, f"radial:{Path(path).name}")


def build_metric(name: str, d: DomainSpec, cfg: RunConfig) -> tuple[gc.MetricField, dict]:
    info: dict = {}
    if name == "euclidean":
        return gc.euclidean(d.dim), info
    if name == "poincare":
        return _poincare_for(d), info
    if name == "bergman":
        o = cfg.bergman
        k = bg.build_kernel(d, o.degree, o.budget, o.seed)
        info = {"degree": k.degree, "rank": k.rank, "scheme": k.scheme}
        return bg.bergman_field(k), info
    if name == "kahler_einstein":
        fld, path = _ke_for(d, cfg)
        info = {"ke_defect": path.ke_defect, "continuity_states": len(path.states)}
        return fld, info
    if name.startswith("radial:"):
        grid = ef.cheb_grid(cfg.kahler_einstein.nodes, cfg.kahler_einstein.s_max)
        return _load_profile(name[len("radial:"):], grid).field(), info
    raise ConfigError(f"metric {name!r} is not Hermitian")


def _kobayashi_sq(d: DomainSpec, z, xi, cfg: RunConfig) -> tuple[float, bool]:
    o = cfg.kobayashi
    up = kb.kr_upper(d, z, xi, poly_degree=o.m, restarts=o.restarts, seed=cfg.seed)
    return up.value**2, up.fallback


# ---------------------------------------------------------------- report model


def _num(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ""
    return str(x)


def _point_str(z) -> str:
    return " ".join(f"{complex(c).real!r}{complex(c).imag:+}j" for c in np.atleast_1d(z))


@dataclass
class Report:
    command: str
    config: RunConfig
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    assertions: list[dict] = field(default_factory=list)
    runtime: float = 0.0

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.assertions.append({"name": name, "passed": bool(passed), "detail": detail})

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def header(self) -> dict:
        return {
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config_hash": self.config.config_hash(),
            "versions": {"invmetrics": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
            "semantics": KOBAYASHI_NOTE if any(c.startswith("kobayashi") for c in self.columns) else "",
        }

    def footer(self) -> dict:
        return {
            "runtime_s": round(self.runtime, 3),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "host": platform.node(),
        }

    def to_json(self) -> str:
        doc = self.header()
        doc["config"] = self.config.canonical()
        doc["columns"] = self.columns
        doc["rows"] = [[_num(v) if isinstance(v, float) else v for v in r] for r in self.rows]
        doc["summary"] = self.summary
        doc["flags"] = self.flags
        doc["assertions"] = self.assertions
        doc[FOOTER_KEY] = self.footer()
        return json.dumps(doc, indent=1, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        h = self.header()
        out.write(f"# {SCHEMA} v{SCHEMA_VERSION}\n")
        out.write(f"# command={h['command']}\n# config_hash={h['config_hash']}\n")
        out.write("# versions=" + json.dumps(h["versions"], sort_keys=True) + "\n")
        if h["semantics"]:
            out.write(f"# semantics={h['semantics']}\n")
        out.write("# config=" + json.dumps(self.config.canonical(), sort_keys=True) + "\n")
        out.write("# summary=" + json.dumps(self.summary, sort_keys=True, allow_nan=False) + "\n")
        for f in self.flags:
            out.write(f"# flag={f}\n")
        for a in self.assertions:
            out.write(f"# assert={a['name']} {'PASS' if a['passed'] else 'FAIL'} {a['detail']}\n")
        out.write(",".join(self.columns) + "\n")
        for r in self.rows:
            out.write(",".join(_fmt(v) for v in r) + "\n")
        out.write(f"# {FOOTER_KEY}=" + json.dumps(self.footer(), sort_keys=True) + "\n")
        return out.getvalue()

    def render(self) -> str:
        return self.to_csv() if self.config.format == "csv" else self.to_json()


def strip_footer(text: str) -> str:
    """Report body without the run-dependent footer (what determinism is checked on)."""
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        doc.pop(FOOTER_KEY, None)
        return json.dumps(doc, indent=1)
    return "".join(ln for ln in text.splitlines(True) if not ln.startswith(f"# {FOOTER_KEY}="))


def parse_report(text: str, name: str = "<report>") -> dict:
    """Read a JSON or CSV report back into a dict with header, flags and assertions."""
    try:
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
            if doc.get("schema") != SCHEMA:
                raise MalformedDump(f"{name}: not an {SCHEMA} document")
            return doc
        lines = text.splitlines()
        if not lines or lines[0] != f"# {SCHEMA} v{SCHEMA_VERSION}":
            raise MalformedDump(f"{name}: missing {SCHEMA} header")
        doc: dict = {"flags": [], "assertions": [], "schema": SCHEMA}
        body = []
        for ln in lines[1:]:
            if ln.startswith("# "):
                key, _, val = ln[2:].partition("=")
                if key == "assert":
                    aname, status, *rest = val.split(" ", 2)
                    doc["assertions"].append({"name": aname, "passed": status == "PASS", "detail": rest[0] if rest else ""})
                elif key == "flag":
                    doc["flags"].append(val)
                elif key in ("versions", "config", "summary", FOOTER_KEY):
                    doc[key] = json.loads(val)
                else:
                    doc[key] = val
            else:
                body.append(ln)
        if not body:
            raise MalformedDump(f"{name}: no column header")
        doc["columns"] = body[0].split(",")
        doc["rows"] = [r.split(",") for r in body[1:] if r]
        if any(len(r) != len(doc["columns"]) for r in doc["rows"]):
            raise MalformedDump(f"{name}: ragged rows")
        return doc
    except (json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, MalformedDump):
            raise
        raise MalformedDump(f"{name}: {exc}") from None


# ---------------------------------------------------------------- commands


def _h(metric: gc.MetricField, z, xi) -> float:
    return gc.holo_sectional_curvature(metric, z, xi)


def cmd_compute(cfg: RunConfig) -> Report:
    """Evaluate each metric as a squared length ``|xi|^2_g`` (or ``K^2``) at the samples."""
    t0 = time.perf_counter()
    d = parse_domain(cfg.domain)
    samples = sample_pairs(d, cfg)
    cols = [f"z{i}" for i in range(d.dim)] + [f"xi{i}" for i in range(d.dim)]
    values: dict[str, list] = {}
    flags: list[str] = []
    summary: dict = {"domain": d.spec_string, "samples": len(samples), "metric_info": {}}
    for name in cfg.metrics:
        if name == "kobayashi":
            vals = []
            for i, (z, xi) in enumerate(samples):
                if i >= cfg.kobayashi.budget:
                    vals.append(None)
                    continue
                v, fb = _kobayashi_sq(d, z, xi, cfg)
                if fb:
                    flags.append(f"kobayashi_linear_fallback[{i}]")
                vals.append(v)
            if len(samples) > cfg.kobayashi.budget:
                flags.append(f"kobayashi_budget_exhausted[{cfg.kobayashi.budget}]")
        else:
            metric, info = build_metric(name, d, cfg)
            summary["metric_info"][name] = info
            vals = [gc.norm_sq(metric, z, xi) for z, xi in samples]
        for i, v in enumerate(vals):
            if v is not None and not math.isfinite(v):
                flags.append(f"{name}_divergent[{i}]")
        values[name] = vals
        cols.append(name)
    rows = []
    for i, (z, xi) in enumerate(samples):
        row = [_point_str(c) for c in z] + [_point_str(c) for c in xi]
        row += [None if values[m][i] is None else float(values[m][i]) for m in cfg.metrics]
        rows.append(row)
    rep = Report("compute", cfg, cols, rows, summary, flags)
    tol = cfg.tolerances
    if tol.kobayashi_value is not None and "kobayashi" in cfg.metrics:
        got = [v for v in values["kobayashi"] if v is not None]
        worst = max(abs(math.sqrt(v) - tol.kobayashi_value) / tol.kobayashi_value for v in got)
        rep.check("kobayashi_value", worst <= tol.kobayashi_value_tol, f"max rel err {worst:.3g} <= {tol.kobayashi_value_tol:g}")
    rep.runtime = time.perf_counter() - t0
    return rep


def cmd_compare(cfg: RunConfig) -> Report:
    """Pairwise ratio statistics; the second metric of a pair is measured against the first."""
    t0 = time.perf_counter()
    if len(cfg.metrics) < 2:
        raise ConfigError("compare needs at least two metrics")
    d = parse_domain(cfg.domain)
    samples = sample_pairs(d, cfg)
    herm: dict[str, gc.MetricField] = {}
    summary: dict = {"domain": d.spec_string, "samples": len(samples), "metric_info": {}, "curvature": {}}
    flags: list[str] = []
    for name in cfg.metrics:
        if name != "kobayashi":
            herm[name], summary["metric_info"][name] = build_metric(name, d, cfg)
    for name, m in herm.items():
        hs = []
        for z, xi in samples:
            try:
                hs.append(_h(m, z, xi))
            except gc.InsufficientRegularity:
                flags.append(f"curvature_skipped[{name}]")
                break
        else:
            summary["curvature"][name] = {"min_h": _num(min(hs)), "max_h": _num(max(hs))}
    kob = None
    if "kobayashi" in cfg.metrics:
        kob = []
        for i, (z, xi) in enumerate(samples[: cfg.kobayashi.budget]):
            v, fb = _kobayashi_sq(d, z, xi, cfg)
            if fb:
                flags.append(f"kobayashi_linear_fallback[{i}]")
            kob.append(v)
    cols = ["metric_a", "metric_b", "inf_ratio", "sup_ratio", "eig_min", "eig_max", "argmin_z", "argmax_z", "pair_flag"]
    rows = []
    names = list(cfg.metrics)
    tol = cfg.tolerances
    rep = Report("compare", cfg, cols, rows, summary, flags)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if "kobayashi" in (a, b):
                other = b if a == "kobayashi" else a
                ks = kob or []
                ratios = np.array([k / gc.norm_sq(herm[other], z, xi) for k, (z, xi) in zip(ks, samples)])
                if a == "kobayashi":
                    ratios = 1 / ratios
                lo, hi = int(ratios.argmin()), int(ratios.argmax())
                row = [a, b, float(ratios[lo]), float(ratios[hi]), None, None,
                       _point_str(samples[lo][0]), _point_str(samples[hi][0]), "finsler_directional"]
                if tol.kobayashi_half_norm_tol is not None:
                    half = 2 * ratios if b == "kobayashi" else 0.5 / ratios
                    err = float(np.abs(half - 1).max())
                    rep.check(f"kobayashi_half_norm[{a}/{b}]", err <= tol.kobayashi_half_norm_tol,
                              f"max |2K^2/|xi|^2 - 1| = {err:.3g} <= {tol.kobayashi_half_norm_tol:g}")
            else:
                st = gc.metric_ratio_stats(herm[a], herm[b], samples)
                row = [a, b, st.inf_ratio, st.sup_ratio, st.eig_min, st.eig_max,
                       _point_str(samples[st.argmin][0]), _point_str(samples[st.argmax][0]), ""]
                if not (math.isfinite(st.inf_ratio) and math.isfinite(st.sup_ratio)):
                    row[-1] = "non_finite_ratio"
                    flags.append(f"non_finite_ratio[{a}/{b}]")
                if tol.equivalence_tol is not None:
                    e = tol.equivalence_tol
                    ok = 1 - e <= st.inf_ratio and st.sup_ratio <= 1 + e
                    rep.check(f"equivalence[{a}/{b}]", ok,
                              f"[{st.inf_ratio:.10g}, {st.sup_ratio:.10g}] within 1 +- {e:g}")
                if tol.sup_ratio_above is not None:
                    big = max(st.sup_ratio, 1 / st.inf_ratio)
                    rep.check(f"sup_ratio_above[{a}/{b}]", big > tol.sup_ratio_above,
                              f"max(sup, 1/inf) = {big:.6g} > {tol.sup_ratio_above:g}")
            rows.append(row)
    rep.runtime = time.perf_counter() - t0
    return rep


def _flow_start(cfg: RunConfig) -> ef.RadialProfile:
    o = cfg.flow
    grid = ef.cheb_grid(o.nodes, o.s_max)
    if o.start == "einstein":
        return ef.poincare_profile(grid=grid)
    if o.start == "flat":
        return ef.euclidean_profile(grid)
    if o.start == "perturbed":
        return ef.perturbed_poincare(o.eps, o.shape, grid)
    if o.start == "profile":
        if not cfg.profile:
            raise ConfigError("flow start = profile needs a profile file")
        return _load_profile(cfg.profile, grid)
    raise ConfigError(f"unknown flow start {o.start!r}")


def cmd_flow(cfg: RunConfig) -> Report:
    t0 = time.perf_counter()
    o = cfg.flow
    g0 = _flow_start(cfg)
    res = ef.ricci_flow_run(g0, o.t_max, o.dt)
    cols = ["t", "h_max", "h_min", "envelope", "rm_proxy"]
    rows = [[float(t), float(a), float(b), float(e), float(r)]
            for t, a, b, e, r in zip(res.times, res.h_max, res.h_min, res.envelope, res.rm_proxy)]
    lo, hi = res.pinching_window
    summary = {
        "start": g0.name,
        "pinching_window": [_num(lo), _num(hi)],
        "kappa1": _num(res.kappa1),
        "t0_measured": res.t0,
        "truncated": res.truncated,
        "stability_limit_dt": _num(ef.rk4_stability_limit(g0)),
    }
    flags = []
    if res.truncated:
        flags.append(f"blow_up: {res.diagnostic}")
    if res.t0 is None:
        flags.append("t0_not_reached: h stayed below -kappa1/2 for the whole run")
    rep = Report("flow", cfg, cols, rows, summary, flags)
    tol = cfg.tolerances
    if tol.pinching_lo is not None or tol.pinching_hi is not None:
        a = -math.inf if tol.pinching_lo is None else tol.pinching_lo
        b = math.inf if tol.pinching_hi is None else tol.pinching_hi
        rep.check("pinching_window", a <= lo and hi <= b, f"[{lo:.6g}, {hi:.6g}] inside [{a:g}, {b:g}]")
    rep.runtime = time.perf_counter() - t0
    return rep


def cmd_report(paths: Sequence[str]) -> tuple[str, int]:
    """Aggregate reports; exit 0 iff every embedded assertion passed."""
    docs = []
    for p in paths:
        docs.append((p, parse_report(Path(p).read_text(encoding="utf-8"), p)))
    if not docs:
        raise MalformedDump("no inputs")
    hashes = {d.get("config_hash") for _, d in docs}
    if len(hashes) > 1:
        raise ProvenanceMismatch("provenance mismatch: inputs come from configs " + ", ".join(sorted(map(str, hashes))))
    out = io.StringIO()
    failed = []
    out.write(f"config_hash {hashes.pop()}\n")
    for p, d in docs:
        out.write(f"{p}: command={d.get('command')} flags={len(d.get('flags', []))}\n")
        for f in d.get("flags", []):
            out.write(f"  flag {f}\n")
        for a in d.get("assertions", []):
            status = "PASS" if a["passed"] else "FAIL"
            out.write(f"  {status} {a['name']}: {a['detail']}\n")
            if not a["passed"]:
                failed.append(a["name"])
    if failed:
        out.write("failed assertions: " + ", ".join(failed) + "\n")
    else:
        out.write("all assertions passed\n")
    return out.getvalue(), EXIT_ASSERT if failed else EXIT_PASS


# ---------------------------------------------------------------- entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="invmetrics", description="Invariant metrics on model domains.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("compute", "compare", "flow"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="key=value config file with [section] headers")
        s.add_argument("--domain")
        s.add_argument("--metrics", help="comma-separated metric list")
        s.add_argument("--seed", type=int)
        s.add_argument("--budget", type=int)
        s.add_argument("--format", choices=("csv", "json"))
        s.add_argument("--points", help="explicit points, coordinates by ',', points by ';'")
        s.add_argument("--profile", help="radial profile dump (s, log_g columns)")
        s.add_argument("-o", "--output", help="write the report here instead of stdout")
    r = sub.add_parser("report")
    r.add_argument("inputs", nargs="+")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        if args.command == "report":
            text, code = cmd_report(args.inputs)
            sys.stdout.write(text)
            return code
        cli = {k: getattr(args, k) for k in ("domain", "metrics", "seed", "budget", "format", "points", "profile")}
        if args.command == "flow":
            cli.setdefault("metrics", None)
            if cli["metrics"] is None:
                cli["metrics"] = "kahler_einstein"
            if cli["domain"] is None:
                cli["domain"] = "ball:r=1,n=1"
        cfg = load_config(args.config, cli)
        rep = {"compute": cmd_compute, "compare": cmd_compare, "flow": cmd_flow}[args.command](cfg)
    except (ConfigError, ProvenanceMismatch, MalformedDump, FileNotFoundError) as exc:
        print(f"invmetrics: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"invmetrics: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = rep.render()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if any(f.startswith("blow_up") for f in rep.flags):
        return EXIT_NUMERIC
    return EXIT_PASS if rep.passed else EXIT_ASSERT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


def main_entry() -> None:
    sys.exit(main())
