"""Experiment specs and runners used by the command line.

A spec is a TOML document::

    experiment = "elliptic_bound"
    seed = 0

    [domain]
    kind = "interval"
    a = 0.0
    b = 1.0

    [grid]
    h = 1e-3

    [coefficients]
    W = 0.0            # number, expression in x and y, or a list for vectors
    V = 0.0
    F = 1.0

    [solver]
    tol = 1e-10

    [sweep]            # optional: seeded random coefficients
    count = 50
    K_max = 3.0
    f_max = 2.0

    [params]           # experiment-specific settings

Every runner returns an :class:`Outcome` with CSV rows, named checks and
JSON reports; :func:`write_outcome` serializes it.
"""
from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .barrier import build_barrier
from .elliptic import solve_elliptic
from .expressions import ExpressionError, compile_expression, field_from_spec
from .geometry import GeometryError, build_domain, discretize
from .landis1d import (
    FirstOrderSystem, check_duality_identity, check_gronwall_envelope, decay_demo,
    gaussian_solution, integrate_adjoint,
)
from .multiplier import build_multiplier, verify_log_grad_bound
from .parabolic import solve_parabolic, solve_shifted
from .pde_core import CoefficientSet, PiecewiseConstantField
from .verify import (
    C_CEILING, check_gradient_bound, continuation_ratio_annulus, continuation_ratio_boundary,
    dirichlet_pointwise_check, radial_residual_min, random_problem, z_scan_elliptic, z_scan_parabolic,
)

__all__ = [
    "ConfigError", "ExperimentSpec", "Check", "Outcome", "EXPERIMENTS",
    "load_spec", "parse_spec", "run_experiment", "write_outcome", "bundled_specs", "OUTPUT_ENV",
]

OUTPUT_ENV = "LANDISLAB_OUTPUT"
CONFIG_DIR = Path(__file__).parent / "configs"

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid spec; ``where`` names the field and, when known, the line."""

    def __init__(self, field_name: str, message: str, line: Optional[int] = None):
        self.field_name, self.line = field_name, line
        loc = f"line {line}, " if line else ""
        super().__init__(f"{loc}field {field_name}: {message}")


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    seed: int
    domain: dict
    h: float
    coefficients: dict
    tol: float
    method: str
    sweep: dict
    params: dict
    output: Optional[str]
    source_text: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name, "experiment": self.kind, "seed": self.seed, "domain": self.domain,
            "h": self.h, "coefficients": self.coefficients, "tol": self.tol, "method": self.method,
            "sweep": self.sweep, "params": self.params,
        }


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Outcome:
    rows: list = field(default_factory=list)
    columns: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


# -- parsing -----------------------------------------------------------------

def _line_of(text: str, section: Optional[str], key: str) -> Optional[int]:
    lines = text.splitlines()
    in_section = section is None
    for k, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("["):
            in_section = s.strip("[] ") == section
            continue
        if in_section and re.match(rf"{re.escape(key)}\s*=", s):
            return k
    return None


def parse_spec(text: str, name: str = "spec") -> ExperimentSpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError("<syntax>", str(exc), int(m.group(1)) if m else None) from None

    def bad(section, key, msg):
        path = f"{section}.{key}" if section else key
        raise ConfigError(path, msg, _line_of(text, section, key))

    kind = data.get("experiment")
    if kind not in EXPERIMENTS:
        bad(None, "experiment", f"must be one of {sorted(EXPERIMENTS)} (got {kind!r})")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        bad(None, "seed", "must be a nonnegative integer")
    domain = dict(data.get("domain", {"kind": "interval", "a": 0.0, "b": 1.0}))
    try:
        dom = build_domain(domain)
    except (GeometryError, ValueError, TypeError, KeyError) as exc:
        bad("domain", "kind", str(exc))
    grid = data.get("grid", {})
    h = grid.get("h", 0.01)
    if not isinstance(h, (int, float)) or isinstance(h, bool) or not h > 0:
        bad("grid", "h", f"must be a positive number (got {h!r})")
    if h > dom.diameter / 4 * (1 + 1e-12):
        bad("grid", "h", f"must not exceed a quarter of the domain diameter ({dom.diameter / 4:g})")
    coeffs = dict(data.get("coefficients", {}))
    dim = 1 if domain.get("kind") == "interval" else 2
    for key, vec in (("W", True), ("V", False), ("F", False)):
        if key in coeffs:
            try:
                field_from_spec(coeffs[key], dim, vector=vec and dim > 1)
            except ExpressionError as exc:
                bad("coefficients", key, str(exc))
    solver = data.get("solver", {})
    tol = solver.get("tol", 1e-10)
    if not isinstance(tol, (int, float)) or not tol > 0:
        bad("solver", "tol", f"must be positive (got {tol!r})")
    method = solver.get("method", "auto")
    if method not in ("auto", "direct", "banded", "bicgstab"):
        bad("solver", "method", f"unknown method {method!r}")
    sweep = dict(data.get("sweep", {}))
    for key, v in sweep.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
            bad("sweep", key, f"must be a nonnegative number (got {v!r})")
    params = dict(data.get("params", {}))
    for key, v in params.items():
        if key.endswith(("tol", "dt")) and isinstance(v, (int, float)) and not v > 0:
            bad("params", key, f"must be positive (got {v!r})")
    for key in ("phi0", "exact"):
        if key in params:
            try:
                compile_expression(params[key], dim)
            except ExpressionError as exc:
                bad("params", key, str(exc))
    out = data.get("output", {}).get("dir")
    return ExperimentSpec(data.get("name", name), kind, seed, domain, float(h), coeffs, float(tol),
                          method, sweep, params, out, text)


def bundled_specs() -> dict:
    return {p.stem: p for p in sorted(CONFIG_DIR.glob("*.toml"))}


def load_spec(path_or_name) -> ExperimentSpec:
    p = Path(path_or_name)
    if not p.exists():
        named = bundled_specs().get(str(path_or_name).removesuffix(".toml"))
        if named is None:
            raise ConfigError("<file>", f"no such spec file or bundled spec: {path_or_name}")
        p = named
    return parse_spec(p.read_text(), p.stem)


# -- helpers -----------------------------------------------------------------

def _grid(spec: ExperimentSpec, h=None):
    return discretize(build_domain(spec.domain), spec.h if h is None else h)


def _coeffs(spec: ExperimentSpec, grid):
    c = spec.coefficients
    vec = grid.dim > 1
    return CoefficientSet.from_grid(
        grid,
        W=field_from_spec(c.get("W"), grid.dim, vector=vec),
        V=field_from_spec(c.get("V"), grid.dim),
        F=field_from_spec(c.get("F"), grid.dim),
    )


def _random(spec: ExperimentSpec, i: int, dim: int):
    s = spec.sweep
    return random_problem(
        spec.seed + i, K_max=s.get("K_max", 0.0), M_max=s.get("M_max", 0.0),
        f_max=s.get("f_max", 1.0), dim=dim, cell=s.get("cell", 0.1),
    )


def _map(fn: Callable, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _all(name, flags, detail=""):
    flags = list(flags)
    bad = [k for k, f in enumerate(flags) if not f]
    msg = detail or f"{len(flags) - len(bad)}/{len(flags)} passed"
    if bad:
        msg += f"; failing entries {bad[:10]}"
    return Check(name, not bad, msg)


# -- runners -----------------------------------------------------------------

def _elliptic_entry(args):
    spec, i = args
    grid = _grid(spec)
    if spec.sweep.get("count"):
        p = _random(spec, i, grid.dim)
        coeffs = CoefficientSet.from_grid(grid, W=p.W, V=p.V, F=p.F)
    else:
        coeffs = _coeffs(spec, grid)
    sol = solve_elliptic(grid, coeffs, tol=spec.tol, method=spec.method)
    rep = check_gradient_bound(sol)
    diam = grid.domain.diameter
    row = {"seed": spec.seed + i, **{k: v for k, v in rep.to_dict().items() if k != "composed_bound"}}
    out = {"row": row, "bound": rep.to_dict()}
    if coeffs.V_nonnegative:
        b = build_barrier(coeffs.K, coeffs.f, diam)
        pw = dirichlet_pointwise_check(sol, b)
        row["pointwise_violation"] = pw.max_violation
        row["pointwise_passed"] = pw.passed
        if spec.kind == "z_scan":
            z = z_scan_elliptic(sol, b, seed=spec.seed + i)
            row.update(max_Z=z.max_Z, z_tolerance=z.tolerance, z_passed=z.passed, pairs=z.pairs_scanned)
            out["z"] = z.to_dict()
            scale = spec.params.get("negative_control")
            if scale:
                nb = build_barrier(coeffs.K, coeffs.f, diam, lam=b.lam * scale)
                zn = z_scan_elliptic(sol, nb, seed=spec.seed + i)
                row.update(negative_max_Z=zn.max_Z)
                out["z_negative"] = zn.to_dict()
    return out


def run_elliptic(spec: ExperimentSpec, threads: int = 1) -> Outcome:
    n = int(spec.sweep.get("count", 0)) or 1
    res = _map(_elliptic_entry, [(spec, i) for i in range(n)], threads)
    rows = [r["row"] for r in res]
    out = Outcome(rows=rows)
    explicit = [r["bound"] for r in res if r["bound"]["path"] == "explicit"]
    fitted = [r["bound"] for r in res if r["bound"]["path"] == "fitted"]
    if explicit:
        out.checks.append(_all("explicit gradient bound, V = 0 path", (b["passed"] for b in explicit)))
    if fitted:
        out.checks.append(_all(f"effective gradient constant below {C_CEILING:g}", (b["passed"] for b in fitted)))
    pw = [r.get("pointwise_passed") for r in rows if "pointwise_passed" in r]
    if pw:
        out.checks.append(_all("pointwise Dirichlet bound by the barrier", pw))
    if spec.kind == "z_scan":
        out.checks.append(_all("two-point function nonpositive", (r["z_passed"] for r in rows)))
        if spec.params.get("negative_control"):
            out.checks.append(_all("undersized barrier detected by the scan",
                                   (r["negative_max_Z"] > 0 for r in rows)))
        out.reports["z_report"] = [r.get("z") for r in res] if n > 1 else res[0].get("z")
    if n == 1:
        out.reports["bound_report"] = {**res[0]["bound"], "pass": res[0]["bound"]["passed"]}
    else:
        out.reports["bound_report"] = {
            "count": n, "pass": all(b["passed"] for b in (explicit + fitted)),
            "violations": sum(not b["passed"] for b in explicit + fitted),
            "max_measured_over_bound": max(b["measured_sup_grad"] / b["bound"] if b["bound"] else 0.0
                                           for b in explicit + fitted),
        }
    return out


def _phi0(spec, grid, scale=1.0):
    expr = spec.params.get("phi0")
    if expr is None:
        return None
    f = compile_expression(expr, grid.dim)
    return lambda x: scale * f(x)


def _parabolic_entry(args):
    spec, i = args
    grid = _grid(spec)
    prm = spec.params
    amp = 1.0
    if spec.sweep.get("count"):
        p = _random(spec, i, grid.dim)
        coeffs = CoefficientSet.from_grid(grid, W=p.W, V=p.V, F=p.F)
        amp = float(np.random.default_rng(spec.seed + i + 10_000).uniform(0.0, spec.sweep.get("g_max", 1.0)))
    else:
        coeffs = _coeffs(spec, grid)
    T = float(prm.get("T", 1.0))
    dt = float(prm.get("dt", grid.h))
    snaps = np.linspace(0, T, int(prm.get("snapshots", 5)) + 1)[1:]
    phi0 = _phi0(spec, grid, amp)
    if coeffs.V_nonnegative:
        run = solve_parabolic(grid, coeffs, phi0, T, dt, snapshot_times=snaps)
    else:
        run = solve_shifted(grid, coeffs, phi0, T, dt, snapshot_times=snaps)
    rep = check_gradient_bound(run)
    row = {"seed": spec.seed + i, **{k: v for k, v in rep.to_dict().items() if k != "composed_bound"}}
    out = {"row": row, "bound": rep.to_dict(), "history": run.grad_history.tolist()}
    if coeffs.V_nonnegative:
        b = build_barrier(coeffs.K, coeffs.f, grid.domain.diameter, mode="parabolic", g0=run.g0)
        z = z_scan_parabolic(run, b, seed=spec.seed + i)
        pw = dirichlet_pointwise_check(run, b)
        row.update(max_Z=max(z.max_Z), z_passed=z.passed, pointwise_violation=pw.max_violation,
                   pointwise_passed=pw.passed)
    exact = prm.get("exact")
    if exact:
        f = compile_expression(exact, grid.dim)
        row["max_error"] = float(np.abs(run.phi - f(grid.points)).max())
    return out


def run_parabolic(spec: ExperimentSpec, threads: int = 1) -> Outcome:
    n = int(spec.sweep.get("count", 0)) or 1
    res = _map(_parabolic_entry, [(spec, i) for i in range(n)], threads)
    rows = [r["row"] for r in res]
    out = Outcome(rows=rows)
    explicit = [r["bound"] for r in res if r["bound"]["path"] == "explicit"]
    fitted = [r["bound"] for r in res if r["bound"]["path"] == "fitted"]
    if explicit:
        out.checks.append(_all("explicit evolution gradient bound, V = 0 path", (b["passed"] for b in explicit)))
    if fitted:
        out.checks.append(_all(f"effective evolution constant below {C_CEILING:g}", (b["passed"] for b in fitted)))
    if any("z_passed" in r for r in rows):
        out.checks.append(_all("two-point function with epsilon nonpositive on snapshots",
                               (r["z_passed"] for r in rows if "z_passed" in r)))
        out.checks.append(_all("pointwise Dirichlet bound on snapshots",
                               (r["pointwise_passed"] for r in rows if "pointwise_passed" in r)))
    tol = spec.params.get("error_tol")
    if tol is not None:
        out.checks.append(_all(f"closed-form error below {tol:g}", (r["max_error"] < tol for r in rows)))
    out.tables["grad_history"] = (["t", "sup_grad"], [{"t": t, "sup_grad": g} for t, g in res[0]["history"]])
    out.reports["bound_report"] = {"entries": [r["bound"] for r in res], "pass": out.passed}
    tind = spec.params.get("T_compare")
    if tind:
        out.checks.append(_t_independence(spec, tind))
    return out


def _t_independence(spec, times):
    grid = _grid(spec)
    coeffs = _coeffs(spec, grid)
    dt = float(spec.params.get("dt", grid.h))
    m = [solve_parabolic(grid, coeffs, _phi0(spec, grid), float(T), dt).sup_grad for T in times]
    growth = max(m) - m[0]
    return Check("sup-in-time gradient independent of the final time", bool(growth < 1e-8),
                 f"max over T={times}: {m}")


def _multiplier_entry(args):
    spec, i = args
    prm = spec.params
    R = float(prm.get("R", 1.0))
    p = _random(spec, i, 2)
    m = build_multiplier(R, W=p.W, V=p.V, h=spec.h, tol=spec.tol)
    c = verify_log_grad_bound(m)
    env = m.envelope_violation()
    return {"seed": spec.seed + i, "K": m.K, "M": m.M, "c_eff": c, "envelope_violation": env,
            "envelope_passed": bool(env <= prm.get("envelope_tol", 1e-7)), "c_passed": bool(c <= C_CEILING)}


def run_multiplier(spec: ExperimentSpec, threads: int = 1) -> Outcome:
    n = int(spec.sweep.get("count", 1))
    rows = _map(_multiplier_entry, [(spec, i) for i in range(n)], threads)
    out = Outcome(rows=rows)
    out.checks.append(_all("multiplier between its sub- and supersolution", (r["envelope_passed"] for r in rows)))
    out.checks.append(_all(f"log-gradient constant below {C_CEILING:g}", (r["c_passed"] for r in rows)))
    M = spec.params.get("exact_M")
    if M:
        m = build_multiplier(float(spec.params.get("R", 1.0)), W=0.0, V=float(M), h=spec.h,
                             extension="none", tol=spec.tol)
        c = verify_log_grad_bound(m)
        out.checks.append(Check("exact exponential multiplier recovered", abs(c - 1) <= 2e-2, f"c_eff={c!r}"))
        out.reports["exact_case"] = {"M": float(M), "c_eff": c, "envelope_violation": m.envelope_violation()}
    out.reports["multiplier_report"] = {"count": n, "max_c_eff": max(r["c_eff"] for r in rows), "pass": out.passed}
    return out


def _gronwall_entry(args):
    spec, i = args
    rng = np.random.default_rng(spec.seed + i)
    bound = float(spec.sweep.get("coef_max", 5.0))
    R = float(rng.uniform(0.1, spec.sweep.get("R_max", 3.0)))
    cell = spec.sweep.get("cell", 0.1)
    Wf = PiecewiseConstantField(spec.seed + 2 * i + 1, -bound, bound, cell=cell, dim=1)
    Vf = PiecewiseConstantField(spec.seed + 2 * i + 2, -bound, bound, cell=cell, dim=1)
    sgn = PiecewiseConstantField(spec.seed + 2 * i + 3, -1.0, 1.0, cell=cell, dim=1)
    sysm = FirstOrderSystem(R, lambda x: Wf(x[:, None]), lambda x: Vf(x[:, None]),
                            lambda x: np.sign(sgn(x[:, None])))
    traj = integrate_adjoint(sysm, float(spec.params.get("h", spec.h)))
    g = check_gronwall_envelope(traj)
    return {"seed": spec.seed + i, "R": R, "C": g.C, "max_ratio": g.max_ratio, "holds": g.holds}


def run_landis1d(spec: ExperimentSpec, threads: int = 1) -> Outcome:
    prm = spec.params
    h = float(prm.get("h", spec.h))
    R = float(prm.get("R", 2.0))
    out = Outcome()
    rows = []
    for drift in prm.get("drifts", [0.0]):
        rel, lhs, rhs = check_duality_identity(gaussian_solution(R, drift), h)
        rows.append({"R": R, "drift": float(drift), "h": h, "integral": lhs, "boundary_sum": rhs,
                     "relative_residual": rel})
    out.rows = rows
    tol = float(prm.get("identity_tol", 1e-6))
    out.checks.append(_all(f"duality identity residual below {tol:g}", (r["relative_residual"] < tol for r in rows)))
    n = int(spec.sweep.get("count", 0))
    if n:
        g = _map(_gronwall_entry, [(spec, i) for i in range(n)], threads)
        out.tables["gronwall"] = (list(g[0]), g)
        out.checks.append(_all("Gronwall envelope for the adjoint system", (r["holds"] for r in g)))
    radii = prm.get("radii")
    if radii:
        demo = decay_demo(radii, h)
        out.tables["decay"] = (list(demo[0]), demo)
        out.checks.append(_all("derivative below the decay envelope",
                               (r["du_at_R"] <= r["decay_envelope"] for r in demo)))
    out.reports["landis1d_report"] = {"identity": rows, "pass": out.passed}
    return out


def _continuation_entry(args):
    spec, i = args
    prm = spec.params
    R = float(prm.get("R", 1.0))
    p = _random(spec, i, 2)
    row = {"seed": spec.seed + i}
    if prm.get("mode", "both") in ("annulus", "both"):
        a = continuation_ratio_annulus(R, p.W, p.V, 1.0, spec.h, spec.tol)
        row.update(K=a.K, M=a.M, annulus_ratio=a.ratio, annulus_c_req=a.c_req, annulus_passed=a.passed)
    if prm.get("mode", "both") in ("boundary", "both"):
        b = continuation_ratio_boundary(R, p.W, p.V, 1.0, spec.h, spec.tol)
        row.update(K=b.K, M=b.M, boundary_ratio=b.ratio, boundary_c_req=b.c_req,
                   normal_derivative_max=b.normal_derivative_max,
                   normal_derivative_bound=b.normal_derivative_bound,
                   normal_derivative_violations=b.normal_derivative_violations, boundary_passed=b.passed)
    return row


def run_continuation(spec: ExperimentSpec, threads: int = 1) -> Outcome:
    n = int(spec.sweep.get("count", 1))
    rows = _map(_continuation_entry, [(spec, i) for i in range(n)], threads)
    out = Outcome(rows=rows)
    if "annulus_passed" in rows[0]:
        out.checks.append(_all("annulus mass constant below ceiling", (r["annulus_passed"] for r in rows)))
    if "boundary_passed" in rows[0]:
        out.checks.append(_all("sphere mass constant and dual normal derivative bound",
                               (r["boundary_passed"] for r in rows)))
    R = float(spec.params.get("R", 1.0))
    K_max = float(spec.sweep.get("K_max", 0.0))
    rmin = radial_residual_min(K_max, R)
    out.checks.append(Check("radial supersolution residual at least one", rmin >= 1 - 1e-9, f"min={rmin!r}"))
    out.reports["continuation_report"] = {"count": n, "pass": out.passed}
    return out


def run_convergence(spec: ExperimentSpec, threads: int = 1) -> Outcome:
    prm = spec.params
    exact = compile_expression(prm["exact"], 1 if spec.domain.get("kind") == "interval" else 2)
    hs = [float(h) for h in prm.get("hs", [spec.h, spec.h / 2, spec.h / 4])]
    metric = prm.get("metric", "nodes")
    rows, errs = [], []
    for h in hs:
        grid = _grid(spec, h)
        sol = solve_elliptic(grid, _coeffs(spec, grid), tol=spec.tol, method=spec.method)
        err = _error(grid, sol.phi, exact, metric)
        errs.append(err)
        rows.append({"h": h, "n": grid.n, "error": err, "sup_grad": sol.sup_grad})
    for k in range(1, len(rows)):
        rows[k]["ratio"] = errs[k - 1] / errs[k] if errs[k] > 0 else math.inf
    rows[0]["ratio"] = float("nan")
    out = Outcome(rows=rows)
    lo, hi = prm.get("ratio_range", [3.5, 4.5])
    out.checks.append(_all(f"error ratio under halving in [{lo}, {hi}]",
                           (lo <= r["ratio"] <= hi for r in rows[1:])))
    if "error_tol" in prm:
        out.checks.append(Check(f"finest error below {prm['error_tol']:g}", errs[-1] < prm["error_tol"],
                                f"error={errs[-1]!r}"))
    out.reports["convergence_report"] = {"errors": errs, "hs": hs, "pass": out.passed}
    return out


def _error(grid, phi, exact, metric):
    if metric == "nodes":
        return float(np.abs(phi - exact(grid.points)).max())
    if metric == "midpoints" and grid.dim == 1:
        x = grid.points[:, 0]
        xm = 0.5 * (x[1:] + x[:-1])
        um = 0.5 * (phi[1:] + phi[:-1])
        return float(np.abs(um - exact(xm[:, None])).max())
    raise ConfigError("params.metric", f"unsupported metric {metric!r} for this domain")


EXPERIMENTS = {
    "elliptic_bound": (run_elliptic, "stationary gradient bound (explicit for V = 0, fitted otherwise)"),
    "z_scan": (run_elliptic, "two-point function scan with optional undersized-barrier control"),
    "parabolic_bound": (run_parabolic, "evolution gradient bound, snapshot scans, final-time independence"),
    "multiplier": (run_multiplier, "positive multiplier envelope and log-gradient constant"),
    "landis1d": (run_landis1d, "1D duality identity, Gronwall envelope and decay table"),
    "continuation": (run_continuation, "mass ratios on balls and the dual normal-derivative bound"),
    "convergence_study": (run_convergence, "grid refinement against a closed-form solution"),
}


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> Outcome:
    try:
        return EXPERIMENTS[spec.kind][0](spec, threads)
    except (ExpressionError, GeometryError) as exc:
        raise ConfigError(spec.kind, str(exc)) from None


# -- output ------------------------------------------------------------------

def _cell(v):
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, columns, rows):
    cols = list(columns)
    if not cols:
        for r in rows:
            cols.extend(k for k in r if k not in cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(k, "")) for k in cols])


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def output_dir(spec: ExperimentSpec, root=None) -> Path:
    if spec.output:
        return Path(spec.output)
    base = Path(root or os.environ.get(OUTPUT_ENV, "landislab_output"))
    return base / spec.name


def write_outcome(spec: ExperimentSpec, outcome: Outcome, directory) -> list:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    _write_csv(d / "sweep.csv", outcome.columns, outcome.rows)
    written.append("sweep.csv")
    for name, (cols, rows) in outcome.tables.items():
        _write_csv(d / f"{name}.csv", cols, rows)
        written.append(f"{name}.csv")
    for name, rep in outcome.reports.items():
        with open(d / f"{name}.json", "w") as fh:
            json.dump(rep, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        written.append(f"{name}.json")
    summary = {
        "experiment": spec.kind, "name": spec.name, "seed": spec.seed, "pass": outcome.passed,
        "checks": [{"name": c.name, "passed": bool(c.passed), "detail": c.detail} for c in outcome.checks],
    }
    with open(d / "report.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    written.append("report.json")
    digest = hashlib.sha256(spec.source_text.encode()).hexdigest()
    with open(d / "MANIFEST", "w") as fh:
        fh.write(f"tool landislab {__version__}\n")
        fh.write(f"spec {spec.name} sha256 {digest}\n")
        fh.write(f"experiment {spec.kind}\n")
        fh.write(f"seed {spec.seed}\n")
        fh.write(f"h {spec.h!r}\n")
        for w in written:
            fh.write(f"file {w}\n")
    return written + ["MANIFEST"]
