"""Checks that certify bounds on computed solutions.

* two-point scans of ``Z(x, y) = phi(y) - phi(x) - 2 b(|y - x| / 2)``;
* gradient bounds, explicit when ``V = 0`` and through a fitted constant
  otherwise;
* pointwise Dirichlet bound ``|phi(x)| <= b(d(x))``;
* unique-continuation mass ratios on balls.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy.spatial import cKDTree

from .barrier import Barrier, build_barrier, build_radial_supersolution
from .elliptic import EllipticSolution, solve_elliptic
from .geometry import Grid, build_domain, discretize
from .multiplier import MultiplierResult, reduce_to_zero_potential
from .parabolic import ParabolicRun
from .pde_core import DEFAULT_TOL, CoefficientSet, PiecewiseConstantField, assemble, grad_norm, gradient, sample, solve

__all__ = [
    "ZScanReport",
    "BoundReport",
    "ContinuationReport",
    "z_scan_elliptic",
    "z_scan_parabolic",
    "check_gradient_bound",
    "composed_bound",
    "dirichlet_pointwise_check",
    "continuation_ratio_annulus",
    "continuation_ratio_boundary",
    "radial_residual_min",
    "disk_cell_areas",
    "random_problem",
    "FULL_SCAN_LIMIT",
    "RANDOM_PAIRS",
    "C_CEILING",
]

FULL_SCAN_LIMIT = 10_000_000
RANDOM_PAIRS = 5_000_000
NEAR_DIAGONAL = 4.0
C_CEILING = 10.0


class _Report:
    """JSON document and one-line CSV row."""

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def csv_header(self) -> list:
        return [k for k, v in self.to_dict().items() if not isinstance(v, (dict, list))]

    def csv_row(self) -> str:
        d = self.to_dict()
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow([_fmt(d[k]) for k in self.csv_header()])
        return buf.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


# -- two-point scans ---------------------------------------------------------

@numba.njit(cache=True)
def _b(s, amp, a, f2):
    return amp * (-math.expm1(-a * s)) / a - f2 * s / a


@numba.njit(cache=True)
def _scan_rows(P, u, rows, upper, amp, a, f2, c0, best):
    """Max of ``|u_j - u_i| - 2 b(|x_j - x_i| / 2)`` for ``i`` in rows and all
    ``j`` (``j > i`` when ``upper``), starting from ``best``.

    Pairs with ``|u_j - u_i| - c0 |x_j - x_i| <= best`` cannot raise the max
    when ``c0 d`` is a lower bound for ``2 b(d / 2)``; the barrier is only
    evaluated for the rest.
    """
    n, N = P.shape
    bi, bj = -1, -1
    count = 0
    for r in range(rows.size):
        i = rows[r]
        start = i + 1 if upper else 0
        for j in range(start, n):
            if j == i:
                continue
            d2 = 0.0
            for k in range(N):
                t = P[j, k] - P[i, k]
                d2 += t * t
            count += 1
            d = math.sqrt(d2)
            du = abs(u[j] - u[i])
            if du - c0 * d <= best:
                continue
            z = du - 2.0 * _b(0.5 * d, amp, a, f2)
            if z > best:
                best, bi, bj = z, i, j
    return best, bi, bj, count


@numba.njit(cache=True)
def _scan_pairs(P, u, I, J, amp, a, f2, c0, best):
    N = P.shape[1]
    bi, bj = -1, -1
    for p in range(I.size):
        i, j = I[p], J[p]
        d2 = 0.0
        for k in range(N):
            t = P[j, k] - P[i, k]
            d2 += t * t
        d = math.sqrt(d2)
        du = abs(u[j] - u[i])
        if du - c0 * d <= best:
            continue
        z = du - 2.0 * _b(0.5 * d, amp, a, f2)
        if z > best:
            best, bi, bj = z, i, j
    return best, bi, bj


@dataclass
class ZScanReport(_Report):
    max_Z: float
    x_star: list
    y_star: list
    pairs_scanned: int
    tolerance: float
    passed: bool
    mode: str
    strata: dict = field(default_factory=dict)
    barrier: dict = field(default_factory=dict)


def _orient(u, i, j):
    # Z(x, y) uses phi(y) - phi(x); report the orientation realising the max
    return (i, j) if u[j] >= u[i] else (j, i)


def _chord_slope(grid: Grid, barrier: Barrier) -> float:
    """``c0`` with ``2 b(d/2) >= c0 d`` for every node distance ``d``.

    For a concave barrier with ``b(0) = 0`` the chord ``b(S)/S`` lies below
    the graph on ``[0, S]``; ``S`` is half the bounding-box diagonal. No
    pruning for a convex (undersized, negative-slope) barrier.
    """
    if barrier.amplitude <= 0:
        return -np.inf
    ext = grid.points.max(axis=0) - grid.points.min(axis=0)
    S = 0.5 * float(np.sqrt((ext ** 2).sum())) * (1 + 1e-12)
    if S == 0:
        return -np.inf
    # shrink slightly so roundoff in b never makes the bound invalid
    c = float(barrier(S)) / S
    return c - 1e-12 * (abs(c) + 1.0)


def _scan(grid: Grid, u, barrier: Barrier, seed: int = 0, full_limit: int = FULL_SCAN_LIMIT,
          random_pairs: int = RANDOM_PAIRS):
    P = np.ascontiguousarray(grid.points, dtype=float)
    u = np.ascontiguousarray(u, dtype=float)
    n = len(u)
    amp, a, f2 = barrier.amplitude, barrier.a, 2.0 * barrier.f
    c0 = _chord_slope(grid, barrier)
    if n * (n - 1) // 2 <= full_limit:
        z, i, j, cnt = _scan_rows(P, u, np.arange(n), True, amp, a, f2, c0, -np.inf)
        return z, i, j, int(cnt), "full", {"all": int(cnt)}
    strata = {}
    best = (-np.inf, -1, -1)

    def keep(res):
        nonlocal best
        if res[1] >= 0 and res[0] > best[0]:
            best = (res[0], res[1], res[2])

    # near-diagonal first: it gives a tight starting max for the pruned strata
    pairs = cKDTree(P).query_pairs(NEAR_DIAGONAL * grid.h, output_type="ndarray")
    if len(pairs):
        keep(_scan_pairs(P, u, pairs[:, 0].copy(), pairs[:, 1].copy(), amp, a, f2, c0, best[0]))
    strata["near_diagonal"] = int(len(pairs))
    rows = np.flatnonzero(grid.is_boundary)
    res = _scan_rows(P, u, rows, False, amp, a, f2, c0, best[0])
    keep(res[:3])
    strata["boundary_x_all"] = int(res[3])
    rng = np.random.default_rng(seed)
    I = rng.integers(0, n, random_pairs)
    J = rng.integers(0, n, random_pairs)
    ok = I != J
    keep(_scan_pairs(P, u, I[ok], J[ok], amp, a, f2, c0, best[0]))
    strata["random"] = int(ok.sum())
    return best[0], best[1], best[2], int(sum(strata.values())), "stratified", strata


def z_scan_elliptic(sol, barrier: Barrier, seed: int = 0, tol: Optional[float] = None,
                    full_limit: int = FULL_SCAN_LIMIT, random_pairs: int = RANDOM_PAIRS) -> ZScanReport:
    """Maximum of ``Z`` over node pairs.

    All pairs are scanned when there are at most ``full_limit`` of them.
    Otherwise every boundary-by-any pair and every pair closer than
    ``4 h`` is scanned, plus ``random_pairs`` seeded random pairs.
    ``sol`` is an :class:`EllipticSolution` or a ``(grid, phi)`` pair.
    """
    grid, phi = (sol.grid, sol.phi) if isinstance(sol, EllipticSolution) else sol
    z, i, j, cnt, mode, strata = _scan(grid, phi, barrier, seed, full_limit, random_pairs)
    tol = 1e-8 * (barrier.lam + barrier.f) if tol is None else tol
    if i < 0:
        x, y = [], []
    else:
        i, j = _orient(phi, i, j)
        x, y = grid.points[i].tolist(), grid.points[j].tolist()
    return ZScanReport(float(z), x, y, cnt, float(tol), bool(z <= tol), mode, strata,
                       barrier.to_dict())


@dataclass
class ParabolicZReport(_Report):
    times: list
    max_Z: list
    passed: bool
    first_violation: Optional[float]
    epsilon: float
    tolerance: float
    barrier: dict = field(default_factory=dict)


def z_scan_parabolic(run: ParabolicRun, barrier: Barrier, epsilon: Optional[float] = None,
                     seed: int = 0, tol: Optional[float] = None) -> ParabolicZReport:
    """``Z_eps = Z - eps e^t`` on every recorded snapshot."""
    if epsilon is None:
        epsilon = 1e-6 * (barrier.g0 + barrier.f + 1.0)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    tol = 1e-8 * (barrier.lam + barrier.f) if tol is None else tol
    zs = []
    first = None
    for t, u in zip(run.snapshot_times, run.snapshots):
        z = _scan(run.grid, u, barrier, seed)[0] - epsilon * math.exp(t)
        zs.append(float(z))
        if first is None and z > tol:
            first = float(t)
    return ParabolicZReport(list(map(float, run.snapshot_times)), zs, first is None, first,
                            float(epsilon), float(tol), barrier.to_dict())


# -- gradient bounds ---------------------------------------------------------

@dataclass
class BoundReport(_Report):
    measured_sup_grad: float
    bound: float
    path: str
    c_eff: float
    passed: bool
    K: float
    M: float
    f: float
    diam: float
    g0: float = 0.0
    T: float = 0.0
    composed_bound: Optional[float] = None


def composed_bound(grid: Grid, coeffs: CoefficientSet, multiplier: MultiplierResult):
    """Constructive bound on ``|grad phi|`` through the potential-free problem.

    ``|grad phi| <= max psi (max |phi_hat| max |grad log psi| + lam_hat)``
    where ``lam_hat`` is the barrier slope for the transformed drift and
    source. Returns ``(bound, phi, grad_phi)``.
    """
    red = reduce_to_zero_potential(grid, coeffs, multiplier)
    s = solve_elliptic(grid, red.coeffs)
    phi, g = red.back_map(s.phi)
    lam_hat = build_barrier(red.coeffs.K, red.coeffs.f, grid.domain.diameter).lam
    lg = float(np.nanmax(grad_norm(red.log_grad)))
    bound = float(red.psi.max() * (np.abs(s.phi).max() * lg + lam_hat))
    return bound, phi, g


def check_gradient_bound(sol, coeffs: Optional[CoefficientSet] = None, diam: Optional[float] = None,
                         multiplier: Optional[MultiplierResult] = None,
                         ceiling: float = C_CEILING) -> BoundReport:
    """Compare the measured gradient with the stationary or evolution bound.

    With ``V = 0`` the bound is the barrier slope and the check is literal.
    Otherwise the report carries the effective constant
    ``log(measured / f_eff) / ((1 + K + sqrt M) diam)`` (plus ``T M`` in the
    denominator for evolution runs) and passes when it is below ``ceiling``;
    when a multiplier is supplied the composed constructive bound is also
    required to dominate.
    """
    coeffs = sol.coeffs if coeffs is None else coeffs
    diam = sol.grid.domain.diameter if diam is None else float(diam)
    K, M, f = coeffs.K, coeffs.M, coeffs.f
    if isinstance(sol, ParabolicRun):
        measured, g0, T = sol.sup_grad, sol.g0, sol.T
        mode = "parabolic"
    else:
        measured, g0, T = float(sol.sup_grad), 0.0, 0.0
        mode = "elliptic"
    f_eff = f + g0
    if M == 0:
        b = build_barrier(K, f, diam, mode=mode, g0=g0)
        bound = b.lam
        ok = measured <= bound * (1 + 1e-9)
        c = _c_eff(measured, f_eff, (1 + K) * diam)
        return BoundReport(measured, bound, "explicit", c, bool(ok), K, M, f, diam, g0, T)
    denom = T * M + (1 + K + math.sqrt(M)) * diam
    c = _c_eff(measured, f_eff, denom)
    ok = c <= ceiling
    comp = None
    if multiplier is not None and mode == "elliptic":
        comp = composed_bound(sol.grid, coeffs, multiplier)[0]
        ok = ok and measured <= comp * (1 + 1e-9)
    bound = math.exp(c * denom) * f_eff if f_eff > 0 else 0.0
    return BoundReport(measured, bound, "fitted", c, bool(ok), K, M, f, diam, g0, T, comp)


def _c_eff(measured, f_eff, denom):
    if measured <= 0 or f_eff <= 0 or denom <= 0:
        return 0.0
    return max(0.0, math.log(measured / f_eff) / denom)


@dataclass
class PointwiseReport(_Report):
    max_violation: float
    tolerance: float
    passed: bool


def dirichlet_pointwise_check(sol, barrier: Barrier) -> PointwiseReport:
    """``max |phi(x)| - b(d(x))`` over nodes (over snapshots for evolution runs)."""
    if isinstance(sol, ParabolicRun):
        grid, fields = sol.grid, sol.snapshots
    elif isinstance(sol, EllipticSolution):
        grid, fields = sol.grid, [sol.phi]
    else:
        grid, phi = sol
        fields = [phi]
    bd = barrier(grid.distance_to_boundary())
    v = max(float((np.abs(u) - bd).max()) for u in fields)
    tol = 1e-8 * barrier.lam
    return PointwiseReport(v, tol, bool(v <= tol))


# -- unique continuation -----------------------------------------------------

def _quarter_area(x, y, r):
    """Area of ``{s <= x, t <= y}`` inside the disk of radius ``r`` at the origin."""
    x = np.clip(np.asarray(x, float), -r, r)
    y = np.asarray(y, float)

    def G(s):
        s = np.clip(s, -r, r)
        return 0.5 * (s * np.sqrt(np.maximum(r * r - s * s, 0.0)) + r * r * np.arcsin(s / r))

    yc = np.clip(y, -r, r)
    sy = np.sqrt(np.maximum(r * r - yc * yc, 0.0))
    # |s| < sy: integrand y + c(s)
    lo, hi = -sy, np.minimum(x, sy)
    part = np.where(hi > lo, yc * (hi - lo) + G(hi) - G(lo), 0.0)
    # |s| >= sy with y >= 0: integrand 2 c(s)
    pos = yc >= 0
    left = 2 * (G(np.minimum(x, -sy)) - G(-r))
    right = np.where(x > sy, 2 * (G(x) - G(sy)), 0.0)
    part = part + np.where(pos, left + right, 0.0)
    return np.where(y <= -r, 0.0, part)


def disk_cell_areas(centers, h, r, c=(0.0, 0.0)):
    """Exact areas of the squares ``center +- h/2`` inside the disk ``|x - c| <= r``."""
    P = np.asarray(centers, float) - np.asarray(c, float)
    x0, x1 = P[:, 0] - h / 2, P[:, 0] + h / 2
    y0, y1 = P[:, 1] - h / 2, P[:, 1] + h / 2
    A = _quarter_area(x1, y1, r) - _quarter_area(x0, y1, r) - _quarter_area(x1, y0, r) + _quarter_area(x0, y0, r)
    return np.clip(A, 0.0, h * h)


@dataclass
class ContinuationReport(_Report):
    kind: str
    R: float
    inner: float
    outer: float
    c_req: float
    passed: bool
    K: float
    M: float
    normal_derivative_max: Optional[float] = None
    normal_derivative_bound: Optional[float] = None
    normal_derivative_violations: int = 0
    ratio: float = 0.0


def _adjoint_ball_solve(radius, W, V, g, h, tol):
    dom = build_domain({"kind": "disk", "center": [0.0, 0.0], "radius": radius})
    grid = discretize(dom, h)
    coeffs = CoefficientSet.from_grid(grid, W=W, V=V)
    if not coeffs.V_nonnegative:
        raise ValueError("continuation checks need V >= 0")
    op = assemble(grid, coeffs, bc="dirichlet", form="adjoint")
    rhs = np.where(grid.is_boundary, sample(grid, g), 0.0)
    u = solve(op, rhs, tol=tol).x
    return grid, coeffs, u


def _cell_values(grid: Grid, u, pad: int = 1):
    """Lattice cell centres covering the domain and the value attached to each.

    Cells of nodes inside the domain carry the node value; cells centred
    outside take the value of the nearest node.
    """
    lat = grid.lattice[grid.on_lattice]
    lo, hi = lat.min(axis=0) - pad, lat.max(axis=0) + pad
    ij = np.stack(np.meshgrid(*[np.arange(l, m + 1) for l, m in zip(lo, hi)], indexing="ij"), -1).reshape(-1, 2)
    centers = grid.origin + grid.h * ij
    # a lattice node is its own nearest node, so this also covers interior cells
    _, near = cKDTree(grid.points).query(centers)
    return centers, np.asarray(u)[near]


def continuation_ratio_annulus(R: float, W=None, V=None, g=1.0, h: float = 0.01,
                               tol: float = DEFAULT_TOL, ceiling: float = C_CEILING) -> ContinuationReport:
    """Mass of ``u`` on ``|x| < R`` against the annulus ``R < |x| < 2R``.

    ``u`` solves ``-Lap u - div(W u) + V u = 0`` on ``B(0, 2R)`` with ``u = g``
    on the boundary. Integrals use node cells with exact disk cut areas.
    """
    grid, coeffs, u = _adjoint_ball_solve(2 * R, W, V, g, h, tol)
    centers, vals = _cell_values(grid, np.abs(u))
    a_in = disk_cell_areas(centers, h, R)
    a_all = disk_cell_areas(centers, h, 2 * R)
    inner = float((vals * a_in).sum())
    outer = float((vals * (a_all - a_in)).sum())
    K, M = coeffs.K, coeffs.M
    c = math.log(inner / outer) / ((1 + K + math.sqrt(M)) * R) if outer > 0 else math.inf
    if outer <= 0:
        raise ArithmeticError("solution vanishes on the annulus; solver failure")
    return ContinuationReport("annulus", float(R), inner, outer, c, bool(c <= ceiling), K, M, ratio=inner / outer)


def continuation_ratio_boundary(R: float, W=None, V=None, g=1.0, h: float = 0.01,
                                tol: float = DEFAULT_TOL, ceiling: float = C_CEILING) -> ContinuationReport:
    """Mass of ``u`` on ``B(0, R)`` against its boundary integral.

    Also solves the dual problem ``-Lap phi + W.grad phi + V phi = sign(u)``
    with ``phi = 0`` on the sphere and checks ``|d_nu phi| <= e^{(K+1) R}``
    at every boundary node where the normal derivative can be formed.
    """
    grid, coeffs, u = _adjoint_ball_solve(R, W, V, g, h, tol)
    centers, vals = _cell_values(grid, np.abs(u))
    inner = float((vals * disk_cell_areas(centers, h, R)).sum())
    bnd = np.flatnonzero(grid.is_boundary)
    th = np.arctan2(grid.points[bnd, 1], grid.points[bnd, 0])
    order = np.argsort(th)
    th, ub = th[order], np.abs(u[bnd][order])
    dth = np.diff(np.concatenate([th, [th[0] + 2 * np.pi]]))
    outer = float(R * 0.5 * (dth * (ub + np.roll(ub, -1))).sum())

    K, M = coeffs.K, coeffs.M
    dual = solve_elliptic(grid, coeffs.with_(F=np.sign(u)), tol=tol)
    dn = (dual.grad_phi[bnd] * grid.normals[bnd]).sum(axis=1)
    dn = dn[np.isfinite(dn)]
    bound = math.exp((K + 1) * R)
    viol = int((np.abs(dn) > bound).sum())
    c = math.log(inner / outer) / ((1 + K) * R)
    return ContinuationReport(
        "boundary", float(R), inner, outer, c, bool(c <= ceiling and viol == 0), K, M,
        float(np.abs(dn).max(initial=0.0)), bound, viol, inner / outer,
    )


def radial_residual_min(K: float, R: float, N: int = 2, samples: int = 10_000) -> float:
    """Smallest residual of the radial supersolution on ``(0, R]`` for the worst drift."""
    rs = build_radial_supersolution(K, R, N)
    r = np.linspace(R / samples, R, samples)
    return float(rs.residual(r).min())


# -- random problems ---------------------------------------------------------

@dataclass(frozen=True)
class RandomProblem:
    seed: int
    K: float
    M: float
    f: float
    W: PiecewiseConstantField
    V: Optional[PiecewiseConstantField]
    F: PiecewiseConstantField


def random_problem(seed: int, K_max: float = 3.0, M_max: float = 0.0, f_max: float = 2.0,
                   dim: int = 2, cell: float = 0.1) -> RandomProblem:
    """Seeded piecewise-constant coefficients.

    Target bounds ``K``, ``M``, ``f`` are drawn uniformly from ``[0, max]``.
    Each drift component is uniform in ``[-K/sqrt(dim), K/sqrt(dim)]`` (so
    ``|W| <= K``), ``V`` is uniform in ``[0, M]`` and ``F`` in ``[-f, f]``.
    """
    rng = np.random.default_rng(seed)
    K, M, f = (float(rng.uniform(0, m)) if m > 0 else 0.0 for m in (K_max, M_max, f_max))
    wk = K / math.sqrt(dim)
    W = PiecewiseConstantField(seed * 3 + 1, -wk, wk, cell=cell, dim=dim, components=dim)
    V = PiecewiseConstantField(seed * 3 + 2, 0.0, M, cell=cell, dim=dim) if M > 0 else None
    F = PiecewiseConstantField(seed * 3 + 3, -f, f, cell=cell, dim=dim)
    return RandomProblem(seed, K, M, f, W, V, F)
