"""Finite-difference assembly of ``-Lap u + W.grad u + V u`` and linear solvers.

Interior rows use the (Shortley-Weller) three-point second difference along
each axis. Advection is centered unless the cell Peclet number ``K h``
exceeds 2, in which case first-order upwinding keeps the matrix an M-matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .geometry import Grid

log = logging.getLogger(__name__)

FieldSpec = Union[None, float, np.ndarray, Callable]

DEFAULT_TOL = 1e-10
DENSE_LIMIT = 2000


class SolverError(RuntimeError):
    """Raised when a linear solve misses its residual target."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


def sample(grid_or_points, spec: FieldSpec, components: int = 1) -> np.ndarray:
    """Sample a field specification at nodes.

    ``spec`` may be None (zero), a scalar or vector constant, an array with
    one row per node, or a callable taking an ``(n, N)`` point array.
    """
    pts = grid_or_points.points if isinstance(grid_or_points, Grid) else np.asarray(grid_or_points)
    n = len(pts)
    shape = (n,) if components == 1 else (n, components)
    if spec is None:
        return np.zeros(shape)
    if callable(spec):
        out = np.asarray(spec(pts), dtype=float)
    else:
        out = np.asarray(spec, dtype=float)
    return np.array(np.broadcast_to(out, shape), dtype=float)


class PiecewiseConstantField:
    """Seeded random field, constant on square cells of side ``cell``.

    Values are uniform in ``[low, high]`` per component and are tabulated on a
    fixed box ``[-extent, extent]^N`` so that the field does not depend on
    which points it is evaluated at.
    """

    def __init__(self, seed, low, high, cell=0.1, dim=2, components=1, extent=4.0):
        self.seed, self.low, self.high = seed, float(low), float(high)
        self.cell, self.dim, self.components = float(cell), dim, components
        self.extent = float(extent)
        m = int(np.ceil(2 * extent / cell))
        rng = np.random.default_rng(seed)
        self.table = rng.uniform(low, high, size=(m,) * dim + (components,))

    def __call__(self, x):
        x = np.atleast_2d(x)
        m = self.table.shape[0]
        k = np.clip(np.floor((x + self.extent) / self.cell).astype(int), 0, m - 1)
        vals = self.table[tuple(k[:, d] for d in range(self.dim))]
        return vals[:, 0] if self.components == 1 else vals


@dataclass
class CoefficientSet:
    """Node samples of the drift ``W``, potential ``V`` and source ``F``."""

    W: np.ndarray
    V: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, float))
        if self.W.shape[0] == 1 and len(self.V) != 1:
            self.W = self.W.T
        self.V = np.asarray(self.V, float)
        self.F = np.asarray(self.F, float)
        if not (len(self.W) == len(self.V) == len(self.F)):
            raise ValueError("W, V and F must have one sample per node")
        for name in ("W", "V", "F"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite samples")

    @classmethod
    def from_grid(cls, grid: Grid, W: FieldSpec = None, V: FieldSpec = None, F: FieldSpec = None):
        return cls(sample(grid, W, grid.dim), sample(grid, V), sample(grid, F))

    @property
    def K(self) -> float:
        return float(np.sqrt((self.W ** 2).sum(axis=1)).max(initial=0.0))

    @property
    def M(self) -> float:
        return float(np.abs(self.V).max(initial=0.0))

    @property
    def f(self) -> float:
        return float(np.abs(self.F).max(initial=0.0))

    @property
    def V_nonnegative(self) -> bool:
        return bool(np.all(self.V >= 0))

    def with_(self, **changes) -> "CoefficientSet":
        d = {"W": self.W, "V": self.V, "F": self.F}
        d.update(changes)
        return CoefficientSet(**d)


@dataclass
class SparseOperator:
    """Assembled system matrix (CSR) together with its boundary condition."""

    matrix: sp.csr_matrix
    bc: str
    grid: Grid
    scheme: str
    singular: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, x):
        return self.matrix @ x


def _centered_weights(hm, hp):
    # first derivative at 0 from samples at -hm, 0, +hp
    wm = -hp / (hm * (hm + hp))
    w0 = (hp - hm) / (hm * hp)
    wp = hm / (hp * (hm + hp))
    return wm, w0, wp


def _one_sided_weights(t1, t2):
    # first derivative at 0 from samples at 0, t1, t2 (signed, distinct)
    w0 = -(1.0 / t1 + 1.0 / t2)
    w1 = t2 / (t1 * (t2 - t1))
    w2 = -t1 / (t2 * (t2 - t1))
    return w0, w1, w2


def choose_scheme(K: float, h: float, scheme: str = "auto") -> str:
    if scheme == "auto":
        return "upwind" if K * h > 2 else "centered"
    if scheme not in ("centered", "upwind"):
        raise ValueError(f"unknown advection scheme {scheme!r}")
    return scheme


def assemble(
    grid: Grid,
    coeffs: CoefficientSet,
    bc: str = "dirichlet",
    scheme: str = "auto",
    form: str = "standard",
) -> SparseOperator:
    """Assemble the operator on ``grid``.

    ``form="standard"`` discretizes ``-Lap u + W.grad u + V u``;
    ``form="adjoint"`` discretizes ``-Lap u - div(W u) + V u`` (centered only).
    Dirichlet rows are identity rows on boundary nodes; Neumann rows impose
    a second-order one-sided normal derivative.
    """
    if len(coeffs.V) != grid.n or coeffs.W.shape[1] != grid.dim:
        raise ValueError(
            f"coefficients sized {len(coeffs.V)}x{coeffs.W.shape[1]} do not match grid "
            f"{grid.n}x{grid.dim}"
        )
    if bc not in ("dirichlet", "neumann"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    scheme = choose_scheme(coeffs.K, grid.h, scheme)
    if form == "adjoint" and scheme != "centered":
        raise ValueError("adjoint form is only assembled with centered differences (K h <= 2)")

    inner = np.flatnonzero(grid.interior)
    rows, cols, vals = [inner], [inner], [coeffs.V[inner].copy()]
    W = coeffs.W
    for k in range(grid.dim):
        jm, jp = grid.neighbors[inner, 2 * k], grid.neighbors[inner, 2 * k + 1]
        hm, hp = grid.arms[inner, 2 * k], grid.arms[inner, 2 * k + 1]
        cm = -2.0 / (hm * (hm + hp))
        cp = -2.0 / (hp * (hm + hp))
        c0 = 2.0 / (hm * hp)
        w = W[inner, k]
        if form == "adjoint":
            dm, d0, dp = _centered_weights(hm, hp)
            am, a0, ap = -dm * W[jm, k], -d0 * w, -dp * W[jp, k]
        elif scheme == "centered":
            dm, d0, dp = _centered_weights(hm, hp)
            am, a0, ap = dm * w, d0 * w, dp * w
        else:
            pos = w > 0
            am = np.where(pos, -w / hm, 0.0)
            ap = np.where(pos, 0.0, w / hp)
            a0 = np.where(pos, w / hm, -w / hp)
        rows += [inner, inner, inner]
        cols += [jm, inner, jp]
        vals += [cm + am, c0 + a0, cp + ap]

    bnd = np.flatnonzero(grid.is_boundary)
    if bc == "dirichlet":
        rows.append(bnd)
        cols.append(bnd)
        vals.append(np.ones(len(bnd)))
    else:
        r, c, v = _neumann_rows(grid, bnd)
        rows.append(r)
        cols.append(c)
        vals.append(v)

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n, grid.n),
    )
    A.sum_duplicates()
    singular = bc == "neumann" and not np.any(coeffs.V != 0)
    return SparseOperator(A, bc, grid, scheme, singular)


def _neumann_rows(grid: Grid, bnd):
    if grid.dim == 1:
        rows, cols, vals = [], [], []
        for b in bnd:
            p = grid.parents[b, 0]
            s = np.sign(grid.points[p, 0] - grid.points[b, 0])
            q = grid.neighbors[p, 1 if s > 0 else 0]
            t1 = grid.points[p, 0] - grid.points[b, 0]
            t2 = grid.points[q, 0] - grid.points[b, 0]
            w = np.array(_one_sided_weights(t1, t2)) * grid.normals[b, 0]
            rows += [b] * 3
            cols += [b, p, q]
            vals += list(w)
        return np.array(rows), np.array(cols), np.array(vals)
    # curved boundary: normal derivative of a least-squares quadratic fit
    # through the nodes within 2.5 h of the boundary node
    tree = cKDTree(grid.points)
    rows, cols, vals = [], [], []
    for b in bnd:
        radius = 2.5 * grid.h
        while True:
            idx = np.array(tree.query_ball_point(grid.points[b], radius))
            if len(idx) >= 10:
                break
            radius *= 1.5
        d = (grid.points[idx] - grid.points[b]) / grid.h
        P = np.column_stack([np.ones(len(idx)), d[:, 0], d[:, 1], d[:, 0] ** 2, d[:, 0] * d[:, 1], d[:, 1] ** 2])
        G = np.linalg.pinv(P)[1:3] / grid.h
        w = grid.normals[b] @ G
        rows += [b] * len(idx)
        cols += list(idx)
        vals += list(w)
    return np.array(rows), np.array(cols), np.array(vals)


@dataclass
class SolveResult:
    x: np.ndarray
    residual: float
    method: str
    iterations: int = 0
    gauge: Optional[int] = None


def scaled_residual(A, x, b) -> float:
    """Normwise backward error of the Jacobi-scaled system.

    ``|D^-1 (A x - b)|_inf / (|D^-1 A|_inf |x|_inf + |D^-1 b|_inf)`` with
    ``D = |diag A|``. Unit-diagonal scaling keeps Shortley-Weller rows with
    very short arms (coefficients ~ 1/(arm h)) from dominating, and the
    ``|x|`` term keeps the target above the roundoff floor of fine grids.
    """
    d = np.abs(A.diagonal())
    d[d == 0] = 1.0
    r = np.abs((A @ x - b) / d).max(initial=0.0)
    a_norm = float((np.asarray(abs(A).sum(axis=1)).ravel() / d).max(initial=0.0))
    scale = a_norm * np.abs(x).max(initial=0.0) + np.abs(b / d).max(initial=0.0)
    return float(r / max(scale, np.finfo(float).tiny))


def bicgstab(A, b, tol=DEFAULT_TOL, maxiter=None, x0=None):
    """BiCGSTAB on the Jacobi (left diagonally) scaled system.

    Stops when :func:`scaled_residual` drops below ``tol``. Returns
    ``(x, iterations, scaled residual)``.
    """
    n = A.shape[0]
    maxiter = 20 * n if maxiter is None else maxiter
    dinv = 1.0 / A.diagonal()
    As = sp.diags(dinv) @ A
    bs = dinv * b
    bnorm = np.abs(bs).max(initial=0.0)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    a_norm = float(np.abs(As).sum(axis=1).max())
    it = 0
    while it < maxiter:
        # (re)start from the true residual; the recursive one drifts
        r = bs - As @ x
        target = tol * (a_norm * np.abs(x).max() + bnorm)
        if np.abs(r).max() <= target:
            break
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = p = np.zeros(n)
        while it < maxiter:
            it += 1
            rho_new = r_hat @ r
            if rho_new == 0.0:
                break
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
            v = As @ p
            alpha = rho_new / (r_hat @ v)
            s = r - alpha * v
            target = tol * (a_norm * np.abs(x).max() + bnorm)
            if np.abs(s).max() <= target:
                x += alpha * p
                break
            t = As @ s
            tt = t @ t
            omega = (t @ s) / tt if tt > 0 else 0.0
            x += alpha * p + omega * s
            r = s - omega * t
            rho = rho_new
            if np.abs(r).max() <= target or omega == 0.0:
                break
    return x, it, scaled_residual(A, x, b)


def _banded(A, b):
    A = A.tocoo()
    lower = int(max(0, (A.row - A.col).max(initial=0)))
    upper = int(max(0, (A.col - A.row).max(initial=0)))
    n = A.shape[0]
    ab = np.zeros((lower + upper + 1, n))
    ab[upper + A.row - A.col, A.col] = A.data
    return sla.solve_banded((lower, upper), ab, b)


def _pinned(op: SparseOperator, rhs):
    # Neumann problems with V = 0 are singular; fix the gauge at the first
    # interior node by replacing its row with an identity row
    gauge = int(np.flatnonzero(op.grid.interior)[0])
    A = op.matrix.tolil()
    A.rows[gauge] = [gauge]
    A.data[gauge] = [1.0]
    b = np.array(rhs, float)
    b[gauge] = 0.0
    return A.tocsr(), b, gauge


def solve(op: SparseOperator, rhs, tol: float = DEFAULT_TOL, method: str = "auto", maxiter=None) -> SolveResult:
    """Solve ``op x = rhs`` to a scaled relative residual below ``tol``.

    See :func:`scaled_residual` for the residual measure. Non-convergence
    raises :class:`SolverError` carrying the final residual.

    ``method`` is one of ``"bicgstab"`` (Jacobi-preconditioned), ``"banded"``
    (direct elimination, 1D), ``"direct"`` (sparse LU) or ``"auto"``, which
    picks banded elimination in 1D and sparse LU in 2D.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rhs = np.asarray(rhs, float)
    if rhs.shape != (op.n,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({op.n},)")
    A, b, gauge = op.matrix, rhs, None
    if op.singular:
        A, b, gauge = _pinned(op, rhs)
    if method == "auto":
        method = "banded" if op.grid.dim == 1 else "direct"
    x, it = _dispatch(A, b, op, tol, method, maxiter)
    res = scaled_residual(A, x, b)
    if not np.all(np.isfinite(x)) or res > tol:
        raise SolverError(f"{method} solve stopped at relative residual {res:.3e} (target {tol:.1e})", res)
    if gauge is not None:
        log.info("singular Neumann system: node %d pinned to 0", gauge)
    return SolveResult(x, res, method, it, gauge)


def _dispatch(A, b, op, tol, method, maxiter):
    if method == "bicgstab":
        x, it, _ = bicgstab(A, b, tol=tol, maxiter=maxiter)
        return x, it
    if method not in ("banded", "direct"):
        raise ValueError(f"unknown method {method!r}")
    if op.bc == "dirichlet" and op.grid.dim > 1:
        # eliminate the identity rows: partial pivoting on the full matrix is
        # drawn to the large Shortley-Weller couplings into boundary columns
        inner = op.grid.interior
        x = np.array(b, float)
        Aii = A[inner][:, inner]
        rhs = b[inner] - A[inner][:, ~inner] @ b[~inner]
        x[inner] = _direct(Aii, rhs, method)
        return x, 0
    return _direct(A, b, method), 0


def _direct(A, b, method, refine=2):
    if method == "banded":
        return _banded(A, b)
    lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
    x = lu.solve(b)
    for _ in range(refine):
        x += lu.solve(b - A @ x)
    return x


def factorized(A) -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU factorization of ``A`` returned as a solve callable."""
    return spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A").solve


def dense_oracle_solve(op, rhs) -> np.ndarray:
    """Dense LU with partial pivoting, for cross-checking :func:`solve`."""
    A = op.matrix if isinstance(op, SparseOperator) else op
    b = np.asarray(rhs, float)
    if isinstance(op, SparseOperator) and op.singular:
        A, b, _ = _pinned(op, b)
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to n <= {DENSE_LIMIT}, got {n}")
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, float)
    lu, piv = sla.lu_factor(dense, check_finite=True)
    if np.any(np.abs(np.diag(lu)) <= np.finfo(float).eps * np.abs(dense).max()):
        raise np.linalg.LinAlgError("matrix is numerically singular")
    return sla.lu_solve((lu, piv), b)


def gradient(grid: Grid, u, dirichlet_zero: bool = True) -> np.ndarray:
    """Difference-quotient gradient at every node, shape ``(n, N)``.

    Interior nodes use three-point centered quotients on the irregular arms.
    Boundary nodes use second-order one-sided quotients along the grid line
    they were snapped on; with ``dirichlet_zero`` the tangential derivative
    is taken as zero so a single axis determines the (normal) gradient, used
    only where that axis makes an angle of at most 60 degrees with the
    normal. Gradients that cannot be formed are NaN.
    """
    u = np.asarray(u, float)
    n, N = grid.n, grid.dim
    g = np.full((n, N), np.nan)
    inner = np.flatnonzero(grid.interior)
    for k in range(N):
        jm, jp = grid.neighbors[inner, 2 * k], grid.neighbors[inner, 2 * k + 1]
        wm, w0, wp = _centered_weights(grid.arms[inner, 2 * k], grid.arms[inner, 2 * k + 1])
        g[inner, k] = wm * u[jm] + w0 * u[inner] + wp * u[jp]

    bnd = np.flatnonzero(grid.is_boundary)
    D = np.full((len(bnd), N), np.nan)
    for k in range(N):
        p = grid.parents[bnd, k]
        ok = p >= 0
        b, p = bnd[ok], p[ok]
        t1 = grid.points[p, k] - grid.points[b, k]
        q = grid.neighbors[p, 2 * k + (t1 > 0).astype(int)]
        t2 = grid.points[q, k] - grid.points[b, k]
        w0, w1, w2 = _one_sided_weights(t1, t2)
        D[ok, k] = w0 * u[b] + w1 * u[p] + w2 * u[q]
    full = np.all(np.isfinite(D), axis=1)
    g[bnd[full]] = D[full]
    if dirichlet_zero and N > 1:
        nu = grid.normals[bnd]
        for i in np.flatnonzero(~full):
            k = int(np.flatnonzero(np.isfinite(D[i]))[0])
            if abs(nu[i, k]) >= 0.5:
                g[bnd[i]] = D[i, k] / nu[i, k] * nu[i]
    return g


def grad_norm(g) -> np.ndarray:
    return np.sqrt((g ** 2).sum(axis=1))
