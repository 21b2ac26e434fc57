"""Positive multiplier for the homogeneous equation and the reduction of a
nonnegative potential to a drift.

The multiplier solves ``-Lap psi + W.grad psi + V psi = 0`` on the ball
``B(c, 2R)`` with ``psi = psi1`` on its boundary, where

    psi1(x) = exp((K + sqrt M) (x_1 - c_1)),   psi2 = exp(2 R (K + sqrt M)).

``psi1`` is a subsolution and ``psi2`` a supersolution, so the comparison
principle squeezes ``psi1 <= psi <= psi2``. Given ``psi``, the substitution
``phi = psi phi_hat`` turns the potential into the extra drift
``-2 grad log psi``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
import numpy as np

from .geometry import Grid, build_domain, discretize
from .pde_core import DEFAULT_TOL, CoefficientSet, assemble, grad_norm, gradient, sample, solve

__all__ = [
    "MultiplierResult",
    "ReducedProblem",
    "build_multiplier",
    "multiplier_for",
    "verify_log_grad_bound",
    "envelope_residuals",
    "reduce_to_zero_potential",
    "lattice_interpolate",
    "C_CEILING",
]

C_CEILING = 10.0


@dataclass
class MultiplierResult:
    grid: Grid
    coeffs: CoefficientSet
    center: np.ndarray
    R: float
    K: float
    M: float
    psi: np.ndarray
    psi1: np.ndarray
    psi2: float
    log_grad: np.ndarray
    residual: float

    @property
    def rate(self) -> float:
        return self.K + np.sqrt(self.M)

    def envelope_violation(self) -> float:
        """``max(psi1 - psi, psi - psi2) / psi2`` over nodes; nonpositive when the envelope holds."""
        v = np.maximum(self.psi1 - self.psi, self.psi - self.psi2)
        return float(v.max() / self.psi2)

    def write_csv(self, path):
        axes = "xy"[: self.grid.dim]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*axes, "psi", "psi1", *(f"dlog_{a}" for a in axes)])
            for x, p, p1, g in zip(self.grid.points, self.psi, self.psi1, self.log_grad):
                w.writerow([*(repr(float(c)) for c in x), repr(float(p)), repr(float(p1)),
                            *(repr(float(c)) for c in g)])


def build_multiplier(
    R: float,
    W=None,
    V=None,
    h: float = 0.01,
    center=None,
    dim: int = 2,
    extension: str = "zero",
    origin=None,
    tol: float = DEFAULT_TOL,
    method: str = "auto",
) -> MultiplierResult:
    """Solve for the multiplier on ``B(center, 2R)``.

    Parameters
    ----------
    W, V
        Field specs (constant, callable on ``(n, dim)`` points, or ``None``).
    extension
        ``"zero"`` sets ``W`` and ``V`` to zero outside ``B(center, R)``;
        ``"none"`` samples them on the whole ball.
    origin
        Lattice origin; pass the origin of a problem grid so that its lattice
        nodes are shared with the multiplier grid.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    if extension not in ("zero", "none"):
        raise ValueError("extension must be 'zero' or 'none'")
    center = np.zeros(dim) if center is None else np.asarray(center, float).reshape(dim)
    if dim == 1:
        dom = build_domain({"kind": "interval", "a": center[0] - 2 * R, "b": center[0] + 2 * R})
        if origin is None:
            origin = center
    else:
        dom = build_domain({"kind": "disk", "center": center.tolist(), "radius": 2 * R})
    grid = discretize(dom, h, origin=origin)
    Wn = sample(grid, W, dim).reshape(grid.n, dim)
    Vn = sample(grid, V)
    if np.any(Vn < 0):
        raise ValueError("multiplier needs V >= 0")
    r = np.sqrt(((grid.points - center) ** 2).sum(axis=1))
    inside = r <= R * (1 + 1e-12)
    if extension == "zero":
        Wn = np.where(inside[:, None], Wn, 0.0)
        Vn = np.where(inside, Vn, 0.0)
    coeffs = CoefficientSet(Wn, Vn, np.zeros(grid.n))
    K, M = coeffs.K, coeffs.M
    k = K + np.sqrt(M)
    psi1 = np.exp(k * (grid.points[:, 0] - center[0]))
    psi2 = float(np.exp(2 * R * k))

    op = assemble(grid, coeffs, bc="dirichlet")
    rhs = np.where(grid.is_boundary, psi1, 0.0)
    res = solve(op, rhs, tol=tol, method=method)
    psi = res.x
    psi[grid.is_boundary] = psi1[grid.is_boundary]
    if not np.all(psi > 0):
        raise ArithmeticError("computed multiplier is not positive; refine h")
    log_grad = gradient(grid, np.log(psi), dirichlet_zero=False)
    return MultiplierResult(grid, coeffs, center, float(R), K, M, psi, psi1, psi2, log_grad, res.residual)


def multiplier_for(grid: Grid, W=None, V=None, extension: str = "zero", **kw) -> MultiplierResult:
    """Multiplier for a problem posed on ``grid``.

    The domain is embedded in the ball centred at its centre with radius
    equal to its diameter, and the lattices are aligned.
    """
    dom = grid.domain
    return build_multiplier(
        dom.diameter, W, V, h=grid.h, center=dom.center, dim=grid.dim,
        extension=extension, origin=grid.origin, **kw,
    )


def verify_log_grad_bound(result: MultiplierResult, inner: float = 1.4) -> float:
    """Effective constant ``|grad log psi|_inf / (K + sqrt M)`` on ``|x - c| <= inner R``."""
    r = np.sqrt(((result.grid.points - result.center) ** 2).sum(axis=1))
    sel = r <= inner * result.R
    g = grad_norm(result.log_grad[sel])
    gmax = float(np.nanmax(g, initial=0.0))
    if result.rate == 0:
        if gmax > 1e-8:
            raise ArithmeticError("nonzero log-gradient with K = M = 0")
        return 0.0
    c = gmax / result.rate
    if not np.isfinite(c):
        raise ArithmeticError("effective constant is not finite")
    return c


def envelope_residuals(result: MultiplierResult):
    """Discrete operator applied to ``psi1`` and ``psi2`` on interior nodes.

    Returns ``(max L psi1 / psi1, max |L psi2 - V psi2| / psi2)``; the first
    should be nonpositive up to O(h^2), the second zero up to roundoff.
    """
    op = assemble(result.grid, result.coeffs, bc="dirichlet")
    inner = result.grid.interior
    A = op.matrix
    sub = (A @ result.psi1)[inner] / result.psi1[inner]
    psi2 = np.full(result.grid.n, result.psi2)
    sup = (A @ psi2)[inner] - result.coeffs.V[inner] * result.psi2
    return float(sub.max(initial=-np.inf)), float(np.abs(sup).max(initial=0.0) / result.psi2)


def lattice_interpolate(grid: Grid, values, points) -> np.ndarray:
    """Tensor-product quadratic Lagrange interpolation on the lattice of ``grid``.

    Exact at lattice nodes; third order along grid lines. All stencil nodes
    must be lattice nodes of ``grid``.
    """
    values = np.asarray(values)
    points = np.atleast_2d(np.asarray(points, float))
    N = grid.dim
    idx = np.flatnonzero(grid.on_lattice)
    lat = grid.lattice[idx]
    lo = lat.min(axis=0)
    table = np.full(tuple(lat.max(axis=0) - lo + 1), -1, dtype=np.int64)
    table[tuple((lat - lo).T)] = idx

    s = (points - grid.origin) / grid.h
    m = np.rint(s).astype(np.int64)
    t = s - m
    t[np.abs(t) < 1e-9] = 0.0
    weights = np.stack([t * (t - 1) / 2, 1 - t * t, t * (t + 1) / 2], axis=-1)  # (p, N, 3)
    out = np.zeros((len(points),) + values.shape[1:])
    for offs in np.ndindex(*(3,) * N):
        o = np.array(offs) - 1
        w = np.prod(weights[:, np.arange(N), list(offs)], axis=1)
        need = w != 0
        if not need.any():
            continue
        k = m[need] + o - lo
        if np.any(k < 0) or np.any(k >= np.array(table.shape)):
            raise ValueError("interpolation stencil leaves the multiplier grid")
        node = table[tuple(k.T)]
        if np.any(node < 0):
            raise ValueError("interpolation stencil uses a non-lattice node")
        wn = w[need].reshape((-1,) + (1,) * (values.ndim - 1))
        out[need] += wn * values[node]
    return out


@dataclass
class ReducedProblem:
    """Potential-free problem ``-Lap u + W_hat.grad u = F_hat`` and its back-map."""

    grid: Grid
    coeffs: CoefficientSet
    psi: np.ndarray
    log_grad: np.ndarray

    def back_map(self, phi_hat, dirichlet_zero: bool = True):
        """Return ``(phi, grad phi)`` from the transformed solution."""
        phi_hat = np.asarray(phi_hat, float)
        g_hat = gradient(self.grid, phi_hat, dirichlet_zero=dirichlet_zero)
        phi = self.psi * phi_hat
        grad = (phi_hat * self.psi)[:, None] * self.log_grad + self.psi[:, None] * g_hat
        return phi, grad


def reduce_to_zero_potential(grid: Grid, coeffs: CoefficientSet, multiplier: MultiplierResult) -> ReducedProblem:
    """Substitute ``phi = psi phi_hat``.

    ``W_hat = W - 2 grad log psi`` and ``F_hat = F / psi``; the potential
    disappears because ``psi`` solves the homogeneous equation. ``psi`` and
    its log-gradient are transferred from the multiplier grid by
    :func:`lattice_interpolate`.
    """
    if not np.allclose(grid.origin, multiplier.grid.origin) or not np.isclose(grid.h, multiplier.grid.h):
        raise ValueError("problem and multiplier lattices must coincide")
    psi = lattice_interpolate(multiplier.grid, multiplier.psi, grid.points)
    if not np.all(psi > 0):
        raise ArithmeticError("multiplier is not positive on the problem grid")
    lg = multiplier.log_grad
    if np.isnan(lg).any():
        # boundary rows of the multiplier grid are never used for interior stencils
        lg = np.nan_to_num(lg)
    log_grad = lattice_interpolate(multiplier.grid, lg, grid.points)
    hat = CoefficientSet(coeffs.W - 2.0 * log_grad, np.zeros(grid.n), coeffs.F / psi)
    return ReducedProblem(grid, hat, psi, log_grad)
