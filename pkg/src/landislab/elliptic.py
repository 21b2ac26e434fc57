"""Stationary problem ``-Lap phi + W.grad phi + V phi = F`` with phi = 0 or
zero normal flux on the boundary."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import Grid
from .pde_core import DEFAULT_TOL, CoefficientSet, assemble, grad_norm, gradient, solve

__all__ = ["EllipticSolution", "solve_elliptic", "measure_sup_grad", "write_solution_csv"]


@dataclass
class EllipticSolution:
    grid: Grid
    coeffs: CoefficientSet
    bc: str
    phi: np.ndarray
    grad_phi: np.ndarray
    residual: float

    @property
    def sup_grad(self) -> float:
        return measure_sup_grad(self)

    @property
    def sup_phi(self) -> float:
        return float(np.abs(self.phi).max())


def solve_elliptic(
    grid: Grid,
    coeffs: CoefficientSet,
    bc: str = "dirichlet",
    tol: float = DEFAULT_TOL,
    method: str = "auto",
    scheme: str = "auto",
    allow_negative_V: bool = False,
) -> EllipticSolution:
    """Solve the boundary-value problem on ``grid``.

    Dirichlet problems need ``V >= 0`` unless ``allow_negative_V`` is set.
    Neumann problems are only posed for ``V = 0``; the constant null space
    is fixed by pinning one node.
    """
    if bc == "dirichlet" and not coeffs.V_nonnegative and not allow_negative_V:
        raise ValueError("Dirichlet problem requires V >= 0 (pass allow_negative_V to override)")
    if bc == "neumann" and np.any(coeffs.V != 0):
        raise ValueError("Neumann problem is only supported for V = 0")
    op = assemble(grid, coeffs, bc=bc, scheme=scheme)
    rhs = coeffs.F.copy()
    if bc == "dirichlet":
        rhs[grid.is_boundary] = 0.0
    else:
        rhs[grid.is_boundary] = 0.0
    res = solve(op, rhs, tol=tol, method=method)
    phi = res.x
    if bc == "dirichlet":
        phi[grid.is_boundary] = 0.0
    g = gradient(grid, phi, dirichlet_zero=(bc == "dirichlet"))
    return EllipticSolution(grid, coeffs, bc, phi, g, res.residual)


def measure_sup_grad(sol) -> float:
    """Max over nodes of the Euclidean norm of the difference-quotient gradient."""
    g = sol.grad_phi if hasattr(sol, "grad_phi") else np.asarray(sol)
    norms = grad_norm(g)
    norms = norms[np.isfinite(norms)]
    return float(norms.max(initial=0.0))


def write_solution_csv(path, grid: Grid, phi, grad=None):
    """Node coordinates, value and gradient components, one row per node."""
    grad = gradient(grid, phi) if grad is None else grad
    axes = "xy"[: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*axes, "value", *(f"d{a}" for a in axes), "boundary"])
        for i in range(grid.n):
            w.writerow(
                [*(repr(float(c)) for c in grid.points[i]), repr(float(phi[i])),
                 *(repr(float(c)) for c in grad[i]), int(grid.is_boundary[i])]
            )
