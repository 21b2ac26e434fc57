"""Evolution problem ``d_t phi - Lap phi + W.grad phi + V phi = F`` with
``phi = 0`` on the boundary and time-independent coefficients."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import Grid
from .pde_core import CoefficientSet, assemble, factorized, grad_norm, gradient, sample

__all__ = ["ParabolicRun", "solve_parabolic", "reduce_potential", "solve_shifted", "PotentialShift"]


@dataclass
class ParabolicRun:
    """Inputs and recorded outputs of one time integration.

    ``grad_history`` has one ``(t, sup_grad)`` row per step, starting with
    the initial datum at ``t = 0``. ``snapshots`` maps recorded times to
    nodal values.
    """

    grid: Grid
    coeffs: CoefficientSet
    phi0: np.ndarray
    T: float
    dt: float
    snapshot_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    snapshots: list = field(default_factory=list)
    grad_history: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    phi: Optional[np.ndarray] = None
    scale_rate: float = 0.0

    @property
    def g0(self) -> float:
        return float(np.nanmax(grad_norm(gradient(self.grid, self.phi0)), initial=0.0))

    @property
    def sup_grad(self) -> float:
        return float(self.grad_history[:, 1].max(initial=0.0))

    def write_history_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "sup_grad"])
            for t, g in self.grad_history:
                w.writerow([repr(float(t)), repr(float(g))])

    def write_snapshots(self, directory, stem="snapshot"):
        """One CSV per recorded time: coordinates then value."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        axes = "xy"[: self.grid.dim]
        paths = []
        for k, (t, u) in enumerate(zip(self.snapshot_times, self.snapshots)):
            p = directory / f"{stem}_{k:04d}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([*axes, "t", "value"])
                for x, v in zip(self.grid.points, u):
                    w.writerow([*(repr(float(c)) for c in x), repr(float(t)), repr(float(v))])
            paths.append(p)
        return paths


def _initial(grid: Grid, phi0) -> np.ndarray:
    u = sample(grid, phi0).astype(float).copy()
    scale = 1.0 + np.abs(u).max(initial=0.0)
    if np.abs(u[grid.is_boundary]).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("initial datum must vanish on the boundary")
    u[grid.is_boundary] = 0.0
    return u


def solve_parabolic(
    grid: Grid,
    coeffs: CoefficientSet,
    phi0=None,
    T: float = 1.0,
    dt: Optional[float] = None,
    snapshot_times: Sequence[float] = (),
    scheme: str = "auto",
    forcing_rate: float = 0.0,
    allow_negative_V: bool = False,
) -> ParabolicRun:
    """Crank-Nicolson time stepping with one implicit Euler start-up step.

    Parameters
    ----------
    phi0
        Initial datum (array, constant or callable); must vanish on the boundary.
    dt
        Step size; defaults to the grid spacing. The last step is shortened
        to land on ``T``.
    snapshot_times
        Times at which nodal values are stored (the first step at or after
        each requested time). ``T`` is always recorded.
    forcing_rate
        Multiplies the source by ``exp(-forcing_rate t)``; used by
        :func:`reduce_potential`.
    """
    if callable(coeffs) and not isinstance(coeffs, CoefficientSet):
        raise TypeError("time-dependent coefficients are not supported; pass a CoefficientSet")
    if T < 0:
        raise ValueError("T must be nonnegative")
    dt = grid.h if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not coeffs.V_nonnegative and not allow_negative_V:
        raise ValueError("V must be nonnegative (use reduce_potential for sign-changing V)")
    u = _initial(grid, phi0)
    req = np.sort(np.asarray(list(snapshot_times) + [T], float))
    req = np.unique(req[(req >= 0) & (req <= T)])

    inner = grid.interior
    A = assemble(grid, coeffs, bc="dirichlet", scheme=scheme).matrix.tocsr()
    A = A[inner][:, inner].tocsc()
    I = sp.identity(A.shape[0], format="csc")
    F = coeffs.F[inner]

    def source(t):
        return F * np.exp(-forcing_rate * t) if forcing_rate else F

    cache = {}

    def lhs(theta, tau):
        key = (theta, tau)
        if key not in cache:
            cache[key] = factorized(I / tau + theta * A)
        return cache[key]

    snaps, stimes = [], []
    hist = [(0.0, float(np.nanmax(grad_norm(gradient(grid, u)), initial=0.0)))]
    if req.size and req[0] == 0.0:
        snaps.append(u.copy())
        stimes.append(0.0)
    k_req = len(stimes)

    t, step = 0.0, 0
    nsteps = int(np.ceil(T / dt - 1e-9)) if T > 0 else 0
    ui = u[inner].copy()
    for step in range(nsteps):
        tau = min(dt, T - t) if step == nsteps - 1 else dt
        theta = 1.0 if step == 0 else 0.5
        t_new = T if step == nsteps - 1 else (step + 1) * dt
        if theta == 1.0:
            rhs = ui / tau + source(t_new)
        else:
            rhs = ui / tau - 0.5 * (A @ ui) + 0.5 * (source(t) + source(t_new))
        ui = lhs(theta, tau)(rhs)
        t = t_new
        u = np.zeros(grid.n)
        u[inner] = ui
        hist.append((t, float(np.nanmax(grad_norm(gradient(grid, u)), initial=0.0))))
        while k_req < req.size and t >= req[k_req] - 1e-12 * max(1.0, T):
            snaps.append(u.copy())
            stimes.append(t)
            k_req += 1
    u = np.zeros(grid.n)
    u[inner] = ui
    return ParabolicRun(
        grid=grid, coeffs=coeffs, phi0=_initial(grid, phi0), T=float(T), dt=dt,
        snapshot_times=np.array(stimes), snapshots=snaps, grad_history=np.array(hist),
        phi=u, scale_rate=0.0,
    )


@dataclass(frozen=True)
class PotentialShift:
    """``V + shift >= 0``; the original solution is ``exp(shift t)`` times the shifted one."""

    coeffs: CoefficientSet
    shift: float

    def factor(self, t):
        return np.exp(self.shift * np.asarray(t, float))


def reduce_potential(coeffs: CoefficientSet) -> PotentialShift:
    """Shift a sign-changing potential by ``|V^-|_inf``.

    If ``phi`` solves the original problem then ``exp(-s t) phi`` solves the
    one with potential ``V + s`` and source ``exp(-s t) F``.
    """
    s = float(np.maximum(-coeffs.V, 0.0).max(initial=0.0))
    if s == 0.0:
        return PotentialShift(coeffs, 0.0)
    return PotentialShift(coeffs.with_(V=coeffs.V + s), s)


def solve_shifted(grid, coeffs, phi0=None, T=1.0, dt=None, snapshot_times=(), scheme="auto") -> ParabolicRun:
    """Solve with a sign-changing ``V`` through the shifted problem and rescale."""
    red = reduce_potential(coeffs)
    run = solve_parabolic(grid, red.coeffs, phi0, T, dt, snapshot_times, scheme, forcing_rate=red.shift)
    fac = red.factor(run.grad_history[:, 0])
    run.grad_history[:, 1] *= fac
    run.snapshots = [s * red.factor(t) for t, s in zip(run.snapshot_times, run.snapshots)]
    run.phi = run.phi * red.factor(run.T)
    run.coeffs = coeffs
    run.scale_rate = red.shift
    return run
