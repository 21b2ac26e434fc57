"""One-dimensional duality argument for ``-u'' - (W u)' + V u = 0``.

The adjoint problem ``-phi'' + W phi' + V phi = sign(u)`` with zero Cauchy
data at ``-R`` is integrated as the first-order system

    Phi' = M Phi + Theta,   M = [[0, 1], [V, W]],   Theta = (0, -sign(u)).

Integration by parts against a solution ``u`` then expresses ``int |u|``
through boundary values at ``+-R`` only.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

__all__ = [
    "FirstOrderSystem",
    "Trajectory",
    "GronwallCheck",
    "ManufacturedSolution",
    "gaussian_solution",
    "integrate_adjoint",
    "check_gronwall_envelope",
    "gronwall_constant",
    "boundary_terms",
    "check_duality_identity",
    "decay_demo",
    "write_demo_csv",
    "sign",
    "OVERFLOW",
]

OVERFLOW = 1e300


def sign(s, mode: str = "usual"):
    """``mode="usual"``: -1, 0 or 1. ``mode="literal"``: ``s`` for ``s >= 0`` and ``-s`` otherwise."""
    s = np.asarray(s, float)
    if mode == "usual":
        return np.sign(s)
    if mode == "literal":
        return np.abs(s)
    raise ValueError(f"unknown sign mode {mode!r}")


def _as_function(c) -> Callable:
    if c is None:
        return lambda x: np.zeros_like(np.asarray(x, float))
    if callable(c):
        return c
    v = float(c)
    return lambda x: np.full_like(np.asarray(x, float), v)


@dataclass
class FirstOrderSystem:
    """Coefficients of the adjoint system on ``[-R, R]``.

    ``forcing`` is the right-hand side ``sign(u)`` of the second-order form
    as a function of ``x`` (default: identically one, the case ``u > 0``).
    """

    R: float
    W: Callable = None
    V: Callable = None
    forcing: Callable = None

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        self.W = _as_function(self.W)
        self.V = _as_function(self.V)
        self.forcing = _as_function(1.0 if self.forcing is None else self.forcing)

    def matrix(self, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape + (2, 2))
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = self.V(x)
        out[..., 1, 1] = self.W(x)
        return out

    def theta(self, x):
        x = np.asarray(x, float)
        return np.stack([np.zeros_like(x), -self.forcing(x)], axis=-1)

    def rhs(self, x, y):
        return np.array([y[1], self.V(x) * y[0] + self.W(x) * y[1] - self.forcing(x)])


@dataclass
class Trajectory:
    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    system: FirstOrderSystem = field(repr=False)


class GronwallViolation(ArithmeticError):
    pass


def integrate_adjoint(system: FirstOrderSystem, h: float) -> Trajectory:
    """Classical RK4 from ``-R`` to ``R`` with ``Phi(-R) = 0``.

    The step is adjusted so that an integer number of steps covers ``2R``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    R = system.R
    n = max(2, int(np.ceil(2 * R / h - 1e-9)))
    x = np.linspace(-R, R, n + 1)
    dx = x[1] - x[0]
    # coefficients at nodes and midpoints, evaluated once
    xm = x[:-1] + 0.5 * dx
    W, Wm = system.W(x), system.W(xm)
    V, Vm = system.V(x), system.V(xm)
    S, Sm = system.forcing(x), system.forcing(xm)
    y = np.zeros((n + 1, 2))
    a, b = 0.0, 0.0
    for i in range(n):
        k1a, k1b = b, V[i] * a + W[i] * b - S[i]
        a2, b2 = a + 0.5 * dx * k1a, b + 0.5 * dx * k1b
        k2a, k2b = b2, Vm[i] * a2 + Wm[i] * b2 - Sm[i]
        a3, b3 = a + 0.5 * dx * k2a, b + 0.5 * dx * k2b
        k3a, k3b = b3, Vm[i] * a3 + Wm[i] * b3 - Sm[i]
        a4, b4 = a + dx * k3a, b + dx * k3b
        k4a, k4b = b4, V[i + 1] * a4 + W[i + 1] * b4 - S[i + 1]
        a += dx / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        b += dx / 6 * (k1b + 2 * k2b + 2 * k3b + k4b)
        if not (abs(a) < OVERFLOW and abs(b) < OVERFLOW):
            raise GronwallViolation(f"adjoint state exceeded {OVERFLOW:g} at x={x[i + 1]:.6g}")
        y[i + 1] = a, b
    return Trajectory(x, y[:, 0], y[:, 1], system)


def gronwall_constant(system: FirstOrderSystem, x) -> float:
    """``1 + |M|_inf + |Theta|_inf`` with the row-sum norm of ``M``."""
    x = np.asarray(x, float)
    m = max(1.0, float(np.max(np.abs(system.V(x)) + np.abs(system.W(x)))))
    th = float(np.max(np.abs(system.forcing(x)), initial=0.0))
    return 1.0 + m + th


@dataclass(frozen=True)
class GronwallCheck:
    holds: bool
    max_ratio: float
    C: float


def check_gronwall_envelope(traj: Trajectory, C: Optional[float] = None) -> GronwallCheck:
    """``|phi| + |phi'| <= C exp(C |x + R|)`` at every sample."""
    C = gronwall_constant(traj.system, traj.x) if C is None else float(C)
    lhs = np.abs(traj.phi) + np.abs(traj.dphi)
    # compare in log space to stay finite for large C R
    with np.errstate(divide="ignore"):
        log_ratio = np.log(lhs) - (np.log(C) + C * np.abs(traj.x + traj.system.R))
    ratio = float(np.exp(log_ratio.max())) if lhs.any() else 0.0
    return GronwallCheck(ratio <= 1.0, ratio, C)


@dataclass
class ManufacturedSolution:
    """Positive ``u`` with a chosen drift and the potential that makes it a solution.

    ``V = (u'' + (W u)') / u``. ``decay_C`` and ``decay_eps`` describe an
    envelope ``C exp(-|x|^(1+eps))`` valid for ``u`` and ``u'``.
    """

    u: Callable
    du: Callable
    d2u: Callable
    W: Callable
    dW: Callable
    R: float
    decay_C: float = float("nan")
    decay_eps: float = float("nan")

    def V(self, x):
        x = np.asarray(x, float)
        return (self.d2u(x) + self.dW(x) * self.u(x) + self.W(x) * self.du(x)) / self.u(x)

    def V_sup(self, samples: int = 4001) -> float:
        x = np.linspace(-self.R, self.R, samples)
        return float(np.abs(self.V(x)).max())

    def residual(self, x):
        """``-u'' - (W u)' + V u``."""
        x = np.asarray(x, float)
        return -self.d2u(x) - (self.dW(x) * self.u(x) + self.W(x) * self.du(x)) + self.V(x) * self.u(x)

    def system(self, sign_mode: str = "usual") -> FirstOrderSystem:
        return FirstOrderSystem(self.R, self.W, self.V, lambda x: sign(self.u(x), sign_mode))


def gaussian_solution(R: float, drift: float = 0.0) -> ManufacturedSolution:
    """``u = exp(-x^2)`` with constant drift; ``V = 4x^2 - 2 - 2 drift x``.

    ``|u| + |u'| <= C exp(-|x|^(3/2))`` with ``C`` computed on a fine sample.
    """
    u = lambda x: np.exp(-np.asarray(x, float) ** 2)
    du = lambda x: -2 * np.asarray(x, float) * u(x)
    d2u = lambda x: (4 * np.asarray(x, float) ** 2 - 2) * u(x)
    W = _as_function(drift)
    dW = _as_function(0.0)
    eps = 0.5
    s = np.linspace(0, 50, 200001)
    C = float(np.max((np.exp(-s * s) * np.maximum(1.0, 2 * s)) / np.exp(-s ** (1 + eps))))
    return ManufacturedSolution(u, du, d2u, W, dW, float(R), decay_C=C, decay_eps=eps)


def boundary_terms(traj: Trajectory, ms: ManufacturedSolution) -> float:
    """Right-hand side of the duality identity from endpoint values."""
    R = ms.R
    p, dp = traj.phi, traj.dphi
    uR, um = float(ms.u(R)), float(ms.u(-R))
    duR, dum = float(ms.du(R)), float(ms.du(-R))
    WR, Wm = float(ms.W(R)), float(ms.W(-R))
    return (
        -dp[-1] * uR + dp[0] * um
        + p[-1] * duR - p[0] * dum
        + WR * uR * p[-1] - Wm * um * p[0]
    )


def check_duality_identity(ms: ManufacturedSolution, h: float, sign_mode: str = "usual"):
    """Relative gap ``|int |u| - boundary terms| / int |u|``.

    The left side uses composite Simpson quadrature on the RK4 nodes.
    Returns ``(relative_residual, integral, boundary_sum)``.
    """
    traj = integrate_adjoint(ms.system(sign_mode), h)
    lhs = float(simpson(np.abs(ms.u(traj.x)), x=traj.x))
    rhs = float(boundary_terms(traj, ms))
    if lhs == 0.0:
        return 0.0, 0.0, rhs
    return abs(lhs - rhs) / lhs, lhs, rhs


def decay_demo(radii=(1.0, 2.0, 3.0), h: float = 1e-3, drift: float = 0.0):
    """One row per ``R``: integral, boundary pieces, Gronwall bound and decay data.

    The boundary pieces at ``+R`` are the products of ``u(R)``, ``u'(R)``
    with the adjoint state; they shrink with ``R`` while ``|Phi(R)|`` is only
    bounded by the Gronwall envelope. ``V_sup`` grows with ``R`` for a
    Gaussian and is reported as such.
    """
    rows = []
    for R in radii:
        ms = gaussian_solution(R, drift)
        traj = integrate_adjoint(ms.system(), h)
        rel, lhs, rhs = check_duality_identity(ms, h)
        C = gronwall_constant(traj.system, traj.x)
        uR = abs(float(ms.u(R))) + abs(float(ms.du(R)))
        rows.append({
            "R": float(R),
            "integral": lhs,
            "boundary_sum": rhs,
            "u_at_R": uR,
            "phi_at_R": abs(traj.phi[-1]) + abs(traj.dphi[-1]),
            "gronwall_bound": C * float(np.exp(2 * C * R)),
            "decay_envelope": ms.decay_C * float(np.exp(-R ** (1 + ms.decay_eps))),
            "du_at_R": abs(float(ms.du(R))),
            "V_sup": ms.V_sup(),
            "relative_residual": rel,
        })
    return rows


def write_demo_csv(path, rows):
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(float(r[k])) for k in keys])
