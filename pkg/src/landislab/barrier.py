"""Closed-form comparison functions.

The one-dimensional barrier solves ``-b'' = a b' + 2 f`` with ``b(0) = 0``
and ``b'(0) = lam``, where ``a = K + 1``. Its closed form is

    b'(s) = (lam + 2f/a) exp(-a s) - 2f/a
    b(s)  = (lam + 2f/a) (1 - exp(-a s)) / a - 2 f s / a

and the default slope ``lam = 2f/a exp(a R)`` keeps ``b' > 0`` on ``[0, R]``
(``b'(R) = 2f/a exp(-a R)``). The parabolic variant adds ``2 g0 exp(a R)``
so that ``b' > g0`` on ``[0, R]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "Barrier",
    "RadialSupersolution",
    "build_barrier",
    "planar_supersolution",
    "build_radial_supersolution",
    "explicit_grad_bound",
    "parabolic_grad_bound",
    "rk4_barrier",
    "DEFAULT_C",
]

# ceiling used for the non-constructive universal constant when no value is given
DEFAULT_C = 10.0


@dataclass(frozen=True)
class Barrier:
    K: float
    f: float
    R: float
    lam: float
    g0: float = 0.0

    @property
    def a(self) -> float:
        return self.K + 1.0

    @property
    def amplitude(self) -> float:
        return self.lam + 2.0 * self.f / self.a

    def __call__(self, s):
        s = np.asarray(s, float)
        a = self.a
        return self.amplitude * (-np.expm1(-a * s)) / a - 2.0 * self.f * s / a

    def d1(self, s):
        s = np.asarray(s, float)
        # lam e^{-as} + (2f/a)(e^{-as} - 1), without cancellation for large a s
        return self.lam * np.exp(-self.a * s) + 2.0 * self.f / self.a * np.expm1(-self.a * s)

    def d2(self, s):
        s = np.asarray(s, float)
        return -self.a * self.amplitude * np.exp(-self.a * s)

    def ode_residual(self, s):
        """``-b'' - (a b' + 2 f)``; zero up to roundoff."""
        return -self.d2(s) - (self.a * self.d1(s) + 2.0 * self.f)

    @property
    def sign_condition(self) -> bool:
        # b' is decreasing, so positivity on [0, R] reduces to the endpoint
        return bool(self.d1(self.R) > 0) or (self.lam == 0 and self.f == 0)

    def to_dict(self) -> dict:
        return {"K": self.K, "f": self.f, "R": self.R, "a": self.a, "lam": self.lam, "g0": self.g0}

    def write_csv(self, path, samples: int = 201):
        s = np.linspace(0.0, self.R, samples)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "phi", "dphi"])
            for si, v, d in zip(s, self(s), self.d1(s)):
                w.writerow([repr(float(si)), repr(float(v)), repr(float(d))])


def build_barrier(
    K: float, f: float, R: float, mode: str = "elliptic", g0: float = 0.0, lam: Optional[float] = None
) -> Barrier:
    """Barrier for drift bound ``K``, source bound ``f`` and diameter ``R``.

    ``mode="parabolic"`` adds the initial-gradient term ``2 g0 exp(a R)`` to
    the slope. ``lam`` overrides the slope; an override skips the sign check,
    which lets callers build deliberately undersized barriers.
    """
    if K < 0 or f < 0 or R <= 0:
        raise ValueError("need K >= 0, f >= 0 and R > 0")
    if mode not in ("elliptic", "parabolic"):
        raise ValueError(f"unknown mode {mode!r}")
    if g0 < 0:
        raise ValueError("g0 must be nonnegative")
    g = float(g0) if mode == "parabolic" else 0.0
    if mode == "elliptic" and g0:
        raise ValueError("g0 only applies in parabolic mode")
    if lam is not None:
        return Barrier(float(K), float(f), float(R), float(lam), g)
    a = K + 1.0
    ea = np.exp(a * R)
    b = Barrier(float(K), float(f), float(R), float(2.0 * f / a * ea + 2.0 * g * ea), g)
    if f == 0 and g == 0:
        return b
    if not b.d1(R) > g:
        raise ArithmeticError("barrier slope condition failed at s = R")
    return b


def planar_supersolution(barrier: Barrier, y, nu):
    """``v(x) = b((x - y) . nu)`` for a boundary point ``y`` and unit ``nu``.

    Returns a callable on ``(n, N)`` point arrays. Pass the *inward* unit
    normal so that ``(x - y) . nu >= 0`` inside the domain.
    """
    y = np.asarray(y, float)
    nu = np.asarray(nu, float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise ValueError("nu must be a unit vector")

    def v(x):
        x = np.atleast_2d(x)
        return barrier((x - y) @ nu)

    return v


@dataclass(frozen=True)
class RadialSupersolution:
    """``(exp(a R) - exp(a r)) / a`` on the ball of radius ``R``, ``a = K + 1``."""

    K: float
    R: float
    N: int = 2

    @property
    def a(self) -> float:
        return self.K + 1.0

    def __call__(self, r):
        r = np.asarray(r, float)
        a = self.a
        return (np.exp(a * self.R) - np.exp(a * r)) / a

    def d1(self, r):
        return -np.exp(self.a * np.asarray(r, float))

    @property
    def normal_derivative(self) -> float:
        return float(-np.exp(self.a * self.R))

    def residual(self, r, w_radial=None, V=0.0):
        """``-Lap phi + W.grad phi + V phi`` at radius ``r``.

        ``w_radial`` is ``W . x / r`` (defaults to the adversarial ``-K``).
        """
        r = np.asarray(r, float)
        w = -self.K if w_radial is None else np.asarray(w_radial, float)
        a = self.a
        return np.exp(a * r) * (a + (self.N - 1) / r + w) + np.asarray(V) * self(r)


def build_radial_supersolution(K: float, R: float, N: int = 2) -> RadialSupersolution:
    if N < 2:
        raise ValueError("radial supersolution needs N >= 2 (the Laplacian carries (N-1)/r)")
    if K < 0 or R <= 0:
        raise ValueError("need K >= 0 and R > 0")
    return RadialSupersolution(float(K), float(R), int(N))


def explicit_grad_bound(K: float, M: float, f: float, R: float, C: Optional[float] = None) -> float:
    """Gradient bound for the stationary problem.

    With ``M = 0`` and no constant given this is the barrier slope
    ``2 f/(K+1) exp((K+1) R)``, free of any unknown constant. Otherwise it is
    ``exp(C (1 + K + sqrt(M)) R) f``.
    """
    if min(K, M, f, R) < 0:
        raise ValueError("inputs must be nonnegative")
    if f == 0:
        return 0.0
    if M == 0 and C is None:
        a = K + 1.0
        return float(2.0 * f / a * np.exp(a * R))
    C = DEFAULT_C if C is None else C
    return float(np.exp(C * (1.0 + K + np.sqrt(M)) * R) * f)


def parabolic_grad_bound(K, M, f, R, g0, T, C: Optional[float] = None) -> float:
    """``exp(C (T M + (1 + K + sqrt M) R)) (g0 + f)``, or the barrier slope when
    ``M = 0`` and no constant is given."""
    if M == 0 and C is None:
        a = K + 1.0
        return float((2.0 * f / a + 2.0 * g0) * np.exp(a * R))
    C = DEFAULT_C if C is None else C
    return float(np.exp(C * (T * M + (1.0 + K + np.sqrt(M)) * R)) * (g0 + f))


def rk4_barrier(K, f, lam, s_max, steps=10000):
    """Integrate the barrier ODE numerically (test oracle for the closed form)."""
    a = K + 1.0

    def rhs(y):
        return np.array([y[1], -(a * y[1] + 2.0 * f)])

    hs = s_max / steps
    y = np.array([0.0, lam])
    out = [y.copy()]
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * hs * k1)
        k3 = rhs(y + 0.5 * hs * k2)
        k4 = rhs(y + hs * k3)
        y = y + hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y.copy())
    return np.linspace(0.0, s_max, steps + 1), np.array(out)
