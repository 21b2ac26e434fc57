"""Strictly convex domains and their Cartesian discretizations.

Grids carry boundary nodes snapped onto the analytic boundary along grid
lines, so curved boundaries are handled with Shortley-Weller irregular
stencils rather than staircasing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial import ConvexHull

__all__ = ["ConvexDomain", "Grid", "build_domain", "discretize", "GeometryError"]

INTERIOR, BOUNDARY, EXTERIOR = 0, 1, 2


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ConvexDomain:
    """An interval, disk or axis-aligned ellipse.

    ``params`` holds ``(a, b)`` for an interval, ``(cx, cy, r)`` for a disk
    and ``(cx, cy, p, q)`` for an ellipse with semi-axes ``p`` (along x)
    and ``q`` (along y).
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("interval", "disk", "ellipse"):
            raise GeometryError(f"unknown domain kind {self.kind!r}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if not all(np.isfinite(p)):
            raise GeometryError("domain parameters must be finite")
        if self.kind == "interval":
            if len(p) != 2 or not p[0] < p[1]:
                raise GeometryError("interval needs a < b")
        elif self.kind == "disk":
            if len(p) != 3 or p[2] <= 0:
                raise GeometryError("disk needs a positive radius")
        elif len(p) != 4 or p[2] <= 0 or p[3] <= 0:
            raise GeometryError("ellipse needs positive semi-axes")

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def center(self) -> np.ndarray:
        if self.kind == "interval":
            return np.array([0.5 * (self.params[0] + self.params[1])])
        return np.array(self.params[:2])

    @property
    def diameter(self) -> float:
        p = self.params
        if self.kind == "interval":
            return p[1] - p[0]
        if self.kind == "disk":
            return 2.0 * p[2]
        return 2.0 * max(p[2], p[3])

    def level(self, x) -> np.ndarray:
        """Negative inside, zero on the boundary, positive outside.

        Exact signed distance for intervals and disks; for ellipses the
        normalized radius minus one, scaled by the minor semi-axis.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self.params
        if self.kind == "interval":
            return np.maximum(p[0] - x[:, 0], x[:, 0] - p[1])
        if self.kind == "disk":
            return np.hypot(x[:, 0] - p[0], x[:, 1] - p[1]) - p[2]
        rho = np.hypot((x[:, 0] - p[0]) / p[2], (x[:, 1] - p[1]) / p[3])
        return (rho - 1.0) * min(p[2], p[3])

    def contains(self, x) -> np.ndarray:
        return self.level(x) < 0

    def normal(self, x) -> np.ndarray:
        """Outward unit normal at (or radially projected from) ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self.params
        if self.kind == "interval":
            mid = 0.5 * (p[0] + p[1])
            return np.where(x[:, :1] < mid, -1.0, 1.0)
        if self.kind == "disk":
            g = x - np.array(p[:2])
        else:
            g = (x - np.array(p[:2])) / np.array([p[2] ** 2, p[3] ** 2])
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def distance_to_boundary(self, x) -> np.ndarray:
        """Euclidean distance to the boundary for points in the closed domain."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self.params
        if self.kind == "interval":
            return np.maximum(np.minimum(x[:, 0] - p[0], p[1] - x[:, 0]), 0.0)
        if self.kind == "disk":
            return np.maximum(p[2] - np.hypot(x[:, 0] - p[0], x[:, 1] - p[1]), 0.0)
        return _ellipse_distance(np.abs(x[:, 0] - p[0]), np.abs(x[:, 1] - p[1]), p[2], p[3])

    def boundary_crossing(self, point, axis: int, sign: int) -> float:
        """Distance from an inside ``point`` to the boundary along ``sign*e_axis``."""
        if self.kind == "interval":
            a, b = self.params
            return (b - point[0]) if sign > 0 else (point[0] - a)
        return float(_crossings(self, np.atleast_2d(point), axis, sign)[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "diameter": self.diameter}


def _ellipse_distance(u, v, p, q, iters=200):
    # Distance from (u, v) >= 0 inside the ellipse to its boundary. The
    # closest point is (p^2 u/(t+p^2), q^2 v/(t+q^2)) with t the root in
    # (-q^2, 0] of (p u/(t+p^2))^2 + (q v/(t+q^2))^2 = 1 (p >= q).
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    if p < q:
        return _ellipse_distance(v, u, q, p, iters)
    lo = np.full(u.shape, -q * q)
    hi = np.zeros(u.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        for _ in range(iters):
            t = 0.5 * (lo + hi)
            g = (p * u / (t + p * p)) ** 2 + (q * v / (t + q * q)) ** 2 - 1.0
            lo = np.where(g > 0, t, lo)
            hi = np.where(g > 0, hi, t)
        t = 0.5 * (lo + hi)
        d = np.hypot(p * p * u / (t + p * p) - u, q * q * v / (t + q * q) - v)
    # on (or within roundoff of) the major axis inside the evolute the root
    # degenerates to t = -q^2; use the on-axis closest point, error O(v)
    axis = (v <= 1e-9 * q) & (u < (p * p - q * q) / p)
    x0 = np.where(axis, p * p * u / max(p * p - q * q, 1e-300), 0.0)
    y0 = q * np.sqrt(np.clip(1.0 - (x0 / p) ** 2, 0.0, None))
    return np.where(axis, np.hypot(x0 - u, y0 - v), d)


def build_domain(spec: Mapping) -> ConvexDomain:
    """Build a domain from a mapping such as ``{"kind": "disk", "radius": 1}``.

    Recognized keys: ``interval`` uses ``a``/``b`` (or ``endpoints``);
    ``disk`` uses ``center``/``radius``; ``ellipse`` uses ``center`` and
    ``semi_axes``.
    """
    kind = spec["kind"]
    if kind == "interval":
        a, b = spec.get("endpoints", (spec.get("a", 0.0), spec.get("b", 1.0)))
        return ConvexDomain("interval", (a, b))
    center = tuple(spec.get("center", (0.0, 0.0)))
    if kind == "disk":
        return ConvexDomain("disk", (*center, spec.get("radius", 1.0)))
    if kind == "ellipse":
        p, q = spec["semi_axes"]
        return ConvexDomain("ellipse", (*center, p, q))
    raise GeometryError(f"unknown domain kind {kind!r}")


@dataclass(eq=False)
class Grid:
    """Nodes of a Cartesian lattice inside a domain plus snapped boundary nodes.

    Arrays are indexed by node. ``neighbors[i, 2k]`` / ``neighbors[i, 2k+1]``
    are the minus / plus neighbors of interior node ``i`` along axis ``k``
    at distances ``arms[i, 2k]`` / ``arms[i, 2k+1]``; rows of boundary nodes
    hold -1 and NaN. ``parents[b, k]`` is the interior node a boundary node
    was reached from along axis ``k`` (-1 if none). ``lattice`` holds the
    integer lattice index of lattice nodes; off-lattice boundary nodes carry
    the index of their parent and ``on_lattice`` is False.
    """

    domain: ConvexDomain
    h: float
    origin: np.ndarray
    points: np.ndarray
    is_boundary: np.ndarray
    neighbors: np.ndarray
    arms: np.ndarray
    normals: np.ndarray
    parents: np.ndarray
    lattice: np.ndarray
    on_lattice: np.ndarray
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def interior(self) -> np.ndarray:
        return ~self.is_boundary

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(~self.is_boundary))

    def node_at(self, lattice_index) -> int:
        """Index of the lattice node with the given integer index, or -1."""
        if not self._index:
            idx = np.flatnonzero(self.on_lattice)
            self._index.update(
                {tuple(k): int(i) for k, i in zip(self.lattice[idx].tolist(), idx)}
            )
        return self._index.get(tuple(int(v) for v in lattice_index), -1)

    def classify(self, x) -> np.ndarray:
        """INTERIOR / BOUNDARY / EXTERIOR label for arbitrary points."""
        g = self.domain.level(x)
        tol = _on_boundary_tol(self.domain, self.h)
        return np.where(np.abs(g) <= tol, BOUNDARY, np.where(g < 0, INTERIOR, EXTERIOR))

    def distance_to_boundary(self) -> np.ndarray:
        d = self.domain.distance_to_boundary(self.points)
        d[self.is_boundary] = 0.0
        return d

    def diameter(self) -> float:
        """Largest pairwise node distance."""
        pts = self.points
        if self.dim == 1:
            return float(pts[:, 0].max() - pts[:, 0].min())
        hull = pts[ConvexHull(pts).vertices]
        d = hull[:, None, :] - hull[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())


def _on_boundary_tol(domain: ConvexDomain, h: float) -> float:
    return 1e-9 * h


def discretize(domain: ConvexDomain, h: float, origin=None) -> Grid:
    """Lattice ``origin + h Z^N`` restricted to the domain, with snapped boundary.

    The default origin is the left endpoint for intervals and the center for
    disks and ellipses. ``h`` must satisfy ``0 < h <= diameter/4``.
    """
    h = float(h)
    if not (h > 0 and h <= domain.diameter / 4 * (1 + 1e-12)):
        raise GeometryError(f"spacing h={h} must lie in (0, diameter/4]")
    if origin is None:
        origin = np.array([domain.params[0]]) if domain.dim == 1 else domain.center
    origin = np.asarray(origin, dtype=float).reshape(domain.dim)
    if domain.dim == 1:
        return _discretize_1d(domain, h, origin)
    return _discretize_2d(domain, h, origin)


def _discretize_1d(domain, h, origin):
    a, b = domain.params
    tol = _on_boundary_tol(domain, h)
    i0 = int(np.floor((a - origin[0]) / h)) - 1
    i1 = int(np.ceil((b - origin[0]) / h)) + 1
    idx = np.arange(i0, i1 + 1)
    x = origin[0] + idx * h
    inside = (x > a + tol) & (x < b - tol)
    idx = idx[inside]
    x = x[inside]
    if len(x) == 0:
        raise GeometryError("discretization has no interior nodes")
    pts = np.concatenate([[a], x, [b]])[:, None]
    n = len(pts)
    is_b = np.zeros(n, bool)
    is_b[[0, -1]] = True
    nb = np.full((n, 2), -1)
    arms = np.full((n, 2), np.nan)
    k = np.arange(1, n - 1)
    nb[k, 0], nb[k, 1] = k - 1, k + 1
    arms[k, 0] = pts[k, 0] - pts[k - 1, 0]
    arms[k, 1] = pts[k + 1, 0] - pts[k, 0]
    normals = np.full((n, 1), np.nan)
    normals[0], normals[-1] = -1.0, 1.0
    parents = np.full((n, 1), -1)
    parents[0], parents[-1] = 1, n - 2
    lattice = np.concatenate([[idx[0] - 1], idx, [idx[-1] + 1]])[:, None]
    on_lat = np.ones(n, bool)
    on_lat[0] = abs(a - (origin[0] + lattice[0, 0] * h)) <= tol
    on_lat[-1] = abs(b - (origin[0] + lattice[-1, 0] * h)) <= tol
    return Grid(domain, h, origin, pts, is_b, nb, arms, normals, parents, lattice, on_lat)


def _discretize_2d(domain, h, origin):
    tol = _on_boundary_tol(domain, h)
    c = domain.center
    half = 0.5 * domain.diameter
    lo = np.floor((c - half - origin) / h).astype(int) - 1
    hi = np.ceil((c + half - origin) / h).astype(int) + 1
    shape = tuple(hi - lo + 1)
    I, J = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
    lat = np.column_stack([I.ravel(), J.ravel()])
    pts = origin + lat * h
    g = domain.level(pts).reshape(shape)
    inside = g < -tol
    on_bdry = np.abs(g) <= tol
    if not inside.any():
        raise GeometryError("discretization has no interior nodes")

    # interior nodes first, in lexicographic lattice order
    code = np.full(shape, -1)
    n_int = int(inside.sum())
    code[inside] = np.arange(n_int)
    int_lat = lat[inside.ravel()]
    int_pts = pts[inside.ravel()]
    loc = int_lat - lo

    nb = np.full((n_int, 4), -1)
    arms = np.full((n_int, 4), np.nan)
    # boundary lattice points get ids on first use; snapped points are unique
    # per (interior node, direction)
    bl_code = np.full(shape, -1)
    b_points, b_lattice, b_on = [], [], []
    par_b, par_axis, par_node = [], [], []
    n_b = 0
    for col, (axis, sign) in enumerate(((0, -1), (0, 1), (1, -1), (1, 1))):
        nloc = loc.copy()
        nloc[:, axis] += sign
        j = code[nloc[:, 0], nloc[:, 1]]
        have = j >= 0
        nb[have, col] = j[have]
        arms[have, col] = h
        on = ~have & on_bdry[nloc[:, 0], nloc[:, 1]]
        cut = ~have & ~on

        rows = np.flatnonzero(on)
        if len(rows):
            fresh = rows[bl_code[nloc[rows, 0], nloc[rows, 1]] < 0]
            bl_code[nloc[fresh, 0], nloc[fresh, 1]] = n_b + np.arange(len(fresh))
            b_points.append(origin + (nloc[fresh] + lo) * h)
            b_lattice.append(nloc[fresh] + lo)
            b_on.append(np.ones(len(fresh), bool))
            n_b += len(fresh)
            ids = bl_code[nloc[rows, 0], nloc[rows, 1]]
            nb[rows, col] = n_int + ids
            arms[rows, col] = h
            par_b.append(ids)
            par_axis.append(np.full(len(rows), axis))
            par_node.append(rows)

        rows = np.flatnonzero(cut)
        if len(rows):
            dist = np.clip(_crossings(domain, int_pts[rows], axis, sign), tol, h)
            pos = int_pts[rows].copy()
            pos[:, axis] += sign * dist
            ids = n_b + np.arange(len(rows))
            b_points.append(pos)
            b_lattice.append(int_lat[rows])
            b_on.append(np.zeros(len(rows), bool))
            nb[rows, col] = n_int + ids
            arms[rows, col] = dist
            par_b.append(ids)
            par_axis.append(np.full(len(rows), axis))
            par_node.append(rows)
            n_b += len(rows)

    parents_b = np.full((n_b, 2), -1)
    for ids, axes, nodes in zip(par_b, par_axis, par_node):
        parents_b[ids, axes] = nodes

    n = n_int + n_b
    points = np.vstack([int_pts] + [p for p in b_points])
    is_b = np.zeros(n, bool)
    is_b[n_int:] = True
    neighbors = np.vstack([nb, np.full((n_b, 4), -1)])
    arm_all = np.vstack([arms, np.full((n_b, 4), np.nan)])
    normals = np.full((n, 2), np.nan)
    normals[n_int:] = domain.normal(points[n_int:])
    parents = np.vstack([np.full((n_int, 2), -1), parents_b])
    lattice = np.vstack([int_lat] + list(b_lattice))
    on_lattice = np.concatenate([np.ones(n_int, bool)] + list(b_on))
    return Grid(
        domain, h, origin, points, is_b, neighbors, arm_all, normals, parents, lattice, on_lattice
    )


def _crossings(domain, pts, axis, sign):
    p = domain.params
    other = 1 - axis
    c = p[:2]
    if domain.kind == "disk":
        semi, off = p[2], (pts[:, other] - c[other]) ** 2 / p[2] ** 2
    else:
        semi, off = p[2 + axis], (pts[:, other] - c[other]) ** 2 / p[2 + other] ** 2
    half = semi * np.sqrt(np.clip(1.0 - off, 0.0, None))
    if sign > 0:
        return c[axis] + half - pts[:, axis]
    return pts[:, axis] - (c[axis] - half)
