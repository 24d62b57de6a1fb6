"""Planar geometry on which the solvers are built.

Polygons are stored as counterclockwise ``(n, 2)`` float arrays.  Grids are
node centered with a single spacing ``h``; node values are indexed
``values[j, i]`` with ``x = x0 + i*h`` and ``y = y0 + j*h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, EmptyAnnulus, LevelNotPresent

INNER = 1
ANNULUS = 0
OUTER = 2

# order of the neighbour directions used by RegionMask.theta
DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))

THETA_MIN = 1e-3
_BRUTE_FORCE_SEGMENTS = 64
_KD_NEIGHBOURS = 16


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of points, got shape {pts.shape}")
    return pts


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (
        b[..., 0] - o[..., 0]
    )


def shoelace_area(vertices) -> float:
    """Signed area of a closed vertex loop (positive when counterclockwise)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


# ---------------------------------------------------------------------------
# distances to segment soups


def point_segment_distances(points, seg_a, seg_b) -> np.ndarray:
    """Minimum distance from each point to a set of segments (brute force, chunked)."""
    pts = _as_points(points)
    a = np.asarray(seg_a, dtype=float).reshape(-1, 2)
    b = np.asarray(seg_b, dtype=float).reshape(-1, 2)
    if len(a) == 0:
        raise ValueError("no segments")
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    dd_safe = np.where(dd > 0, dd, 1.0)
    out = np.empty(len(pts))
    chunk = max(1, 4_000_000 // len(a))
    for s in range(0, len(pts), chunk):
        p = pts[s : s + chunk, None, :]
        w = p - a[None, :, :]
        t = np.einsum("nmk,mk->nm", w, d) / dd_safe
        t = np.clip(np.where(dd > 0, t, 0.0), 0.0, 1.0)
        diff = w - t[..., None] * d[None, :, :]
        out[s : s + chunk] = np.sqrt(np.min(np.einsum("nmk,nmk->nm", diff, diff), axis=1))
    return out


def _segment_distances_pruned(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact distances using a k-d tree over segment midpoints.

    The true nearest segment has its midpoint within ``d + L/2`` of the point
    (``L`` the longest segment), so the candidate set is complete whenever the
    k-th midpoint is farther than that.  Uncertain points are retried with four
    times as many candidates until ``k`` covers every segment.
    """
    mid = 0.5 * (a + b)
    half = 0.5 * float(np.max(np.linalg.norm(b - a, axis=1)))
    tree = cKDTree(mid)
    best = np.empty(len(pts))
    todo = np.arange(len(pts))
    k = min(_KD_NEIGHBOURS, len(a))
    while len(todo):
        if k >= len(a):
            best[todo] = point_segment_distances(pts[todo], a, b)
            break
        q = pts[todo]
        dk, idx = tree.query(q, k=k)
        if k == 1:
            dk, idx = dk[:, None], idx[:, None]
        ca, cb = a[idx], b[idx]
        d = cb - ca
        dd = np.einsum("nmk,nmk->nm", d, d)
        w = q[:, None, :] - ca
        t = np.clip(np.einsum("nmk,nmk->nm", w, d) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
        diff = w - t[..., None] * d
        cand = np.sqrt(np.min(np.einsum("nmk,nmk->nm", diff, diff), axis=1))
        sure = dk[:, -1] > cand + half
        best[todo[sure]] = cand[sure]
        todo = todo[~sure]
        k = min(4 * k, len(a))
    return best


def segment_distances(points, seg_a, seg_b) -> np.ndarray:
    pts = _as_points(points)
    a = np.asarray(seg_a, dtype=float).reshape(-1, 2)
    b = np.asarray(seg_b, dtype=float).reshape(-1, 2)
    if len(a) <= _BRUTE_FORCE_SEGMENTS or len(pts) < 32:
        return point_segment_distances(pts, a, b)
    return _segment_distances_pruned(pts, a, b)


# ---------------------------------------------------------------------------
# polygons


def _clean_loop(v: np.ndarray, tol: float) -> np.ndarray:
    keep = [v[0]]
    for p in v[1:]:
        if np.hypot(*(p - keep[-1])) > tol:
            keep.append(p)
    while len(keep) > 1 and np.hypot(*(keep[0] - keep[-1])) <= tol:
        keep.pop()
    return np.array(keep)


class Polygon:
    """Simple closed polygon, stored counterclockwise.

    Used directly for the non-convex iterates of the experimental
    ``convexify=False`` mode; :class:`ConvexPolygon` is the workhorse.
    """

    def __init__(self, vertices, tol: float | None = None):
        v = _as_points(vertices).copy()
        if len(v) >= 2 and np.allclose(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 3:
            raise DegenerateGeometry("a polygon needs at least 3 vertices")
        diam = float(np.hypot(*(v.max(axis=0) - v.min(axis=0))))
        if diam <= 0:
            raise DegenerateGeometry("polygon has zero extent")
        self.tol = 1e-9 * diam if tol is None else float(tol)
        v = _clean_loop(v, self.tol)
        if len(v) < 3:
            raise DegenerateGeometry("fewer than 3 distinct vertices")
        if shoelace_area(v) < 0:
            v = v[::-1].copy()
        v.setflags(write=False)
        self._v = v

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    def __len__(self) -> int:
        return len(self._v)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={len(self)}, area={self.area:.6g})"

    @property
    def area(self) -> float:
        return shoelace_area(self._v)

    @property
    def perimeter(self) -> float:
        return float(np.sum(np.linalg.norm(np.roll(self._v, -1, axis=0) - self._v, axis=1)))

    @property
    def centroid(self) -> np.ndarray:
        v = self._v
        w = np.roll(v, -1, axis=0)
        c = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = 0.5 * c.sum()
        return np.array([((v[:, 0] + w[:, 0]) * c).sum(), ((v[:, 1] + w[:, 1]) * c).sum()]) / (6 * a)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self._v.min(axis=0)
        hi = self._v.max(axis=0)
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])

    @property
    def diameter(self) -> float:
        x0, x1, y0, y1 = self.bbox
        return math.hypot(x1 - x0, y1 - y0)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self._v, np.roll(self._v, -1, axis=0)

    def sample_boundary(self, pitch: float) -> np.ndarray:
        """Points along the boundary with spacing at most ``pitch``; vertices included."""
        a, b = self.edges()
        out = []
        for p, q in zip(a, b):
            n = max(1, int(math.ceil(np.hypot(*(q - p)) / pitch)))
            t = np.arange(n)[:, None] / n
            out.append(p + t * (q - p))
        return np.concatenate(out)

    def contains_points(self, points) -> np.ndarray:
        """Even-odd point-in-polygon test."""
        pts = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        a, b = self.edges()
        for (x1, y1), (x2, y2) in zip(a, b):
            cond = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= cond & (x < xc)
        return inside

    def boundary_distance(self, points) -> np.ndarray:
        a, b = self.edges()
        return segment_distances(points, a, b)

    def signed_distance(self, points) -> np.ndarray:
        """Negative inside, positive outside."""
        d = self.boundary_distance(points)
        return np.where(self.contains_points(points), -d, d)

    def first_crossing(self, start, end) -> np.ndarray:
        """Parameter ``t`` in [0, 1] of the first boundary crossing on each segment ``start -> end``.

        Returns 1.0 where no crossing is found.
        """
        p = _as_points(start)
        r = _as_points(end) - p
        a, b = self.edges()
        s = b - a
        t_best = np.ones(len(p))
        chunk = max(1, 2_000_000 // len(a))
        for k in range(0, len(p), chunk):
            pp, rr = p[k : k + chunk, None, :], r[k : k + chunk, None, :]
            denom = rr[..., 0] * s[None, :, 1] - rr[..., 1] * s[None, :, 0]
            qp = a[None, :, :] - pp
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (qp[..., 0] * s[None, :, 1] - qp[..., 1] * s[None, :, 0]) / denom
                u = (qp[..., 0] * rr[..., 1] - qp[..., 1] * rr[..., 0]) / denom
            ok = (denom != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
            t = np.where(ok, t, np.inf)
            t_best[k : k + chunk] = np.minimum(np.min(t, axis=1), 1.0)
        return t_best

    def is_convex(self, tol: float | None = None) -> bool:
        tol = self.tol * self.diameter if tol is None else tol
        v = self._v
        c = _cross(v, np.roll(v, -1, axis=0), np.roll(v, -2, axis=0))
        return bool(np.all(c >= -tol))

    def translated(self, offset) -> "Polygon":
        return type(self)(self._v + np.asarray(offset, dtype=float))

    def scaled(self, factor: float, center=(0.0, 0.0)) -> "Polygon":
        c = np.asarray(center, dtype=float)
        return type(self)(c + factor * (self._v - c))


class ConvexPolygon(Polygon):
    """Convex polygon; the representation of K, Omega and convexified iterates."""

    def __init__(self, vertices, tol: float | None = None):
        super().__init__(vertices, tol)
        if not self.is_convex():
            raise DegenerateGeometry("vertex loop is not convex")
        a, b = self.edges()
        e = b - a
        length = np.linalg.norm(e, axis=1)
        self._normals = np.column_stack([e[:, 1], -e[:, 0]]) / length[:, None]
        self._offsets = np.einsum("ij,ij->i", self._normals, a)

    @classmethod
    def regular(cls, radius: float, n: int = 64, center=(0.0, 0.0), phase: float = 0.0) -> "ConvexPolygon":
        """Regular n-gon with vertices on the circle of the given radius."""
        ang = phase + 2 * np.pi * np.arange(n) / n
        c = np.asarray(center, dtype=float)
        return cls(c + radius * np.column_stack([np.cos(ang), np.sin(ang)]))

    @classmethod
    def rectangle(cls, width: float, height: float, center=(0.0, 0.0)) -> "ConvexPolygon":
        cx, cy = center
        w, h = width / 2, height / 2
        return cls([[cx - w, cy - h], [cx + w, cy - h], [cx + w, cy + h], [cx - w, cy + h]])

    @property
    def normals(self) -> np.ndarray:
        """Outward unit normals, one per edge."""
        return self._normals

    def support_offsets(self) -> np.ndarray:
        return self._offsets

    def halfplane_excess(self, points) -> np.ndarray:
        """``max_i (n_i . x - c_i)``: the exact signed distance inside, a lower bound outside."""
        pts = _as_points(points)
        out = np.empty(len(pts))
        chunk = max(1, 4_000_000 // len(self._offsets))
        for s in range(0, len(pts), chunk):
            out[s : s + chunk] = np.max(pts[s : s + chunk] @ self._normals.T - self._offsets, axis=1)
        return out

    def edge_side(self, points) -> np.ndarray:
        """``n_e . x - c_e`` for the edge ``e`` whose wedge from the centroid holds ``x``.

        Same sign as the signed distance, zero on the boundary; O(log n) per point.
        """
        pts = _as_points(points)
        c = self.centroid
        ang = np.arctan2(self._v[:, 1] - c[1], self._v[:, 0] - c[0])
        start = int(np.argmin(ang))
        ang = np.roll(ang, -start)
        a = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
        k = (np.searchsorted(ang, a, side="right") - 1) % len(ang)
        e = (k + start) % len(ang)
        return np.einsum("ij,ij->i", pts, self._normals[e]) - self._offsets[e]

    def contains_points(self, points) -> np.ndarray:
        return self.halfplane_excess(points) <= 0

    def signed_distance(self, points) -> np.ndarray:
        pts = _as_points(points)
        hp = self.halfplane_excess(pts)
        out = hp.copy()
        outside = hp > 0
        if np.any(outside):
            out[outside] = self.boundary_distance(pts[outside])
        return out

    def inner_parallel(self, distance: float) -> "ConvexPolygon":
        """The set of points at distance >= ``distance`` from the boundary (half-plane clipping)."""
        poly = self._v.copy()
        for n, c in zip(self._normals, self._offsets):
            poly = _clip_halfplane(poly, n, c - distance)
            if len(poly) < 3:
                raise DegenerateGeometry(f"inner parallel body at distance {distance} is empty")
        return ConvexPolygon(poly)


def _clip_halfplane(poly: np.ndarray, n: np.ndarray, c: float) -> np.ndarray:
    out = []
    m = len(poly)
    s = poly @ n - c
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        sp, sq = s[i], s[(i + 1) % m]
        if sp <= 0:
            out.append(p)
        if (sp < 0 < sq) or (sq < 0 < sp):
            out.append(p + (sp / (sp - sq)) * (q - p))
    return np.array(out).reshape(-1, 2)


def read_polygon(path) -> ConvexPolygon | Polygon:
    """Read a polygon text file: one ``x y`` pair per line, ``#`` starts a comment."""
    pts = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'x y', got {raw!r}")
        pts.append((float(parts[0]), float(parts[1])))
    poly = Polygon(pts)
    if poly.is_convex():
        return ConvexPolygon(poly.vertices)
    return poly


def write_polygon(poly: Polygon, path, comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in poly.vertices)
    Path(path).write_text("\n".join(lines) + "\n")


def contains(poly: Polygon, x, tol: float = 0.0) -> bool:
    """True iff ``x`` is inside ``poly`` or within ``tol`` of its boundary."""
    return bool(poly.signed_distance(_as_points(x))[0] <= tol)


def chebyshev_ball(poly: ConvexPolygon) -> tuple[np.ndarray, float]:
    """Center and radius of the largest inscribed disk."""
    n, c = poly.normals, poly.support_offsets()
    a_ub = np.column_stack([n, np.ones(len(n))])
    res = linprog([0.0, 0.0, -1.0], A_ub=a_ub, b_ub=c, bounds=[(None, None), (None, None), (0, None)])
    if not res.success:
        raise DegenerateGeometry(f"inradius LP failed: {res.message}")
    return res.x[:2], float(res.x[2])


# ---------------------------------------------------------------------------
# hull and Minkowski combinations


def convex_hull(points) -> ConvexPolygon:
    """Counterclockwise convex hull (monotone chain); collinear points are dropped."""
    pts = np.unique(_as_points(points), axis=0)
    if len(pts) < 3:
        raise DegenerateGeometry("need at least 3 distinct points for a hull")

    def half(seq):
        chain: list[np.ndarray] = []
        for p in seq:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise DegenerateGeometry("points are collinear")
    return ConvexPolygon(hull)


def _edge_start(v: np.ndarray) -> int:
    return int(np.lexsort((v[:, 0], v[:, 1]))[0])


def _support_direction(polys: list[np.ndarray]) -> np.ndarray:
    """A direction in which every polygon has a single clearly extreme vertex."""
    best, best_gap = None, -1.0
    for a in 0.3 + 0.7 * np.arange(16):
        d = np.array([math.cos(a), math.sin(a)])
        gap = math.inf
        for v in polys:
            s = np.sort(v @ d)
            gap = min(gap, (s[-1] - s[-2]) / (s[-1] - s[0] + 1e-300))
        if gap > best_gap:
            best, best_gap = d, gap
    return best


def minkowski_combine(p0: ConvexPolygon, p1: ConvexPolygon, t: float) -> ConvexPolygon:
    """Exact ``(1-t) P0 + t P1`` by merging the edge sequences in angular order."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return ConvexPolygon(p0.vertices)
    if t == 1.0:
        return ConvexPolygon(p1.vertices)
    parts = []
    scaled = [(1.0 - t) * p0.vertices, t * p1.vertices]
    for v in scaled:
        v = np.roll(v, -_edge_start(v), axis=0)
        parts.append(np.roll(v, -1, axis=0) - v)
    edges = np.concatenate(parts)
    ang = np.mod(np.arctan2(edges[:, 1], edges[:, 0]), 2 * np.pi)
    edges = edges[np.argsort(ang, kind="stable")]
    # merge parallel edges so every direction appears once; the test is on the cross
    # product against the polygon size because rounding in short edges is absolute
    scale = max(p0.diameter, p1.diameter)

    def parallel(a: np.ndarray, b: np.ndarray) -> bool:
        cross = a[0] * b[1] - a[1] * b[0]
        return a @ b > 0 and abs(cross) <= 1e-12 * scale * (np.hypot(*a) + np.hypot(*b))

    merged: list[np.ndarray] = []
    for e in edges:
        if np.hypot(*e) <= 1e-12 * scale:
            continue
        if merged and parallel(merged[-1], e):
            merged[-1] = merged[-1] + e
        else:
            merged.append(e)
    if len(merged) >= 2 and parallel(merged[0], merged[-1]):
        merged[0] = merged[0] + merged.pop()
    if len(merged) < 3:
        raise DegenerateGeometry("Minkowski combination has fewer than 3 distinct normals")
    verts = np.cumsum(np.vstack([np.zeros(2), merged[:-1]]), axis=0)
    # place the chain by its support point, which is additive; the lowest vertex is not
    # when an edge direction sits on the angle cut at 0
    d = _support_direction(scaled)
    anchor = sum(v[np.argmax(v @ d)] for v in scaled)
    return ConvexPolygon(verts + (anchor - verts[np.argmax(verts @ d)]))


# ---------------------------------------------------------------------------
# grids and masks


@dataclass(frozen=True)
class Grid2D:
    origin: tuple[float, float]
    h: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.nx < 8 or self.ny < 8:
            raise ValueError("a grid needs at least 8 nodes per axis")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def covering(cls, bbox: Sequence[float], h: float, margin: float = 0.0) -> "Grid2D":
        """Smallest grid aligned with the lattice ``h*Z^2`` covering ``bbox`` (xmin, xmax, ymin, ymax)."""
        xmin, xmax, ymin, ymax = (float(b) for b in bbox)
        i0 = math.floor((xmin - margin) / h + 1e-9)
        i1 = math.ceil((xmax + margin) / h - 1e-9)
        j0 = math.floor((ymin - margin) / h + 1e-9)
        j1 = math.ceil((ymax + margin) / h - 1e-9)
        return cls((i0 * h, j0 * h), h, max(8, i1 - i0 + 1), max(8, j1 - j0 + 1))

    @property
    def shape(self) -> tuple[int, int]:
        return self.ny, self.nx

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.ny)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (
            self.origin[0],
            self.origin[0] + self.h * (self.nx - 1),
            self.origin[1],
            self.origin[1] + self.h * (self.ny - 1),
        )

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y)

    def points(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Node classification of a ring ``outer \\ inner`` with its Dirichlet data.

    ``theta[d, j, i]`` is the fraction of the grid step, along direction
    ``DIRECTIONS[d]``, from an ANNULUS node to the boundary it faces.  It is 1
    on edges that do not cross a boundary, and also everywhere when the mask
    carries no subcell information.
    """

    grid: Grid2D
    labels: np.ndarray
    dirichlet_inner: float
    dirichlet_outer: float
    theta: np.ndarray | None = None
    inner: Polygon | None = field(default=None, repr=False)
    outer: Polygon | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.labels.shape != self.grid.shape:
            raise ValueError("label array does not match the grid")
        if self.theta is None:
            object.__setattr__(self, "theta", np.ones((4,) + self.grid.shape))
        self.labels.setflags(write=False)
        self.theta.setflags(write=False)

    @property
    def annulus(self) -> np.ndarray:
        return self.labels == ANNULUS

    @property
    def annulus_count(self) -> int:
        return int(np.count_nonzero(self.labels == ANNULUS))

    def boundary_values(self) -> np.ndarray:
        """Full-grid array holding the Dirichlet value on INNER/OUTER nodes and NaN elsewhere."""
        out = np.full(self.grid.shape, np.nan)
        out[self.labels == INNER] = self.dirichlet_inner
        out[self.labels == OUTER] = self.dirichlet_outer
        return out

    def validate(self) -> None:
        ann = self.labels == ANNULUS
        if not ann.any():
            raise EmptyAnnulus("no ANNULUS nodes")
        comp, n = ndimage.label(ann)
        if n != 1:
            raise DegenerateGeometry(f"annulus splits into {n} components")
        pad = np.pad(self.labels, 1, constant_values=OUTER)
        for lab in (INNER, OUTER):
            touch = np.zeros_like(ann)
            for di, dj in DIRECTIONS:
                touch |= pad[1 + dj : 1 + dj + ann.shape[0], 1 + di : 1 + di + ann.shape[1]] == lab
            if not (touch & ann).any():
                name = "INNER" if lab == INNER else "OUTER"
                raise DegenerateGeometry(f"annulus does not touch any {name} node")


def _neighbour(arr: np.ndarray, d: int, fill) -> np.ndarray:
    di, dj = DIRECTIONS[d]
    pad = np.pad(arr, 1, constant_values=fill)
    ny, nx = arr.shape
    return pad[1 + dj : 1 + dj + ny, 1 + di : 1 + di + nx]


def _side(poly: Polygon, pts: np.ndarray) -> np.ndarray:
    """A function with the sign of the signed distance (zero on the boundary)."""
    if isinstance(poly, ConvexPolygon):
        return poly.edge_side(pts)
    return poly.signed_distance(pts)


def rasterize(
    poly_inner: Polygon,
    poly_outer: Polygon,
    grid: Grid2D,
    v_in: float,
    v_out: float,
    subcell: bool = True,
) -> RegionMask:
    """Classify grid nodes against the ring ``poly_outer \\ poly_inner``.

    With ``subcell`` the crossing fraction of every cut grid edge is stored so
    the solver can place Dirichlet data on the true boundary.
    """
    h = grid.h
    gap_at_vertices = -poly_outer.signed_distance(poly_inner.vertices)
    tol = 1e-9 * poly_outer.diameter
    if np.any(gap_at_vertices < -tol):
        raise DegenerateGeometry("inner body is not contained in the outer body")
    gap = float(gap_at_vertices.min())
    if isinstance(poly_inner, ConvexPolygon) and isinstance(poly_outer, ConvexPolygon):
        min_gap = gap
    else:
        # non-convex outer: the gap is not attained at inner vertices in general
        pts = poly_inner.sample_boundary(h / 4)
        min_gap = float(np.min(-poly_outer.signed_distance(pts)))
    if min_gap < 3 * h:
        raise EmptyAnnulus(f"boundary gap {min_gap:.4g} is below 3h = {3 * h:.4g}")
    x0, x1, y0, y1 = grid.bbox
    ox0, ox1, oy0, oy1 = poly_outer.bbox
    if ox0 < x0 or ox1 > x1 or oy0 < y0 or oy1 > y1:
        raise DegenerateGeometry("outer body extends beyond the grid")

    pts = grid.points()
    in_inner = _side(poly_inner, pts) <= 0
    out_outer = _side(poly_outer, pts) >= 0
    labels = np.full(len(pts), ANNULUS, dtype=np.int8)
    labels[out_outer] = OUTER
    labels[in_inner] = INNER
    labels = labels.reshape(grid.shape)

    theta = np.ones((4,) + grid.shape)
    if subcell:
        ann = labels == ANNULUS
        X, Y = grid.mesh()
        for d, (di, dj) in enumerate(DIRECTIONS):
            nb = _neighbour(labels, d, OUTER)
            for lab, poly in ((INNER, poly_inner), (OUTER, poly_outer)):
                cut = ann & (nb == lab)
                if not cut.any():
                    continue
                a = np.column_stack([X[cut], Y[cut]])
                b = a + h * np.array([di, dj], dtype=float)
                t = poly.first_crossing(a, b)
                theta[d][cut] = np.clip(t, THETA_MIN, 1.0)
    mask = RegionMask(grid, labels, float(v_in), float(v_out), theta, poly_inner, poly_outer)
    mask.validate()
    return mask


# ---------------------------------------------------------------------------
# polylines and level curves


@dataclass(frozen=True, eq=False)
class Polyline:
    """Chains of points; ``closed[k]`` says whether ring ``k`` wraps around."""

    rings: tuple[np.ndarray, ...]
    closed: tuple[bool, ...]

    def __post_init__(self):
        if len(self.rings) != len(self.closed):
            raise ValueError("rings and closed flags differ in length")

    @classmethod
    def from_polygon(cls, poly: Polygon) -> "Polyline":
        return cls((np.array(poly.vertices),), (True,))

    @classmethod
    def from_segment(cls, a, b) -> "Polyline":
        return cls((np.array([a, b], dtype=float),), (False,))

    @property
    def n_rings(self) -> int:
        return len(self.rings)

    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Segment start points, end points and ring ids."""
        a, b, ids = [], [], []
        for k, (r, c) in enumerate(zip(self.rings, self.closed)):
            if len(r) < 2:
                continue
            nxt = np.roll(r, -1, axis=0) if c else r[1:]
            cur = r if c else r[:-1]
            a.append(cur)
            b.append(nxt)
            ids.append(np.full(len(cur), k))
        if not a:
            return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
        return np.concatenate(a), np.concatenate(b), np.concatenate(ids)

    def points(self) -> np.ndarray:
        return np.concatenate(self.rings) if self.rings else np.zeros((0, 2))

    def ring_area(self, k: int) -> float:
        return abs(shoelace_area(self.rings[k])) if self.closed[k] else 0.0

    def largest_ring(self) -> np.ndarray:
        areas = [self.ring_area(k) for k in range(self.n_rings)]
        return self.rings[int(np.argmax(areas))]

    def sample(self, pitch: float) -> np.ndarray:
        a, b, _ = self.segments()
        out = []
        for p, q in zip(a, b):
            n = max(1, int(math.ceil(np.hypot(*(q - p)) / pitch)))
            out.append(p + (np.arange(n + 1)[:, None] / n) * (q - p))
        return np.concatenate(out)

    def write_csv(self, path) -> None:
        rows = ["x,y,ring_id"]
        for k, r in enumerate(self.rings):
            rows.extend(f"{x:.17g},{y:.17g},{k}" for x, y in r)
        Path(path).write_text("\n".join(rows) + "\n")


# segment table: case -> list of (edge, edge) with edges 0=bottom 1=right 2=top 3=left
_CASES: dict[int, tuple[tuple[int, int], ...]] = {
    1: ((3, 0),),
    2: ((0, 1),),
    3: ((3, 1),),
    4: ((1, 2),),
    6: ((0, 2),),
    7: ((3, 2),),
    8: ((2, 3),),
    9: ((0, 2),),
    11: ((1, 2),),
    12: ((3, 1),),
    13: ((0, 1),),
    14: ((3, 0),),
}
# saddles, keyed by (case, centre above level)
_SADDLES = {
    (5, True): ((0, 1), (2, 3)),
    (5, False): ((3, 0), (1, 2)),
    (10, True): ((3, 0), (1, 2)),
    (10, False): ((0, 1), (2, 3)),
}


def marching_squares(values: np.ndarray, grid: Grid2D, level: float) -> Polyline:
    """Contour of ``values`` at ``level`` with linear interpolation along cell edges."""
    v = np.asarray(values, dtype=float)
    ny, nx = v.shape
    finite = v[np.isfinite(v)]
    span = float(finite.max() - finite.min()) if finite.size else 0.0
    v = np.where(v == level, level + 1e-12 * (span if span > 0 else 1.0), v)
    above = v > level
    case = (
        above[:-1, :-1].astype(np.int16)
        | (above[:-1, 1:] << 1)
        | (above[1:, 1:] << 2)
        | (above[1:, :-1] << 3)
    )
    n_h = ny * (nx - 1)

    def edge_ids(jj, ii, e):
        # bottom/top are horizontal edges, left/right vertical ones
        return np.select(
            [e == 0, e == 1, e == 2, e == 3],
            [jj * (nx - 1) + ii, n_h + jj * nx + ii + 1, (jj + 1) * (nx - 1) + ii, n_h + jj * nx + ii],
        )

    seg_a: list[np.ndarray] = []
    seg_b: list[np.ndarray] = []
    centre = 0.25 * (v[:-1, :-1] + v[:-1, 1:] + v[1:, 1:] + v[1:, :-1]) > level
    for c, pairs in _CASES.items():
        jj, ii = np.nonzero(case == c)
        for e1, e2 in pairs:
            seg_a.append(edge_ids(jj, ii, np.full(jj.shape, e1)))
            seg_b.append(edge_ids(jj, ii, np.full(jj.shape, e2)))
    for (c, up), pairs in _SADDLES.items():
        jj, ii = np.nonzero((case == c) & (centre == up))
        for e1, e2 in pairs:
            seg_a.append(edge_ids(jj, ii, np.full(jj.shape, e1)))
            seg_b.append(edge_ids(jj, ii, np.full(jj.shape, e2)))
    ea = np.concatenate(seg_a)
    eb = np.concatenate(seg_b)
    if ea.size == 0:
        raise LevelNotPresent(f"level {level} is not crossed by the field")

    used = np.unique(np.concatenate([ea, eb]))
    pos = {}
    x, y = grid.x, grid.y
    horiz = used < n_h
    hj, hi = np.divmod(used[horiz], nx - 1)
    t = (level - v[hj, hi]) / (v[hj, hi + 1] - v[hj, hi])
    hp = np.column_stack([x[hi] + t * grid.h, y[hj]])
    vj, vi = np.divmod(used[~horiz] - n_h, nx)
    t = (level - v[vj, vi]) / (v[vj + 1, vi] - v[vj, vi])
    vp = np.column_stack([x[vi], y[vj] + t * grid.h])
    coords = np.empty((len(used), 2))
    coords[horiz] = hp
    coords[~horiz] = vp
    for k, e in enumerate(used.tolist()):
        pos[e] = k

    adj: dict[int, list[int]] = {}
    for a, b in zip(ea.tolist(), eb.tolist()):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    rings: list[np.ndarray] = []
    closed: list[bool] = []
    seen: set[int] = set()
    # open chains first, starting from their degree-1 ends
    starts = [e for e, nb in adj.items() if len(nb) == 1] + sorted(adj)
    for s in starts:
        if s in seen:
            continue
        chain = [s]
        seen.add(s)
        prev, cur = None, s
        is_closed = False
        while True:
            nxt = [n for n in adj[cur] if n != prev]
            if not nxt:
                break
            step = nxt[0]
            if step == s:
                is_closed = True
                break
            if step in seen:
                break
            chain.append(step)
            seen.add(step)
            prev, cur = cur, step
        if len(chain) >= 2:
            rings.append(coords[[pos[e] for e in chain]])
            closed.append(is_closed)
    return Polyline(tuple(rings), tuple(closed))


def extract_level_curve(field, level: float) -> Polyline:
    """Level curve ``{u = level}`` of a field carrying ``grid`` and ``values`` attributes."""
    v = np.asarray(field.values, dtype=float)
    finite = v[np.isfinite(v)]
    mask = getattr(field, "mask", None)
    if mask is not None:
        lo = min(mask.dirichlet_inner, mask.dirichlet_outer)
        hi = max(mask.dirichlet_inner, mask.dirichlet_outer)
        if not lo < level < hi:
            raise LevelNotPresent(f"level {level} is not strictly between {lo} and {hi}")
    if finite.size == 0 or not finite.min() < level < finite.max():
        raise LevelNotPresent(f"level {level} outside the field range")
    return marching_squares(np.where(np.isfinite(v), v, finite.min()), field.grid, level)


def distance_to_polyline(x, curve: Polyline) -> float:
    a, b, _ = curve.segments()
    if len(a) == 0:
        raise ValueError("empty polyline")
    return float(point_segment_distances(_as_points(x), a, b)[0])


def distances_to_polyline(points, curve: Polyline) -> np.ndarray:
    a, b, _ = curve.segments()
    if len(a) == 0:
        raise ValueError("empty polyline")
    return segment_distances(points, a, b)


def _as_polyline(obj) -> Polyline:
    if isinstance(obj, Polyline):
        return obj
    if isinstance(obj, Polygon):
        return Polyline.from_polygon(obj)
    raise TypeError(f"cannot treat {type(obj).__name__} as a curve")


def hausdorff(a, b, pitch: float | None = None) -> float:
    """Symmetric Hausdorff distance between two curves or polygon boundaries.

    One side is sampled at ``pitch`` and measured exactly against the other's
    segments, so the error is below ``pitch / 2``.
    """
    ca, cb = _as_polyline(a), _as_polyline(b)
    if pitch is None:
        pts = np.concatenate([ca.points(), cb.points()])
        pitch = 1e-3 * float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0))))
    sa, sb = ca.sample(pitch), cb.sample(pitch)
    d_ab = float(np.max(distances_to_polyline(sa, cb)))
    d_ba = float(np.max(distances_to_polyline(sb, ca)))
    return max(d_ab, d_ba)


def boundary_gap(inner: Polygon, outer: Polygon, pitch: float | None = None) -> float:
    """Distance between the boundaries of two nested bodies."""
    if pitch is None:
        pitch = 1e-3 * outer.diameter
    pts = inner.sample_boundary(pitch)
    return float(np.min(outer.boundary_distance(pts)))


def polygons_from_points(rings: Iterable[np.ndarray]) -> list[Polygon]:
    return [Polygon(r) for r in rings if len(r) >= 3]
