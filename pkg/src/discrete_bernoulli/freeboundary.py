"""Fixed-point shape iterations for the level-set distance free boundary problems.

Each outer step solves a capacitary problem on the current ring, extracts the
``l`` level curve and rebuilds the unknown boundary from the distance field to
that curve.  The rebuilt set is the zero sublevel set of a node function
``phi`` whose zero contour is located with subcell accuracy; with
``convexify`` it is replaced by its convex hull.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, EmptyAnnulus, GridTooCoarse, LambdaTooLarge, NonConvergence
from .geometry import (
    ConvexPolygon,
    Grid2D,
    Polygon,
    Polyline,
    boundary_gap,
    chebyshev_ball,
    convex_hull,
    distances_to_polyline,
    extract_level_curve,
    hausdorff,
    marching_squares,
    rasterize,
)
from .pde import PLaplaceConfig, ScalarField, nonlinear_residual, solve_p_capacitary
from .radial import RadialProblem, interior_extremum, solve_exterior_radius

log = logging.getLogger(__name__)

LambdaFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DistanceSpec:
    """Level ``l`` and prescribed distance, either a constant or a function of position.

    In function mode ``bounds = (c0, c1)`` must bracket every value the
    function returns.
    """

    l: float
    lam: float | LambdaFn
    omega: float | None = None
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if not 0 < self.l < 1:
            raise ValueError(f"level must lie in (0, 1), got {self.l}")
        if callable(self.lam):
            if self.bounds is None:
                raise ValueError("a distance function needs bounds (c0, c1)")
            c0, c1 = self.bounds
            if not 0 < c0 <= c1:
                raise ValueError("need 0 < c0 <= c1")
        elif not self.lam > 0:
            raise ValueError("lambda must be positive")

    @classmethod
    def bernoulli(cls, omega: float, lam: float) -> "DistanceSpec":
        """Preset ``l = omega * lam`` linking the level to the classical gradient condition."""
        return cls(omega * lam, lam, omega=omega)

    @property
    def is_constant(self) -> bool:
        return not callable(self.lam)

    @property
    def lower_bound(self) -> float:
        return float(self.lam) if self.is_constant else float(self.bounds[0])

    @property
    def upper_bound(self) -> float:
        return float(self.lam) if self.is_constant else float(self.bounds[1])

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_constant:
            return np.full(len(pts), float(self.lam))
        vals = np.asarray(self.lam(pts), dtype=float).reshape(len(pts))
        c0, c1 = self.bounds
        slack = 1e-12 * c1
        if np.any(vals < c0 - slack) or np.any(vals > c1 + slack):
            raise ValueError(f"distance function leaves its declared bounds [{c0}, {c1}]")
        return vals


@dataclass(frozen=True)
class FreeBoundaryConfig:
    grid: Grid2D
    pde: PLaplaceConfig = PLaplaceConfig()
    outer_tol: float | None = None
    outer_max: int = 80
    convexify: bool = True

    def __post_init__(self):
        if self.outer_tol is None:
            object.__setattr__(self, "outer_tol", 1.5 * self.grid.h)
        if self.outer_tol < self.grid.h:
            raise ValueError("outer_tol below the grid spacing is not meaningful")
        if self.outer_max < 1:
            raise ValueError("outer_max must be positive")

    @classmethod
    def covering(cls, bbox, h: float, margin: float | None = None, **kw) -> "FreeBoundaryConfig":
        margin = 4 * h if margin is None else margin
        return cls(Grid2D.covering(bbox, h, margin), **kw)

    @property
    def h(self) -> float:
        return self.grid.h


class TraceRow(NamedTuple):
    iter: int
    hausdorff_step: float
    condition_residual: float
    pde_residual: float
    annulus_nodes: int


@dataclass
class IterationTrace:
    rows: list[TraceRow] = field(default_factory=list)
    boundaries: list[Polygon] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: TraceRow, boundary: Polygon) -> None:
        self.rows.append(row)
        self.boundaries.append(boundary)

    @property
    def last(self) -> TraceRow:
        return self.rows[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def write_csv(self, path) -> None:
        lines = ["iter,hausdorff_step,condition_residual,pde_residual,annulus_nodes"]
        for r in self.rows:
            lines.append(
                f"{r.iter},{r.hausdorff_step:.17g},{r.condition_residual:.17g},"
                f"{r.pde_residual:.17g},{r.annulus_nodes}"
            )
        Path(path).write_text("\n".join(lines) + "\n")


class FreeBoundaryResult(NamedTuple):
    field: ScalarField
    boundary: Polygon
    trace: IterationTrace


class ConditionCheck(NamedTuple):
    max_residual: float
    per_sample: np.ndarray
    samples: np.ndarray


RHO_CAP = 0.9


def _settled(steps: list[float], tol: float) -> bool:
    """Stop when the last step and the geometric tail ``step*rho/(1-rho)`` are both below ``tol``.

    The step alone underestimates the distance to the fixed point once the
    contraction rate ``rho`` exceeds one half, and a single step says nothing
    about the rate, so at least two are needed.
    """
    if len(steps) < 2 or steps[-1] >= tol:
        return False
    rho = min(steps[-1] / steps[-2], RHO_CAP) if steps[-2] > 0 else 0.0
    return steps[-1] * rho / (1.0 - rho) < tol


def _require_resolution(spec: DistanceSpec, h: float) -> None:
    if spec.lower_bound < 2 * h:
        raise GridTooCoarse(f"lambda = {spec.lower_bound:.4g} is below 2h = {2 * h:.4g}")


def _level_curve(fld: ScalarField, level: float) -> Polyline:
    curve = extract_level_curve(fld, level)
    closed = [k for k in range(curve.n_rings) if curve.closed[k]]
    if not closed:
        return curve
    return Polyline(tuple(curve.rings[k] for k in closed), tuple(True for _ in closed))


def check_distance_condition(
    fld: ScalarField, boundary: Polygon, spec: DistanceSpec, curve: Polyline | None = None
) -> ConditionCheck:
    """``|dist(x, {u = l}) - lambda(x)|`` on boundary samples spaced ``h/2``."""
    if curve is None:
        curve = _level_curve(fld, spec.l)
    pts = boundary.sample_boundary(fld.grid.h / 2)
    res = np.abs(distances_to_polyline(pts, curve) - spec.evaluate(pts))
    return ConditionCheck(float(res.max()), res, pts)


def _zero_set_boundary(phi: np.ndarray, grid: Grid2D, convexify: bool, outer_only: bool) -> Polygon:
    """Boundary of ``{phi <= 0}`` from the zero contour of ``phi``."""
    if not np.any(phi <= 0):
        raise LambdaTooLarge("the updated set is empty")
    border = np.concatenate([phi[0], phi[-1], phi[:, 0], phi[:, -1]])
    if np.any(border <= 0):
        raise DegenerateGeometry("the updated set reaches the grid border; enlarge the grid")
    curve = marching_squares(phi, grid, 0.0)
    if convexify:
        pts = curve.largest_ring() if outer_only else curve.points()
        return convex_hull(pts)
    return Polygon(curve.largest_ring())


def _grid_points(grid: Grid2D) -> np.ndarray:
    return grid.points()


def _band_distances(pts: np.ndarray, curve: Polyline, target: np.ndarray, h: float) -> np.ndarray:
    """Distances to ``curve``, exact where they are within ``3h`` of ``target``.

    Elsewhere the distance to samples at pitch ``h/4`` is used; it overestimates
    by at most ``h/8``, which keeps the sign of ``dist - target`` and leaves
    every cell cut by the zero contour with exact corner values.
    """
    pitch = h / 4
    approx, _ = cKDTree(curve.sample(pitch)).query(pts)
    near = np.abs(approx - target) <= 3 * h + pitch
    out = approx
    out[near] = distances_to_polyline(pts[near], curve)
    return out


def exterior_update(fld: ScalarField, curve: Polyline, spec: DistanceSpec, convexify: bool = True) -> Polygon:
    """Boundary of ``{u >= l} ∪ {x : dist(x, {u = l}) <= lambda(x)}``."""
    grid = fld.grid
    pts = _grid_points(grid)
    u = fld.values.ravel()
    inside = u >= spec.l
    phi = np.empty(len(pts))
    lam = spec.evaluate(pts)
    phi[inside] = -lam[inside]
    out = ~inside
    phi[out] = _band_distances(pts[out], curve, lam[out], grid.h) - lam[out]
    return _zero_set_boundary(phi.reshape(grid.shape), grid, convexify, outer_only=True)


def interior_update(fld: ScalarField, curve: Polyline, spec: DistanceSpec, convexify: bool = True) -> Polygon:
    """Boundary of ``{u <= l} ∩ {x : dist(x, {u = l}) >= lambda}``."""
    grid = fld.grid
    pts = _grid_points(grid)
    u = fld.values.ravel()
    below = u <= spec.l
    lam = spec.evaluate(pts)
    phi = np.empty(len(pts))
    phi[~below] = lam[~below]
    phi[below] = lam[below] - _band_distances(pts[below], curve, lam[below], grid.h)
    phi = phi.reshape(grid.shape)
    if np.count_nonzero(phi <= 0) < 9:
        raise LambdaTooLarge("the inner set collapsed below 3x3 nodes")
    try:
        return _zero_set_boundary(phi, grid, convexify, outer_only=False)
    except DegenerateGeometry as exc:
        if "grid border" in str(exc):
            raise
        raise LambdaTooLarge(f"the inner set degenerated: {exc}") from exc


def supersolution_disk(
    K: Polygon, spec: DistanceSpec, p: float, factor: float = 1.5, n: int = 128
) -> ConvexPolygon:
    """A disk around ``K`` whose radial potential keeps its level set at distance ``factor*lambda``.

    By comparison with the radial capacitor this disk is a supersolution.
    """
    center, _ = chebyshev_ball(ConvexPolygon(convex_hull(K.vertices).vertices))
    r_enc = float(np.max(np.linalg.norm(K.vertices - center, axis=1)))
    R = solve_exterior_radius(p, 2, r_enc, spec.l, factor * spec.upper_bound)
    return ConvexPolygon.regular(R, n, center)


def iterate_exterior(
    K: Polygon, spec: DistanceSpec, cfg: FreeBoundaryConfig, omega0: Polygon
) -> FreeBoundaryResult:
    """Exterior problem: find Omega around fixed ``K`` with its boundary at distance lambda from ``{u = l}``.

    ``u`` is 1 on ``K`` and 0 outside Omega.  Returns the last solved pair
    whose update moved the boundary by less than ``cfg.outer_tol``.
    """
    h = cfg.h
    _require_resolution(spec, h)
    omega = omega0
    fld = None
    trace = IterationTrace()
    steps: list[float] = []
    step = math.inf
    for n in range(1, cfg.outer_max + 1):
        mask = rasterize(K, omega, cfg.grid, 1.0, 0.0)
        fld = solve_p_capacitary(mask, cfg.pde, warm_start=fld)
        curve = _level_curve(fld, spec.l)
        new = exterior_update(fld, curve, spec, cfg.convexify)
        step = hausdorff(omega, new, pitch=h / 4)
        cond = check_distance_condition(fld, omega, spec, curve).max_residual
        trace.append(TraceRow(n, step, cond, fld.residual, mask.annulus_count), omega)
        log.info("exterior %d: step %.4g residual %.4g", n, step, cond)
        steps.append(step)
        if _settled(steps, cfg.outer_tol):
            return FreeBoundaryResult(fld, omega, trace)
        omega = new
    raise NonConvergence("exterior iteration did not settle", cfg.outer_max, step)


def initial_inner_set(Omega: ConvexPolygon, spec: DistanceSpec) -> ConvexPolygon:
    """Points of Omega at distance at least lambda from its boundary."""
    try:
        return Omega.inner_parallel(spec.upper_bound)
    except DegenerateGeometry as exc:
        raise LambdaTooLarge(str(exc)) from exc


def iterate_interior(
    Omega: ConvexPolygon,
    spec: DistanceSpec,
    cfg: FreeBoundaryConfig,
    K0: Polygon | None = None,
) -> FreeBoundaryResult:
    """Interior problem: the largest K inside fixed Omega with ``dist(x, {u = l}) = lambda`` on its boundary.

    ``u`` is 0 on K and 1 outside Omega.  The iteration starts from the inner
    parallel body of Omega and shrinks towards the maximal solution.
    """
    if not spec.is_constant:
        raise ValueError("the interior iteration needs a constant distance")
    h = cfg.h
    _require_resolution(spec, h)
    K = initial_inner_set(Omega, spec) if K0 is None else K0
    fld = None
    trace = IterationTrace()
    steps: list[float] = []
    step = math.inf
    for n in range(1, cfg.outer_max + 1):
        try:
            mask = rasterize(K, Omega, cfg.grid, 0.0, 1.0)
        except EmptyAnnulus:
            if n == 1:
                raise LambdaTooLarge("initial inner set leaves no annulus") from None
            raise
        fld = solve_p_capacitary(mask, cfg.pde, warm_start=fld)
        curve = _level_curve(fld, spec.l)
        new = interior_update(fld, curve, spec, cfg.convexify)
        step = hausdorff(K, new, pitch=h / 4)
        cond = check_distance_condition(fld, K, spec, curve).max_residual
        trace.append(TraceRow(n, step, cond, fld.residual, mask.annulus_count), K)
        log.info("interior %d: step %.4g residual %.4g", n, step, cond)
        steps.append(step)
        if _settled(steps, cfg.outer_tol):
            return FreeBoundaryResult(fld, K, trace)
        K = new
    raise NonConvergence("interior iteration did not settle", cfg.outer_max, step)


class LambdaMaxSearch(NamedTuple):
    estimate: float
    lower: float
    upper: float
    inscribed_bound: float
    enclosing_bound: float
    probes: tuple[tuple[float, bool], ...]


def search_lambda_max(
    Omega: ConvexPolygon, l: float, p: float, cfg: FreeBoundaryConfig, probe_tol: float | None = None
) -> LambdaMaxSearch:
    """Bisection on the success of :func:`iterate_interior`.

    The bracket starts from the radial constants of the inscribed disk and of
    a disk enclosing Omega around the same centre, and is widened by ``2h``
    steps until the probes straddle the transition.  Probes stop on a step
    below ``probe_tol``; keep it small, since near ``lambda_max`` the shrinking
    sequence slows down before it collapses.
    """
    h = cfg.h
    probe_cfg = replace(cfg, outer_tol=cfg.outer_tol) if probe_tol is None else _with_tol(cfg, probe_tol)
    center, r_in = chebyshev_ball(Omega)
    r_out = float(np.max(np.linalg.norm(Omega.vertices - center, axis=1)))
    lam_in = interior_extremum(RadialProblem.interior(p, 2, 0.5 * r_in, r_in, l)).lambda_max
    lam_out = interior_extremum(RadialProblem.interior(p, 2, 0.5 * r_out, r_out, l)).lambda_max
    probes: list[tuple[float, bool]] = []

    def feasible(lam: float) -> bool:
        try:
            iterate_interior(Omega, DistanceSpec(l, lam), probe_cfg)
            ok = True
        except LambdaTooLarge:
            ok = False
        probes.append((lam, ok))
        log.info("lambda probe %.5g -> %s", lam, "feasible" if ok else "infeasible")
        return ok

    lo, hi = lam_in, max(lam_out, lam_in + 2 * h)
    while not feasible(lo):
        hi, lo = lo, lo - 2 * h
        if lo < 2 * h:
            raise GridTooCoarse("lambda_max bracket fell below 2h")
    while feasible(hi):
        lo, hi = hi, hi + 2 * h
    while hi - lo > 2 * h:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return LambdaMaxSearch(0.5 * (lo + hi), lo, hi, lam_in, lam_out, tuple(probes))


def _with_tol(cfg: FreeBoundaryConfig, tol: float) -> FreeBoundaryConfig:
    # bypass the outer_tol >= h guard: probes deliberately resolve sub-grid steps
    new = replace(cfg)
    object.__setattr__(new, "outer_tol", float(tol))
    return new


def estimate_lambda_max(
    Omega: ConvexPolygon, l: float, p: float, cfg: FreeBoundaryConfig, probe_tol: float | None = None
) -> float:
    """Numerical Bernoulli constant of Omega: the largest lambda with a solvable interior problem."""
    return search_lambda_max(Omega, l, p, cfg, probe_tol).estimate


# ---------------------------------------------------------------------------
# two-phase problem


@dataclass(frozen=True)
class JoiningFunction:
    """``g(x, q)`` coupling the two distances on the interface.

    ``ratio_bounds = (c1, c2)`` declare ``c1 <= g/q <= c2`` for ``q >= q0``.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ratio_bounds: tuple[float, float] = (0.0, math.inf)
    q0: float = 0.0
    name: str = "g"

    def __call__(self, points, q) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.fn(pts, np.asarray(q, dtype=float)), dtype=float)

    @classmethod
    def identity(cls) -> "JoiningFunction":
        return cls(lambda x, q: q.copy(), (1.0, 1.0), 0.0, "q")

    @classmethod
    def classical(cls, a: float | Callable[[np.ndarray], np.ndarray] = 1.0, alpha: float = 1.0) -> "JoiningFunction":
        """``g(x, q) = (a(x)**alpha + q**alpha)**(-1/alpha)``."""

        def fn(x, q):
            ax = a(x) if callable(a) else np.full(len(x), float(a))
            return (ax**alpha + q**alpha) ** (-1.0 / alpha)

        return cls(fn, (0.0, math.inf), 0.0, f"classical(alpha={alpha})")

    def check_hypotheses(self, points, qs) -> dict[str, bool]:
        """Probe continuity-free hypotheses on sample points and increasing ``qs``.

        Concavity along the interface is a user obligation and is not probed.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        qs = np.sort(np.asarray(qs, dtype=float))
        table = np.array([self(pts, np.full(len(pts), q)) for q in qs])
        c1, c2 = self.ratio_bounds
        big = qs >= max(self.q0, 1e-300)
        ratio = table[big] / qs[big, None] if np.any(big) else np.ones((1, 1))
        return {
            "positive": bool(np.all(table > 0)),
            "nondecreasing": bool(np.all(np.diff(table, axis=0) >= -1e-14)),
            "ratio_bounds": bool(np.all((ratio >= c1 - 1e-12) & (ratio <= c2 + 1e-12))),
        }


class TwoPhaseResult(NamedTuple):
    K2: Polygon
    fields: tuple[ScalarField, ScalarField]
    trace: IterationTrace
    separation: float
    joining_residual: float


def _vertex_normals(pts: np.ndarray) -> np.ndarray:
    tangent = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    n = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    return n / np.linalg.norm(n, axis=1)[:, None]


def _initial_interface(K1: Polygon, K3: Polygon, cfg: FreeBoundaryConfig) -> tuple[Polygon, float]:
    mask = rasterize(K1, K3, cfg.grid, 1.0, -1.0)
    full = solve_p_capacitary(mask, cfg.pde)
    h = cfg.h
    for eps in (-0.8, -0.7, -0.6, -0.5, -0.4, -0.3, -0.2, -0.1, 0.0):
        ring = _level_curve(full, eps).largest_ring()
        cand = convex_hull(ring) if cfg.convexify else Polygon(ring)
        if boundary_gap(cand, K3, h / 4) >= 3 * h and boundary_gap(K1, cand, h / 4) >= 3 * h:
            return cand, eps
    raise DegenerateGeometry("no sublevel set of the full potential fits between K1 and K3")


def joining_defect(
    u1: ScalarField, u2: ScalarField, pts: np.ndarray, g: JoiningFunction, l: float
) -> np.ndarray:
    """``G(x) = dist(x, {u1 = l}) - g(x, dist(x, {u2 = -l}))`` at interface points."""
    d1 = distances_to_polyline(pts, _level_curve(u1, l))
    d2 = distances_to_polyline(pts, _level_curve(u2, -l))
    return d1 - g(pts, d2)


def two_phase_iterate(
    K1: Polygon,
    K3: Polygon,
    g: JoiningFunction,
    l: float,
    p: float,
    cfg: FreeBoundaryConfig,
    gain: float = 0.5,
) -> TwoPhaseResult:
    """Interface K2 between K1 and K3 satisfying the joining condition.

    Boundary points of K2 move along the inward normal by
    ``clip(gain * G, -h, h)``: a positive defect means too much room on the
    inner side, so the interface shrinks.  Stops when ``max|G|`` drops below
    ``cfg.outer_tol``.
    """
    if not 0 < l < 1:
        raise ValueError("level must lie in (0, 1)")
    h = cfg.h
    if boundary_gap(K1, K3, h / 4) < 6 * h:
        raise EmptyAnnulus("K1 and K3 are closer than 6h")
    pde = replace(cfg.pde, p=p)
    K2, eps = _initial_interface(K1, K3, replace(cfg, pde=pde))
    log.info("two-phase start from the %.2f level set", eps)
    trace = IterationTrace()
    u1 = u2 = None
    flips = 0
    last_sign = 0.0
    worst = math.inf
    for n in range(1, cfg.outer_max + 1):
        m1 = rasterize(K1, K2, cfg.grid, 1.0, 0.0)
        m2 = rasterize(K2, K3, cfg.grid, 0.0, -1.0)
        u1 = solve_p_capacitary(m1, pde, warm_start=u1)
        u2 = solve_p_capacitary(m2, pde, warm_start=u2)
        pts = K2.sample_boundary(h)
        G = joining_defect(u1, u2, pts, g, l)
        k = int(np.argmax(np.abs(G)))
        worst = float(abs(G[k]))
        sign = math.copysign(1.0, G[k])
        if last_sign and sign != last_sign:
            flips += 1
            if flips >= 2:
                gain *= 0.5
                flips = 0
        else:
            flips = 0
        last_sign = sign
        moved = pts - np.clip(gain * G, -h, h)[:, None] * _vertex_normals(pts)
        new = convex_hull(moved) if cfg.convexify else Polygon(moved)
        step = hausdorff(K2, new, pitch=h / 4)
        trace.append(
            TraceRow(n, step, worst, max(u1.residual, u2.residual), m1.annulus_count + m2.annulus_count), K2
        )
        log.info("two-phase %d: max|G| %.4g gain %.3g", n, worst, gain)
        if worst < cfg.outer_tol:
            sep = boundary_gap(K1, K2, h / 4) / boundary_gap(K1, K3, h / 4)
            return TwoPhaseResult(K2, (u1, u2), trace, sep, worst)
        if boundary_gap(K1, new, h / 4) < 3 * h or boundary_gap(new, K3, h / 4) < 3 * h:
            raise DegenerateGeometry("the interface collapsed onto K1 or K3")
        K2 = new
    raise NonConvergence("two-phase relaxation did not settle", cfg.outer_max, worst)


def separation_ratio(K1: Polygon, K2: Polygon, K3: Polygon, pitch: float) -> float:
    return boundary_gap(K1, K2, pitch) / boundary_gap(K1, K3, pitch)


def interior_comparison_fields(
    Omega: ConvexPolygon, K_small: Polygon, K_large: Polygon, cfg: FreeBoundaryConfig
) -> tuple[ScalarField, ScalarField]:
    """Interior potentials for two nested inner bodies (helper for comparison checks)."""
    a = solve_p_capacitary(rasterize(K_small, Omega, cfg.grid, 0.0, 1.0), cfg.pde)
    b = solve_p_capacitary(rasterize(K_large, Omega, cfg.grid, 0.0, 1.0), cfg.pde)
    return a, b


def pde_residual_of(fld: ScalarField, p: float) -> float:
    return nonlinear_residual(fld, fld.mask, p)
