"""Experiment drivers: the Bernoulli-limit sequence and the Brunn-Minkowski sweep."""

from __future__ import annotations

import logging
import math
from dataclasses import astuple, dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import GridTooCoarse
from .freeboundary import (
    DistanceSpec,
    FreeBoundaryConfig,
    estimate_lambda_max,
    iterate_exterior,
    iterate_interior,
    supersolution_disk,
)
from .geometry import ConvexPolygon, Polygon, hausdorff, minkowski_combine
from .pde import ScalarField

log = logging.getLogger(__name__)


def near_boundary_gradient(fld: ScalarField, boundary: Polygon) -> float:
    """Median of ``|grad u|`` over annulus nodes between ``h`` and ``2h`` inside ``boundary``.

    Only nodes whose four neighbours are annulus nodes count, so every sample
    is a plain central difference.
    """
    h = fld.grid.h
    ann = fld.mask.annulus
    interior = ann.copy()
    interior[1:, :] &= ann[:-1, :]
    interior[:-1, :] &= ann[1:, :]
    interior[:, 1:] &= ann[:, :-1]
    interior[:, :-1] &= ann[:, 1:]
    interior[0, :] = interior[-1, :] = False
    interior[:, 0] = interior[:, -1] = False
    depth = -boundary.signed_distance(fld.grid.points()).reshape(fld.grid.shape)
    sel = interior & (depth >= h) & (depth <= 2 * h)
    if not sel.any():
        return math.nan
    u = fld.values
    gx = (u[:, 2:] - u[:, :-2]) / (2 * h)
    gy = (u[2:, :] - u[:-2, :]) / (2 * h)
    g = np.full(u.shape, np.nan)
    g[1:-1, 1:-1] = np.hypot(gx[1:-1, :], gy[:, 1:-1])
    return float(np.median(g[sel]))


@dataclass(frozen=True)
class BernoulliRow:
    n: int
    lam: float
    level: float
    hausdorff_prev: float
    nesting_excess: float
    grad_stat: float
    equivalent_radius: float
    iterations: int
    condition_residual: float


@dataclass
class BernoulliReport:
    omega: float
    rows: list[BernoulliRow] = field(default_factory=list)
    boundaries: list[Polygon] = field(default_factory=list)
    fields: list[ScalarField] = field(default_factory=list)

    def is_nested(self, tol: float) -> bool:
        return all(r.nesting_excess <= tol for r in self.rows[1:])

    def table(self) -> tuple[list[str], list[tuple]]:
        cols = ["n", "lambda", "level", "hausdorff_prev", "nesting_excess", "grad_stat",
                "equivalent_radius", "iterations", "condition_residual"]
        return cols, [astuple(r) for r in self.rows]


def bernoulli_lambdas(lambda0: float, n_steps: int, h: float) -> list[float]:
    """``lambda0 * 2**-n`` for ``n < n_steps``, dropping values below ``2h``."""
    if n_steps < 3:
        raise ValueError("need at least 3 steps")
    lams = [lambda0 * 2.0**-n for n in range(n_steps)]
    kept = [lam for lam in lams if lam >= 2 * h]
    if len(kept) < len(lams):
        log.warning("dropped %d lambda values below 2h = %.4g", len(lams) - len(kept), 2 * h)
    if not kept:
        raise GridTooCoarse("every lambda in the sequence is below 2h")
    return kept


def run_converge_bernoulli(
    K: ConvexPolygon, omega: float, lambda0: float, n_steps: int, cfg: FreeBoundaryConfig
) -> BernoulliReport:
    """Exterior solutions for ``lambda_n = lambda0 / 2**n`` with ``l_n = omega * lambda_n``.

    Each run starts from the previous solution, itself a supersolution of the
    next problem; the first starts from a disk supersolution.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    h = cfg.h
    report = BernoulliReport(omega)
    prev: Polygon | None = None
    for n, lam in enumerate(bernoulli_lambdas(lambda0, n_steps, h)):
        spec = DistanceSpec.bernoulli(omega, lam)
        if not spec.l < 1:
            raise ValueError(f"omega * lambda = {spec.l} must stay below 1")
        start = supersolution_disk(K, spec, cfg.pde.p) if prev is None else prev
        fld, boundary, trace = iterate_exterior(K, spec, cfg, start)
        if prev is None:
            step, excess = math.nan, math.nan
        else:
            step = hausdorff(prev, boundary, pitch=h / 4)
            excess = float(np.max(prev.signed_distance(boundary.sample_boundary(h / 4))))
        row = BernoulliRow(
            n,
            lam,
            spec.l,
            step,
            excess,
            near_boundary_gradient(fld, boundary),
            math.sqrt(boundary.area / math.pi),
            len(trace),
            trace.last.condition_residual,
        )
        log.info("bernoulli n=%d lambda=%.4g grad=%.4f", n, lam, row.grad_stat)
        report.rows.append(row)
        report.boundaries.append(boundary)
        report.fields.append(fld)
        prev = boundary
    return report


@dataclass(frozen=True)
class BrunnMinkowskiRow:
    t: float
    lambda_max: float
    interpolated: float
    deficit: float
    lam: float
    inclusion_margin: float


@dataclass
class BrunnMinkowskiReport:
    rows: list[BrunnMinkowskiRow] = field(default_factory=list)
    domains: list[ConvexPolygon] = field(default_factory=list)
    inner_sets: list[Polygon] = field(default_factory=list)

    def table(self) -> tuple[list[str], list[tuple]]:
        cols = ["t", "lambda_max", "interpolated", "deficit", "lambda", "inclusion_margin"]
        return cols, [astuple(r) for r in self.rows]


def run_brunn_minkowski(
    Omega0: ConvexPolygon,
    Omega1: ConvexPolygon,
    l: float,
    p: float,
    t_grid: Sequence[float],
    cfg: FreeBoundaryConfig,
    fraction: float = 0.8,
) -> BrunnMinkowskiReport:
    """Concavity of the Bernoulli constant along Minkowski combinations.

    The endpoint distances are ``fraction`` times the estimated constants, so
    every interpolated distance stays below the constant of its domain when
    the inequality holds.  The inclusion margin is the smallest inward depth
    of the vertices of ``(1-t)K0 + tK1`` inside ``K_t``.
    """
    ts = [float(t) for t in t_grid]
    if any(not 0 <= t <= 1 for t in ts):
        raise ValueError("t values must lie in [0, 1]")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    cfg = replace(cfg, pde=replace(cfg.pde, p=p))

    def solve_end(Om):
        lmax = estimate_lambda_max(Om, l, p, cfg)
        lam = fraction * lmax
        _, K, _ = iterate_interior(Om, DistanceSpec(l, lam), cfg)
        return lmax, lam, K

    lmax0, lam0, K0 = solve_end(Omega0)
    lmax1, lam1, K1 = solve_end(Omega1)
    report = BrunnMinkowskiReport()
    for t in ts:
        Om_t = minkowski_combine(Omega0, Omega1, t)
        interp = (1 - t) * lmax0 + t * lmax1
        lam_t = (1 - t) * lam0 + t * lam1
        if t == 0:
            lmax_t, K_t = lmax0, K0
        elif t == 1:
            lmax_t, K_t = lmax1, K1
        else:
            lmax_t = estimate_lambda_max(Om_t, l, p, cfg)
            _, K_t, _ = iterate_interior(Om_t, DistanceSpec(l, lam_t), cfg)
        combo = minkowski_combine(ConvexPolygon(K0.vertices), ConvexPolygon(K1.vertices), t)
        margin = float(np.min(-K_t.signed_distance(combo.vertices)))
        log.info("brunn-minkowski t=%.3g deficit=%.4g margin=%.4g", t, lmax_t - interp, margin)
        report.rows.append(BrunnMinkowskiRow(t, lmax_t, interp, lmax_t - interp, lam_t, margin))
        report.domains.append(Om_t)
        report.inner_sets.append(K_t)
    return report


__all__ = [
    "BernoulliReport",
    "BernoulliRow",
    "BrunnMinkowskiReport",
    "BrunnMinkowskiRow",
    "bernoulli_lambdas",
    "near_boundary_gradient",
    "run_brunn_minkowski",
    "run_converge_bernoulli",
]
