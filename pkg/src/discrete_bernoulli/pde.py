"""p-capacitary potentials of rings on a node-centred grid.

The operator ``div((|grad u|^2 + eps^2)^((p-2)/2) grad u)`` is discretised with
edge fluxes on the 5-point stencil.  Edges cut by a boundary end at the
crossing point (fraction ``theta`` of a step) where the Dirichlet value is
imposed, which keeps the matrix symmetric and the scheme second order away
from corners.  The nonlinearity is handled by Picard iteration with lagged
edge coefficients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import pyamg

from .errors import NonConvergence
from .geometry import ANNULUS, DIRECTIONS, Grid2D, RegionMask, _neighbour

log = logging.getLogger(__name__)


LINEAR_SOLVERS = ("auto", "direct", "amg", "cg")
# below this many unknowns a sparse LU beats multigrid setup
AUTO_DIRECT_MAX = 40_000


@dataclass(frozen=True)
class PLaplaceConfig:
    p: float = 2.0
    eps_reg: float = 1e-6
    picard_tol: float = 1e-6
    picard_max: int = 200
    linear_tol: float = 1e-10
    linear_max: int = 20000
    damping: float = 1.0
    linear_solver: str = "auto"

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.eps_reg < 0:
            raise ValueError("eps_reg must be non-negative")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass(eq=False)
class ScalarField:
    """Node values on a grid, optionally tied to the mask they were solved on."""

    grid: Grid2D
    values: np.ndarray
    mask: RegionMask | None = None
    iterations: int = 0
    residual: float = float("nan")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("value array does not match the grid")

    def at_nodes(self, i, j):
        return self.values[j, i]

    def sample(self, points) -> np.ndarray:
        """Bilinear interpolation at arbitrary points inside the grid."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.grid
        fx = (pts[:, 0] - g.origin[0]) / g.h
        fy = (pts[:, 1] - g.origin[1]) / g.h
        i = np.clip(np.floor(fx).astype(int), 0, g.nx - 2)
        j = np.clip(np.floor(fy).astype(int), 0, g.ny - 2)
        tx, ty = fx - i, fy - j
        v = self.values
        return (
            v[j, i] * (1 - tx) * (1 - ty)
            + v[j, i + 1] * tx * (1 - ty)
            + v[j + 1, i] * (1 - tx) * ty
            + v[j + 1, i + 1] * tx * ty
        )

    def write_csv(self, path) -> None:
        """Rows for ANNULUS nodes and the Dirichlet nodes bordering them."""
        X, Y = self.grid.mesh()
        if self.mask is None:
            keep = np.isfinite(self.values)
        else:
            ann = self.mask.annulus
            keep = ann.copy()
            for d in range(4):
                keep |= _neighbour(ann, d, False)
        rows = ["x,y,u"]
        rows.extend(
            f"{x:.17g},{y:.17g},{u:.17g}" for x, y, u in zip(X[keep], Y[keep], self.values[keep])
        )
        Path(path).write_text("\n".join(rows) + "\n")


class _Stencil:
    """Index bookkeeping for the ANNULUS unknowns of one mask."""

    def __init__(self, mask: RegionMask):
        self.mask = mask
        self.h = mask.grid.h
        ann = mask.annulus
        self.ann = ann
        idx = np.full(mask.grid.shape, -1, dtype=np.int64)
        self.n = int(ann.sum())
        idx[ann] = np.arange(self.n)
        bvals = mask.boundary_values()
        self.nb_idx = []
        self.nb_bval = []
        self.theta = []
        for d in range(4):
            self.nb_idx.append(_neighbour(idx, d, -1)[ann])
            # outside the grid counts as OUTER
            self.nb_bval.append(_neighbour(bvals, d, mask.dirichlet_outer)[ann])
            t = mask.theta[d][ann].copy()
            t[self.nb_idx[d] >= 0] = 1.0
            self.theta.append(t)
        self.inner_edge = [ix >= 0 for ix in self.nb_idx]

    def neighbour_values(self, u: np.ndarray) -> list[np.ndarray]:
        return [np.where(ok, u[np.maximum(ix, 0)], bv) for ix, ok, bv in zip(self.nb_idx, self.inner_edge, self.nb_bval)]

    def node_gradients(self, u: np.ndarray, nb: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Second-order non-uniform central differences using cut distances."""
        h = self.h
        out = []
        for plus, minus in ((0, 1), (2, 3)):
            dp, dm = self.theta[plus] * h, self.theta[minus] * h
            g = (dm * dm * (nb[plus] - u) + dp * dp * (u - nb[minus])) / (dp * dm * (dp + dm))
            out.append(g)
        return out[0], out[1]

    def edge_coefficients(self, u: np.ndarray, p: float, eps: float) -> list[np.ndarray]:
        nb = self.neighbour_values(u)
        gx, gy = self.node_gradients(u, nb)
        coeffs = []
        for d, (di, dj) in enumerate(DIRECTIONS):
            gn = (nb[d] - u) / (self.theta[d] * self.h)
            # tangential component: average over the two ends of an interior edge
            own = gy if di != 0 else gx
            other = np.where(self.inner_edge[d], own[np.maximum(self.nb_idx[d], 0)], own)
            gt = 0.5 * (own + other)
            if p == 2.0:
                coeffs.append(np.ones_like(u))
            else:
                coeffs.append((gn * gn + gt * gt + eps * eps) ** ((p - 2.0) / 2.0))
        return coeffs

    def residual(self, u: np.ndarray, coeffs: list[np.ndarray]) -> np.ndarray:
        nb = self.neighbour_values(u)
        h2 = self.h * self.h
        r = np.zeros_like(u)
        for d in range(4):
            r += coeffs[d] * (nb[d] - u) / self.theta[d]
        return r / h2

    def assemble(self, coeffs: list[np.ndarray]) -> tuple[sp.csr_matrix, np.ndarray]:
        rows, cols, vals = [], [], []
        diag = np.zeros(self.n)
        rhs = np.zeros(self.n)
        ar = np.arange(self.n)
        for d in range(4):
            w = coeffs[d] / self.theta[d]
            diag += w
            ok = self.inner_edge[d]
            rows.append(ar[ok])
            cols.append(self.nb_idx[d][ok])
            vals.append(-w[ok])
            rhs[~ok] += w[~ok] * self.nb_bval[d][~ok]
        rows.append(ar)
        cols.append(ar)
        vals.append(diag)
        a = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n)
        )
        return a, rhs


# Picard steps between rebuilds of the multigrid hierarchy
AMG_REUSE = 4


def _linear_solve(
    a: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, cfg: PLaplaceConfig, cache: dict | None = None
) -> np.ndarray:
    kind = cfg.linear_solver
    if kind == "auto":
        kind = "direct" if a.shape[0] <= AUTO_DIRECT_MAX else "amg"
    if kind == "direct":
        return spla.spsolve(a.tocsc(), b, permc_spec="MMD_AT_PLUS_A")
    if kind == "amg":
        r0 = np.linalg.norm(b - a @ x0)
        nb = np.linalg.norm(b)
        if r0 == 0 or nb == 0:
            return x0.copy()
        # relative to the warm-start residual, floored just above round-off; the Picard
        # residual is this one divided by h^2, so a looser floor stalls the outer loop
        target = max(cfg.linear_tol * r0, 2e-15 * nb)
        cache = {} if cache is None else cache
        if cache.get("uses", AMG_REUSE) >= AMG_REUSE:
            # the lagged coefficients drift slowly, so an older hierarchy still preconditions well
            cache["ml"] = pyamg.smoothed_aggregation_solver(a, symmetry="symmetric")
            cache["uses"] = 0
        cache["uses"] += 1
        x, info = spla.cg(a, b, x0=x0, rtol=0.0, atol=target, maxiter=min(cfg.linear_max, 500),
                          M=cache["ml"].aspreconditioner(cycle="V"))
        if info > 0:
            log.warning("AMG-preconditioned CG stopped after %d iterations", info)
        return x
    d = a.diagonal()
    pre = spla.LinearOperator(a.shape, matvec=lambda v: v / d)
    x, info = spla.cg(a, b, x0=x0, rtol=cfg.linear_tol, maxiter=cfg.linear_max, M=pre)
    if info > 0:
        log.warning("CG stopped after %d iterations without reaching linear_tol", info)
    return x


def solve_p_capacitary(
    mask: RegionMask, cfg: PLaplaceConfig | None = None, warm_start: ScalarField | None = None
) -> ScalarField:
    """p-capacitary potential of the ring described by ``mask``.

    Returns when the infinity norm of the discrete divergence drops below
    ``cfg.picard_tol``; raises :class:`NonConvergence` otherwise.
    """
    cfg = cfg or PLaplaceConfig()
    st = _Stencil(mask)
    lo = min(mask.dirichlet_inner, mask.dirichlet_outer)
    hi = max(mask.dirichlet_inner, mask.dirichlet_outer)
    if warm_start is not None and warm_start.grid == mask.grid:
        u = np.clip(np.nan_to_num(warm_start.values[st.ann], nan=0.5 * (lo + hi)), lo, hi)
    else:
        # harmonic start; a constant start makes the first lagged system near singular for p != 2
        ones = [np.ones(st.n) for _ in range(4)]
        a, b = st.assemble(ones)
        u = np.clip(_linear_solve(a, b, np.full(st.n, 0.5 * (lo + hi)), cfg), lo, hi)

    # lagged coefficients amplify errors along grad u by -(p-2); 2/p balances the spectrum
    damping = min(cfg.damping, 2.0 / cfg.p)
    coeffs = st.edge_coefficients(u, cfg.p, cfg.eps_reg)
    history: list[float] = []
    res = float("inf")
    cache: dict = {}
    for it in range(1, cfg.picard_max + 1):
        a, b = st.assemble(coeffs)
        u_new = _linear_solve(a, b, u, cfg, cache)
        u = u + damping * (u_new - u) if damping < 1.0 else u_new
        coeffs = st.edge_coefficients(u, cfg.p, cfg.eps_reg)
        res = float(np.max(np.abs(st.residual(u, coeffs))))
        history.append(res)
        log.debug("picard %d residual %.3e damping %.3g", it, res, damping)
        if res < cfg.picard_tol:
            break
        if len(history) >= 3 and history[-1] > history[-2] > history[-3] and damping > 1 / 64:
            damping *= 0.5
    else:
        raise NonConvergence("Picard iteration did not converge", cfg.picard_max, res)

    values = mask.boundary_values()
    values[st.ann] = u
    return ScalarField(mask.grid, values, mask, iterations=it, residual=res)


def nonlinear_residual(field: ScalarField, mask: RegionMask, p: float, eps_reg: float = 1e-6) -> float:
    """Infinity norm of the discrete p-Laplacian of ``field`` over ANNULUS nodes."""
    st = _Stencil(mask)
    u = field.values[st.ann]
    coeffs = st.edge_coefficients(u, p, eps_reg)
    return float(np.max(np.abs(st.residual(u, coeffs))))


def gradient_magnitude(field: ScalarField) -> ScalarField:
    """|grad u| at nodes: central differences inside the annulus, one-sided at its fringe.

    Without a mask the whole grid is differentiated (one-sided at the grid border).
    Nodes outside the annulus get NaN.
    """
    h = field.grid.h
    v = field.values
    if field.mask is None:
        gy, gx = np.gradient(v, h)
        return ScalarField(field.grid, np.hypot(gx, gy))
    mask = field.mask
    ann = mask.annulus
    bvals = mask.boundary_values()
    comps = []
    for plus, minus in ((0, 1), (2, 3)):
        up = _neighbour(v, plus, np.nan)
        um = _neighbour(v, minus, np.nan)
        ap = _neighbour(ann, plus, False)
        am = _neighbour(ann, minus, False)
        central = (up - um) / (2 * h)
        fwd = (up - v) / h
        bwd = (v - um) / h
        # no annulus neighbour on either side: difference across the cut boundary points
        dp = mask.theta[plus] * h
        dm = mask.theta[minus] * h
        bp = _neighbour(bvals, plus, mask.dirichlet_outer)
        bm = _neighbour(bvals, minus, mask.dirichlet_outer)
        cut = (bp - bm) / (dp + dm)
        g = np.select([ap & am, ap, am], [central, fwd, bwd], default=cut)
        comps.append(g)
    out = np.full(field.grid.shape, np.nan)
    out[ann] = np.hypot(comps[0], comps[1])[ann]
    return ScalarField(field.grid, out, mask)


def field_from_function(grid: Grid2D, fn, mask: RegionMask | None = None) -> ScalarField:
    X, Y = grid.mesh()
    return ScalarField(grid, fn(X, Y), mask)


__all__ = [
    "ANNULUS",
    "PLaplaceConfig",
    "ScalarField",
    "field_from_function",
    "gradient_magnitude",
    "nonlinear_residual",
    "solve_p_capacitary",
]
