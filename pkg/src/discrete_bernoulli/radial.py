"""Closed forms for concentric balls in R^N.

With ``a = (p - N)/(p - 1)`` the p-harmonic radial profiles are ``rho**a``
(``p != N``) and ``log(rho)`` (``p == N``).  Everything here is an explicit
formula or a bisection on a monotone branch of one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import LambdaTooLarge, OutOfRange

BRANCH_TOL = 1e-9
ROOT_TOL = 1e-12


def _log_branch(p: float, N: int) -> bool:
    return abs(p - N) < BRANCH_TOL


def _exponent(p: float, N: int) -> float:
    return (p - N) / (p - 1.0)


@dataclass(frozen=True)
class RadialProblem:
    """Capacitor ``B_R \\ B_r`` with ``u = v_in`` on ``|x| = r`` and ``u = v_out`` on ``|x| = R``."""

    p: float
    N: int
    r: float
    R: float
    l: float
    v_in: float = 1.0
    v_out: float = 0.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not 0 < self.r < self.R:
            raise ValueError("need 0 < r < R")
        if self.v_in == self.v_out:
            raise ValueError("boundary values must differ")
        lo, hi = sorted((self.v_in, self.v_out))
        if not lo < self.l < hi:
            raise ValueError(f"level {self.l} must lie strictly between {lo} and {hi}")

    @classmethod
    def interior(cls, p: float, N: int, r: float, R: float, l: float) -> "RadialProblem":
        """u = 0 on the inner sphere, 1 on the outer one."""
        return cls(p, N, r, R, l, 0.0, 1.0)

    @classmethod
    def exterior(cls, p: float, N: int, r: float, R: float, l: float) -> "RadialProblem":
        """u = 1 on the inner sphere, 0 on the outer one."""
        return cls(p, N, r, R, l, 1.0, 0.0)


def _fraction(p: float, N: int, r: float, R: float, rho):
    """Normalised profile: 0 at ``r``, 1 at ``R``."""
    if _log_branch(p, N):
        return np.log(rho / r) / math.log(R / r)
    a = _exponent(p, N)
    return (np.power(rho, a) - r**a) / (R**a - r**a)


def _inverse_fraction(p: float, N: int, r: float, R: float, s: float) -> float:
    if _log_branch(p, N):
        return r ** (1.0 - s) * R**s
    a = _exponent(p, N)
    return ((1.0 - s) * r**a + s * R**a) ** (1.0 / a)


def radial_potential(prob: RadialProblem, rho):
    """Value of the capacitary potential at radius ``rho`` (scalar or array)."""
    rho_arr = np.asarray(rho, dtype=float)
    slack = 1e-12 * prob.R
    if np.any(rho_arr < prob.r - slack) or np.any(rho_arr > prob.R + slack):
        raise OutOfRange(f"radius outside [{prob.r}, {prob.R}]")
    rho_arr = np.clip(rho_arr, prob.r, prob.R)
    s = _fraction(prob.p, prob.N, prob.r, prob.R, rho_arr)
    u = prob.v_in + (prob.v_out - prob.v_in) * s
    return float(u) if np.ndim(u) == 0 else u


def radial_gradient(prob: RadialProblem, rho):
    """|u'(rho)| for the capacitary potential."""
    rho = np.asarray(rho, dtype=float)
    span = abs(prob.v_out - prob.v_in)
    if _log_branch(prob.p, prob.N):
        g = span / (rho * math.log(prob.R / prob.r))
    else:
        a = _exponent(prob.p, prob.N)
        g = span * np.abs(a * np.power(rho, a - 1.0) / (prob.R**a - prob.r**a))
    return float(g) if np.ndim(g) == 0 else g


def level_radius(prob: RadialProblem) -> float:
    """Radius of the level set ``{u = l}``."""
    s = (prob.l - prob.v_in) / (prob.v_out - prob.v_in)
    return _inverse_fraction(prob.p, prob.N, prob.r, prob.R, s)


def interior_gap(prob: RadialProblem, r: float) -> float:
    """Distance from the sphere of radius ``r`` to the ``l`` level set, outer ball fixed.

    The potential is the interior one (0 on ``|x| = r``, 1 on ``|x| = R``);
    ``prob.r`` is ignored.
    """
    p, N, R, l = prob.p, prob.N, prob.R, prob.l
    if not 0 <= r <= R:
        raise OutOfRange(f"r = {r} outside [0, {R}]")
    if r == R:
        return 0.0
    if r == 0:
        if p > N and not _log_branch(p, N):
            return l ** ((p - 1.0) / (p - N)) * R
        return 0.0
    return _inverse_fraction(p, N, r, R, l) - r


class Extremum(NamedTuple):
    r_max: float
    lambda_max: float
    lambda_min: float


def interior_extremum(prob: RadialProblem) -> Extremum:
    """Maximiser and maximum of the interior gap function, plus its value at 0."""
    p, N, R, l = prob.p, prob.N, prob.R, prob.l
    if _log_branch(p, N):
        r_max = R * (1.0 - l) ** (1.0 / l)
        lam_max = r_max / (1.0 / l - 1.0)
        return Extremum(r_max, lam_max, 0.0)
    e = (p - 1.0) / (p - N)
    inner = l / ((1.0 - l) ** ((N - p) / (N - 1.0)) - (1.0 - l))
    r_max = R * inner**e
    lam_max = R * ((l / (1.0 - (1.0 - l) ** ((p - 1.0) / (N - 1.0)))) ** e - inner**e)
    lam_min = l**e * R if p > N else 0.0
    return Extremum(r_max, lam_max, lam_min)


def _bisect(fn: Callable[[float], float], lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    """Root of ``fn`` on [lo, hi] given a sign change; stops on bracket width."""
    flo = fn(lo)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid in (lo, hi):
            break
        fm = fn(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


class InteriorRadii(NamedTuple):
    r1: float | None
    r2: float


def solve_interior_radii(prob: RadialProblem, lam: float) -> InteriorRadii:
    """Both radii ``r`` with ``interior_gap(r) = lam``.

    ``r1`` is the small (hyperbolic) root and ``r2`` the large (elliptic) one.
    For ``p > N`` and ``lam <= lambda_min`` the small root does not exist.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    ext = interior_extremum(prob)
    if lam > ext.lambda_max * (1 + 1e-14):
        raise LambdaTooLarge(f"lambda = {lam} exceeds lambda_max = {ext.lambda_max}")
    if lam >= ext.lambda_max:
        return InteriorRadii(ext.r_max, ext.r_max)

    def f(r):
        return interior_gap(prob, r) - lam

    r2 = _bisect(f, ext.r_max, prob.R)
    if interior_gap(prob, 0.0) >= lam:
        return InteriorRadii(None, r2)
    r1 = _bisect(f, 0.0, ext.r_max)
    return InteriorRadii(r1, r2)


def exterior_gap(p: float, N: int, r: float, l: float, R: float) -> float:
    """``R - rho_l(R)`` for the exterior potential (1 on ``|x| = r``, 0 on ``|x| = R``)."""
    return R - _inverse_fraction(p, N, r, R, 1.0 - l)


def solve_exterior_radius(p: float, N: int, r: float, l: float, lam: float) -> float:
    """The unique ``R > r`` whose level set ``{u = l}`` lies at distance ``lam`` from ``|x| = R``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0 < l < 1:
        raise ValueError("level must lie in (0, 1)")

    def f(R):
        return exterior_gap(p, N, r, l, R) - lam

    lo, hi = r, r + lam
    while f(hi) < 0:
        lo, hi = hi, r + 2.0 * (hi - r)
    return _bisect(f, lo, hi, tol=ROOT_TOL * 1e-2 * max(1.0, hi))


def bernoulli_limit(p: float, N: int, R: float) -> float:
    """Limit of ``l / lambda_max`` as ``l -> 0``: the classical Bernoulli constant of ``B_R``."""
    if not p > 1 or N < 2 or not R > 0:
        raise ValueError("need p > 1, N >= 2, R > 0")
    if _log_branch(p, N):
        return math.e / R
    return ((p - 1.0) / (N - 1.0)) ** ((N - 1.0) / (p - N)) / R


def bernoulli_exterior_radius(p: float, N: int, r: float, omega: float) -> float:
    """Radius ``R`` where the exterior potential of ``B_R \\ B_r`` has ``|u'(R)| = omega``.

    This is the classical exterior Bernoulli free boundary for a ball.
    """

    def grad_at_outer(R):
        return radial_gradient(RadialProblem.exterior(p, N, r, R, 0.5), R)

    lo, hi = r * (1 + 1e-9), 2.0 * r
    while grad_at_outer(hi) > omega:
        lo, hi = hi, 2.0 * hi
    return _bisect(lambda R: grad_at_outer(R) - omega, lo, hi)


def two_phase_radius(
    p: float,
    N: int,
    r1: float,
    r3: float,
    l: float,
    g: Callable[[float], float],
    samples: int = 2000,
) -> float:
    """Interface radius ``s`` of the radial two-phase problem.

    ``u1`` runs from 1 on ``r1`` to 0 on ``s`` and ``u2`` from 0 on ``s`` to -1
    on ``r3``; the interface satisfies ``d1(s) = g(d2(s))`` with ``d1`` the
    distance to ``{u1 = l}`` and ``d2`` the distance to ``{u2 = -l}``.  The
    outermost sign change of the joining defect is refined by bisection.
    """

    def defect(s):
        d1 = s - _inverse_fraction(p, N, r1, s, 1.0 - l)
        d2 = _inverse_fraction(p, N, s, r3, l) - s
        return d1 - g(d2)

    grid = np.linspace(r1, r3, samples + 2)[1:-1]
    vals = np.array([defect(s) for s in grid])
    sign = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if sign.size == 0:
        raise ValueError("joining condition has no radial solution for these data")
    k = int(sign[-1])
    return _bisect(defect, float(grid[k]), float(grid[k + 1]))


def gap_sweep(prob: RadialProblem, n: int = 101) -> np.ndarray:
    """``(r, Lambda(r))`` on a uniform grid of ``[0, R]``."""
    rs = np.linspace(0.0, prob.R, n)
    return np.column_stack([rs, [interior_gap(prob, float(r)) for r in rs]])
