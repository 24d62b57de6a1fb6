"""Property suites; runnable on their own with ``pytest tests/test_properties.py``."""

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from discrete_bernoulli.errors import DegenerateGeometry, EmptyAnnulus
from discrete_bernoulli.freeboundary import (
    DistanceSpec,
    FreeBoundaryConfig,
    interior_comparison_fields,
    iterate_exterior,
)
from discrete_bernoulli.geometry import ConvexPolygon, Grid2D, convex_hull, extract_level_curve, rasterize
from discrete_bernoulli.pde import PLaplaceConfig, solve_p_capacitary
from discrete_bernoulli.radial import RadialProblem, gap_sweep, radial_potential

H = 1 / 24
SLOW = settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def convex_rings(draw):
    """Random convex outer body with a scaled, shifted copy of a random convex inner body."""
    n = draw(st.integers(5, 12))
    ang = np.sort(np.array(draw(st.lists(st.floats(0, 2 * np.pi), min_size=n, max_size=n, unique=True))))
    rad = np.array(draw(st.lists(st.floats(0.75, 1.0), min_size=n, max_size=n)))
    outer = convex_hull(np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]))
    scale = draw(st.floats(0.15, 0.35))
    shift = np.array(draw(st.tuples(st.floats(-0.15, 0.15), st.floats(-0.15, 0.15))))
    inner = ConvexPolygon(outer.vertices * scale + shift)
    return inner, outer


def _mask(inner, outer, v_in=1.0, v_out=0.0):
    grid = Grid2D.covering((-1, 1, -1, 1), H, margin=2 * H)
    return rasterize(inner, outer, grid, v_in, v_out)


def _turns(curve, pitch):
    """Cross products of consecutive chords of a closed curve resampled at ``pitch``."""
    pts = curve.rings[0]
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0], np.cumsum(seg)])
    t = np.arange(0, s[-1], pitch)
    res = np.column_stack([np.interp(t, s, closed[:, 0]), np.interp(t, s, closed[:, 1])])
    a = np.roll(res, 1, axis=0) - res
    b = np.roll(res, -1, axis=0) - res
    orient = np.sign(np.sum(res[:, 0] * np.roll(res[:, 1], -1) - np.roll(res[:, 0], -1) * res[:, 1]))
    return orient * (b[:, 0] * a[:, 1] - b[:, 1] * a[:, 0]) / pitch**2


@SLOW
@given(convex_rings(), st.sampled_from([1.5, 2.0, 3.0]))
def test_discrete_maximum_principle(ring, p):
    try:
        mask = _mask(*ring)
    except (EmptyAnnulus, DegenerateGeometry):
        assume(False)  # thin or overlapping draws
    fld = solve_p_capacitary(mask, PLaplaceConfig(p=p))
    u = fld.values[mask.annulus]
    assert u.min() >= -1e-9 and u.max() <= 1 + 1e-9


@SLOW
@given(convex_rings(), st.floats(0.8, 0.95))
def test_comparison_monotonicity(ring, shrink):
    inner, outer = ring
    small = ConvexPolygon((inner.vertices - inner.centroid) * shrink + inner.centroid)
    cfg = FreeBoundaryConfig.covering((-1, 1, -1, 1), H, margin=2 * H)
    try:
        a, b = interior_comparison_fields(outer, small, inner, cfg)
    except (EmptyAnnulus, DegenerateGeometry):
        assume(False)
    both = a.mask.annulus & b.mask.annulus
    # larger inner body at value 0 pulls the potential down
    assert np.all(b.values[both] <= a.values[both] + 1e-9)


@SLOW
@given(convex_rings(), st.sampled_from([0.25, 0.5, 0.75]))
def test_level_set_convexity(ring, level):
    try:
        mask = _mask(*ring)
    except (EmptyAnnulus, DegenerateGeometry):
        assume(False)
    fld = solve_p_capacitary(mask, PLaplaceConfig(p=2.0))
    curve = extract_level_curve(fld, level)
    assert curve.n_rings == 1
    # chord turns at pitch 4h; an O(h) wobble of the contour gives at most O(1/4) here
    assert _turns(curve, 4 * H).min() >= -0.25


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
@pytest.mark.parametrize("l", [0.2, 0.5, 0.8])
def test_gap_function_unimodal(p, l):
    sweep = gap_sweep(RadialProblem.interior(p, 2, 0.5, 1.0, l), 801)
    d = np.diff(sweep[:, 1])
    peak = int(np.argmax(sweep[:, 1]))
    assert np.all(d[: max(peak - 1, 0)] >= -1e-14)
    assert np.all(d[peak + 1 :] <= 1e-14)
    assert sweep[-1, 1] == 0.0


def _exterior(spec):
    K = ConvexPolygon.regular(0.3, 32)
    cfg = FreeBoundaryConfig.covering((-1.3, 1.3, -1.3, 1.3), H)
    return iterate_exterior(K, spec, cfg, ConvexPolygon.regular(1.1, 64))


def test_variable_lambda_equals_constant():
    const = _exterior(DistanceSpec(0.4, 0.2))
    var = _exterior(DistanceSpec(0.4, lambda x: np.full(len(x), 0.2), bounds=(0.2, 0.2)))
    assert np.array_equal(const.boundary.vertices, var.boundary.vertices)
    assert np.array_equal(const.field.values, var.field.values, equal_nan=True)
    assert const.trace.rows == var.trace.rows


def test_reruns_are_bit_identical():
    a = _exterior(DistanceSpec(0.4, 0.2))
    b = _exterior(DistanceSpec(0.4, 0.2))
    assert np.array_equal(a.boundary.vertices, b.boundary.vertices)
    assert np.array_equal(a.field.values, b.field.values, equal_nan=True)
    assert a.trace.rows == b.trace.rows


# radial closed forms -------------------------------------------------------


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
@pytest.mark.parametrize("N", [2, 3])
@pytest.mark.parametrize("l", [0.25, 0.5, 0.75])
def test_gap_matrix_strictly_unimodal_and_bounded(p, N, l):
    from discrete_bernoulli.radial import interior_extremum

    prob = RadialProblem.interior(p, N, 0.5, 1.0, l)
    sweep = gap_sweep(prob, 1001)
    r, lam = sweep[1:-1, 0], sweep[1:-1, 1]
    r_max = interior_extremum(prob).r_max
    d = np.diff(lam)
    left = r[1:] < r_max
    right = r[:-1] > r_max
    assert np.all(d[left] > 0) and np.all(d[right] < 0)
    assert np.all(lam + r <= 1.0 + 1e-14)


@pytest.mark.parametrize("lam", [0.05, 0.12, 0.2, 0.249])
def test_interior_radius_round_trip(lam):
    from discrete_bernoulli.radial import interior_gap, solve_interior_radii

    prob = RadialProblem.interior(2, 2, 0.1, 1.0, 0.5)
    assert interior_gap(prob, solve_interior_radii(prob, lam).r2) == pytest.approx(lam, abs=1e-10)


@pytest.mark.parametrize("N", [2, 3])
def test_log_case_is_limit(N):
    from discrete_bernoulli.radial import interior_extremum

    rho = np.linspace(0.3, 1.0, 9)
    at = radial_potential(RadialProblem.exterior(N, N, 0.3, 1.0, 0.5), rho)
    ext = interior_extremum(RadialProblem.interior(N, N, 0.3, 1.0, 0.5))
    for dp in (-1e-6, 1e-6):
        near = radial_potential(RadialProblem.exterior(N + dp, N, 0.3, 1.0, 0.5), rho)
        assert np.allclose(near, at, rtol=1e-4, atol=1e-12)
        e = interior_extremum(RadialProblem.interior(N + dp, N, 0.3, 1.0, 0.5))
        assert e.r_max == pytest.approx(ext.r_max, rel=1e-4)
        assert e.lambda_max == pytest.approx(ext.lambda_max, rel=1e-4)


@given(st.floats(1.2, 6), st.integers(2, 3))
def test_radial_potential_monotone(p, N):
    rho = np.linspace(0.2, 1.0, 200)
    u = radial_potential(RadialProblem.exterior(p, N, 0.2, 1.0, 0.5), rho)
    assert np.all(np.diff(u) < 0) and u[0] == pytest.approx(1) and abs(u[-1]) < 1e-12


# geometry ------------------------------------------------------------------


@st.composite
def convex_polys(draw, scale=1.0):
    n = draw(st.integers(3, 10))
    ang = np.sort(np.array(draw(st.lists(st.floats(0, 2 * np.pi), min_size=n, max_size=n, unique=True))))
    rad = np.array(draw(st.lists(st.floats(0.5, 1.0), min_size=n, max_size=n)))
    try:
        poly = convex_hull(scale * np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]))
    except (ValueError, DegenerateGeometry):
        poly = None
    assume(poly is not None and poly.area > 1e-3)
    return poly


@given(convex_polys(), st.floats(0, 1))
def test_minkowski_homothety_identity(P, t):
    from discrete_bernoulli.geometry import minkowski_combine

    C = minkowski_combine(P, P, t)
    tol = 1e-9 * P.diameter
    # edges within 1e-12 rad of parallel are merged, so near-collinear vertices may drop
    assert len(C.vertices) <= len(P.vertices)
    assert np.all(np.abs(P.signed_distance(C.vertices)) <= tol)
    assert np.all(np.abs(C.signed_distance(P.vertices)) <= tol)


@given(convex_polys(), convex_polys(), st.floats(1.05, 2.0), st.floats(1.05, 2.0), st.floats(0, 1))
def test_minkowski_inclusion_monotone(P0, P1, s0, s1, t):
    from discrete_bernoulli.geometry import minkowski_combine

    Q0, Q1 = P0.scaled(s0, P0.centroid), P1.scaled(s1, P1.centroid)
    small = minkowski_combine(P0, P1, t)
    big = minkowski_combine(Q0, Q1, t)
    assert np.all(big.signed_distance(small.vertices) <= 1e-9 * big.diameter)


@given(convex_polys(), convex_polys(), convex_polys())
def test_hausdorff_triangle_inequality(A, B, C):
    from discrete_bernoulli.geometry import hausdorff

    h = 0.02
    ab, bc, ac = (hausdorff(x, y, pitch=h / 4) for x, y in ((A, B), (B, C), (A, C)))
    assert ab == pytest.approx(hausdorff(B, A, pitch=h / 4), abs=h / 2)
    assert ac <= ab + bc + h / 2


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-0.9, 0.9))
def test_level_curve_of_linear_field(a, b, frac):
    assume(abs(a) + abs(b) > 0.1)
    g = Grid2D.covering((-1, 1, -1, 1), 0.1)
    X, Y = g.mesh()
    vals = a * X + b * Y
    level = frac * np.abs(vals).max()
    curve = extract_level_curve(_Field(g, vals), level)
    # nodes sitting exactly on the level are nudged by 1e-12 of the value range
    tol = 1e-12 * (1 + np.ptp(vals))
    for ring in curve.rings:
        assert np.all(np.abs(a * ring[:, 0] + b * ring[:, 1] - level) <= tol)


def _Field(grid, values):
    from discrete_bernoulli.pde import ScalarField

    return ScalarField(grid, values)


@settings(max_examples=25, deadline=None)
@given(convex_polys(), st.integers(0, 2**31 - 1))
def test_distance_to_polyline_matches_brute_force(P, seed):
    from discrete_bernoulli.geometry import Polyline, distances_to_polyline

    h = 0.05
    curve = Polyline.from_polygon(P)
    pts = np.random.default_rng(seed).uniform(-1.5, 1.5, size=(200, 2))
    samples = P.sample_boundary(h / 8)
    brute = np.min(np.linalg.norm(pts[:, None, :] - samples[None, :, :], axis=2), axis=1)
    assert np.all(np.abs(distances_to_polyline(pts, curve) - brute) <= h / 8)


# pde -----------------------------------------------------------------------


def test_exterior_comparison_principle():
    K = ConvexPolygon.regular(0.25, 64)
    grid = Grid2D.covering((-1, 1, -1, 1), H, margin=2 * H)
    u1 = solve_p_capacitary(rasterize(K, ConvexPolygon.rectangle(1.4, 1.4), grid, 1.0, 0.0), PLaplaceConfig(p=3))
    u2 = solve_p_capacitary(rasterize(K, ConvexPolygon.regular(1.0, 64), grid, 1.0, 0.0), PLaplaceConfig(p=3))
    both = u1.mask.annulus & u2.mask.annulus
    lip = 1 / (0.25 * np.log(4))  # radial gradient bound near K
    assert np.all(u1.values[both] <= u2.values[both] + 5 * H * lip)
    assert np.all(u1.values[both] <= u2.values[both] + 1e-9)


def test_refinement_monotone():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        K, O = ConvexPolygon.regular(0.25, 256), ConvexPolygon.regular(1.0, 256)
        g = Grid2D.covering(O.bbox, h, margin=2 * h)
        m = rasterize(K, O, g, 1.0, 0.0)
        f = solve_p_capacitary(m, PLaplaceConfig(p=2.5))
        X, Y = g.mesh()
        rho = np.clip(np.hypot(X, Y)[m.annulus], 0.25, 1)
        errs.append(np.abs(f.values[m.annulus] - radial_potential(RadialProblem.exterior(2.5, 2, 0.25, 1, 0.5), rho)).max())
    assert errs[0] > errs[1] > errs[2]


def test_gradient_bounded_below():
    from discrete_bernoulli.pde import gradient_magnitude

    K, O = ConvexPolygon.regular(0.25, 128), ConvexPolygon.regular(1.0, 128)
    g = Grid2D.covering(O.bbox, 1 / 48, margin=1 / 24)
    f = solve_p_capacitary(rasterize(K, O, g, 1.0, 0.0), PLaplaceConfig(p=3))
    grad = gradient_magnitude(f).values
    X, Y = g.mesh()
    rho = np.hypot(X, Y)
    away = (rho > 0.25 + 2 / 48) & (rho < 1 - 2 / 48)
    # the radial |u'| for p = 3 is smallest at the outer radius, where it is 1 / log 4
    assert np.nanmin(grad[away]) > 0.5 / np.log(4)


# free boundary ---------------------------------------------------------------


def test_exterior_from_supersolution_is_nested():
    from discrete_bernoulli.freeboundary import supersolution_disk

    K = ConvexPolygon.regular(0.3, 64)
    spec = DistanceSpec(0.4, 0.2)
    cfg = FreeBoundaryConfig.covering((-1.3, 1.3, -1.3, 1.3), H)
    res = iterate_exterior(K, spec, cfg, supersolution_disk(K, spec, 2.0))
    bds = res.trace.boundaries
    for prev, nxt in zip(bds, bds[1:]):
        assert np.max(prev.signed_distance(nxt.vertices)) <= H


def test_fixed_point_seeding():
    from discrete_bernoulli.freeboundary import iterate_interior
    from discrete_bernoulli.radial import solve_exterior_radius, solve_interior_radii

    h = 1 / 48
    K = ConvexPolygon.regular(0.3, 128)
    R = solve_exterior_radius(2, 2, 0.3, 0.4, 0.2)
    cfg = FreeBoundaryConfig.covering((-1.1, 1.1, -1.1, 1.1), h)
    ext = iterate_exterior(K, DistanceSpec(0.4, 0.2), cfg, ConvexPolygon.regular(R, 128))
    assert ext.trace.rows[0].hausdorff_step < 2 * h
    Om = ConvexPolygon.regular(1.0, 128)
    r2 = solve_interior_radii(RadialProblem.interior(2, 2, 0.1, 1.0, 0.5), 0.2).r2
    cfg = FreeBoundaryConfig.covering((-1, 1, -1, 1), h)
    inn = iterate_interior(Om, DistanceSpec(0.5, 0.2), cfg, ConvexPolygon.regular(r2, 128))
    assert inn.trace.rows[0].hausdorff_step < 2 * h


def test_interior_selects_elliptic_branch():
    from discrete_bernoulli.freeboundary import iterate_interior
    from discrete_bernoulli.radial import solve_interior_radii

    Om = ConvexPolygon.regular(1.0, 64)
    cfg = FreeBoundaryConfig.covering((-1, 1, -1, 1), 1 / 48)
    _, K, _ = iterate_interior(Om, DistanceSpec(0.5, 0.15), cfg)
    r = np.sqrt(K.area / np.pi)
    r1, r2 = solve_interior_radii(RadialProblem.interior(2, 2, 0.1, 1.0, 0.5), 0.15)
    assert abs(r - r2) < abs(r - r1)


def test_two_phase_comparison():
    """Enlarging K2 lowers u1 and raises u2 on shared nodes."""
    K1, K3 = ConvexPolygon.regular(0.2, 64), ConvexPolygon.regular(1.0, 64)
    grid = Grid2D.covering((-1, 1, -1, 1), H, margin=2 * H)
    cfg = PLaplaceConfig(p=2.0)
    fields = []
    for s in (0.5, 0.6):
        K2 = ConvexPolygon.regular(s, 64)
        u1 = solve_p_capacitary(rasterize(K1, K2, grid, 1.0, 0.0), cfg)
        u2 = solve_p_capacitary(rasterize(K2, K3, grid, 0.0, -1.0), cfg)
        fields.append((u1, u2))
    (a1, a2), (b1, b2) = fields
    shared1 = a1.mask.annulus & b1.mask.annulus
    shared2 = a2.mask.annulus & b2.mask.annulus
    assert np.all(b1.values[shared1] >= a1.values[shared1] - 1e-9)
    assert np.all(b2.values[shared2] >= a2.values[shared2] - 1e-9)
