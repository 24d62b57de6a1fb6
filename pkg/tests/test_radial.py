import math

import numpy as np
import pytest

from discrete_bernoulli.errors import LambdaTooLarge, OutOfRange
from discrete_bernoulli.radial import (
    RadialProblem,
    bernoulli_exterior_radius,
    bernoulli_limit,
    exterior_gap,
    gap_sweep,
    interior_extremum,
    interior_gap,
    level_radius,
    radial_gradient,
    radial_potential,
    solve_exterior_radius,
    solve_interior_radii,
    two_phase_radius,
)


def test_interior_extremum_log_case():
    ext = interior_extremum(RadialProblem.interior(2, 2, 0.1, 1.0, 0.5))
    assert ext == pytest.approx((0.25, 0.25, 0.0), abs=1e-15)


def test_interior_radii_quadratic():
    # for p = N = 2, l = 1/2 the gap is sqrt(r) - r
    r1, r2 = solve_interior_radii(RadialProblem.interior(2, 2, 0.1, 1.0, 0.5), 0.2)
    assert r1 == pytest.approx(0.076393202250021, abs=1e-9)
    assert r2 == pytest.approx(0.5236067977499790, abs=1e-9)


def test_bernoulli_limit_is_e():
    assert abs(bernoulli_limit(2, 2, 1.0) - math.e) < 1e-12


def test_lambda_above_max_raises():
    with pytest.raises(LambdaTooLarge):
        solve_interior_radii(RadialProblem.interior(2, 2, 0.1, 1.0, 0.5), 0.3)


def test_gap_at_maximum_equals_lambda_max():
    prob = RadialProblem.interior(3, 2, 0.1, 1.0, 0.4)
    ext = interior_extremum(prob)
    assert interior_gap(prob, ext.r_max) == pytest.approx(ext.lambda_max, rel=1e-12)
    sweep = gap_sweep(prob, 2001)
    assert sweep[:, 1].max() <= ext.lambda_max * (1 + 1e-12)


def test_gap_at_zero_for_p_above_n():
    prob = RadialProblem.interior(3, 2, 0.1, 1.0, 0.4)
    assert interior_gap(prob, 0.0) == pytest.approx(interior_extremum(prob).lambda_min)
    with pytest.raises(OutOfRange):
        interior_gap(prob, 1.5)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_potential_boundary_values_and_level(p):
    prob = RadialProblem.exterior(p, 2, 0.25, 1.0, 0.5)
    u = radial_potential(prob, np.array([0.25, 1.0]))
    assert u == pytest.approx([1.0, 0.0], abs=1e-14)
    assert radial_potential(prob, level_radius(prob)) == pytest.approx(0.5, abs=1e-12)


def test_gradient_matches_finite_difference():
    prob = RadialProblem.exterior(3.0, 2, 0.25, 1.0, 0.5)
    rho, d = 0.6, 1e-6
    fd = (radial_potential(prob, rho + d) - radial_potential(prob, rho - d)) / (2 * d)
    assert abs(radial_gradient(prob, rho)) == pytest.approx(abs(fd), rel=1e-6)


def test_exterior_radius_inverts_gap():
    R = solve_exterior_radius(2, 2, 0.3, 0.4, 0.2)
    assert R == pytest.approx(0.699, abs=2e-3)
    assert exterior_gap(2, 2, 0.3, 0.4, R) == pytest.approx(0.2, abs=1e-10)


def test_bernoulli_radius_gradient():
    R = bernoulli_exterior_radius(2, 2, 0.3, 2.0)
    # |u'(R)| = 1 / (R log(R/r)) for p = N = 2
    assert 1 / (R * math.log(R / 0.3)) == pytest.approx(2.0, rel=1e-9)


def test_two_phase_identity_symmetric_in_levels():
    s = two_phase_radius(2, 2, 0.2, 1.0, 0.3, lambda q: q)
    assert 0.2 < s < 1.0
    d1 = s - 0.2 ** 0.3 * s ** 0.7  # {u1 = 0.3} sits at r1^l s^(1-l)
    d2 = s ** 0.7 * 1.0 ** 0.3 - s
    assert d1 == pytest.approx(d2, abs=1e-9)


def test_invalid_problem():
    with pytest.raises(ValueError):
        RadialProblem.interior(2, 2, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        RadialProblem.interior(2, 2, 0.1, 1.0, 1.5)
