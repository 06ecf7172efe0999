import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gammaln

from isogeo.bodies import make_body
from isogeo.errors import UsageError
from isogeo.orlicz import (implied_support_level, orlicz_definition, orlicz_sample, orlicz_sphere_closed_form,
                           orlicz_sphere_formula, tail_bound_check, verify_representation)
from isogeo.polytope import support_expectation
from isogeo.sampling import sample_sphere, sample_uniform

A = 0.5  # half-width of the cube marginal along a coordinate axis
# root of (A - s)^2 / (2 A s) = 1/100, i.e. s^2 - 1.01 s + 0.25 = 0, smaller branch
S0_N100 = (1.01 - math.sqrt(1.01 ** 2 - 1.0)) / 2


def cube_orlicz(s):
    return (A - s) ** 2 / (2 * A * s) if s < A else 0.0


def sphere_density(n):
    c = math.exp(gammaln(n / 2) - gammaln((n - 1) / 2) - 0.5 * math.log(math.pi))
    return lambda y: c * (1 - y * y) ** ((n - 3) / 2)


def test_frozen_support_level():
    assert S0_N100 == pytest.approx(0.43411276560621087, rel=1e-15)
    assert cube_orlicz(S0_N100) == pytest.approx(0.01, rel=1e-12)


@pytest.fixture(scope="module")
def cube_axis_samples():
    return sample_uniform(make_body("cube", 3), 1_000_000, 2024).points


def test_sample_value_on_cube_marginal(cube_axis_samples):
    ev = orlicz_sample(cube_axis_samples, [1, 0, 0], 0.25)
    assert ev.method == "sample_closed_form"
    assert abs(ev.value - 0.25) <= 3 * ev.error
    assert ev.as_estimate().std_error == ev.error


def test_definition_quadrature_on_cube_marginal():
    ev = orlicz_definition(lambda y: 1.0, A, 0.25)
    assert abs(ev.value - 0.25) <= 1e-6
    assert orlicz_definition(lambda y: 1.0, A, 0.6).value == 0.0


def test_sample_value_vanishes_above_the_maximum(cube_axis_samples):
    top = np.abs(cube_axis_samples[:, 0]).max()
    ev = orlicz_sample(cube_axis_samples, [1, 0, 0], top * 1.0000001)
    assert ev.value == 0.0 and ev.error == 0.0


def test_level_must_be_positive(cube_axis_samples):
    with pytest.raises(UsageError):
        orlicz_sample(cube_axis_samples, [1, 0, 0], 0.0)


def test_sphere_formula_zero_and_archimedes():
    assert orlicz_sphere_formula(7, 1.0, 1.0) == 0.0
    assert orlicz_sphere_formula(7, 1.0, 2.5) == 0.0
    assert orlicz_sphere_formula(3, 1.0, 0.5) == pytest.approx(0.25, abs=1e-6)
    for s in (0.1, 0.3, 0.7):
        assert orlicz_sphere_formula(3, 1.0, s) == pytest.approx((1 - s) ** 2 / (2 * s), rel=1e-9)


def test_sphere_formula_matches_sphere_monte_carlo():
    y = sample_sphere(3, 1_000_000, 5)
    ev = orlicz_sample(y, [1, 0, 0], 0.5)
    assert abs(orlicz_sphere_formula(3, 1.0, 0.5) - ev.value) <= 3 * ev.error


def test_sphere_formula_scales_with_norm():
    # M(|x|/s) depends only on s/|x|
    assert orlicz_sphere_formula(9, 2.0, 0.8) == pytest.approx(orlicz_sphere_formula(9, 1.0, 0.4), rel=1e-10)


def test_sphere_formula_errors():
    for args in [(1, 1.0, 0.5), (3, 0.0, 0.5), (3, 1.0, 0.0)]:
        with pytest.raises(UsageError):
            orlicz_sphere_formula(*args)


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 300), st.floats(0.02, 0.98))
def test_closed_form_matches_sphere_quadrature(n, rho):
    q = orlicz_sphere_formula(n, 1.0, rho)
    c = orlicz_sphere_closed_form(n, rho)
    assert c == pytest.approx(q, rel=1e-7, abs=1e-14)


@pytest.mark.parametrize("n", [3, 6, 25])
@pytest.mark.parametrize("s", [0.15, 0.4, 0.7])
def test_three_way_agreement_on_sphere_marginal(n, s):
    definition = orlicz_definition(sphere_density(n), 1.0, s).value
    formula = orlicz_sphere_formula(n, 1.0, s)
    closed = orlicz_sphere_closed_form(n, s)
    assert definition == pytest.approx(formula, rel=1e-6)
    assert closed == pytest.approx(formula, rel=1e-8)
    y = sample_sphere(n, 400_000, n)
    ev = orlicz_sample(y, np.eye(n)[0], s)
    assert abs(ev.value - formula) <= 3 * ev.error


def test_closed_form_is_vectorized_and_zero_outside():
    out = orlicz_sphere_closed_form(10, np.array([0.3, 1.0, 2.0]))
    assert out.shape == (3,) and out[1] == 0.0 and out[2] == 0.0 and out[0] > 0


@pytest.mark.parametrize("kind", ["cube", "ball", "cross_polytope"])
def test_sample_value_is_monotone_and_convex_in_inverse_level(kind):
    body = make_body(kind, 8)
    x = sample_uniform(body, 20_000, 3).points
    theta = sample_sphere(8, 1, 4)[0]
    s_grid = np.linspace(0.2, 2.0, 40) * body.lk
    vals = np.array([orlicz_sample(x, theta, s).value for s in s_grid])
    assert np.all(np.diff(vals) <= 0)
    u = np.linspace(0.3, 6.0, 60) / body.lk
    mu = np.array([orlicz_sample(x, theta, 1 / ui).value for ui in u])
    assert np.all(np.diff(mu, 2) >= -1e-12 * mu.max())


def test_representation_vanishes_beyond_circumradius():
    body = make_body("cube", 6)
    x = sample_uniform(body, 5000, 1)
    th = sample_sphere(6, 50, 2)
    lhs, rhs = verify_representation(body, body.circumradius * 1.01, x, th)
    assert lhs.value == 0.0 and rhs.value == 0.0


def test_representation_quadrature_route_matches_closed_form():
    body = make_body("cube", 6)
    x = sample_uniform(body, 2000, 1)
    th = sample_sphere(6, 20, 2)
    _, a = verify_representation(body, body.lk, x, th)
    _, b = verify_representation(body, body.lk, x, th, method="quadrature")
    assert a.value == pytest.approx(b.value, rel=1e-8)
    with pytest.raises(UsageError):
        verify_representation(body, body.lk, x, th, method="nope")


def test_representation_on_ball_matches_radial_quadrature():
    body = make_body("ball", 10)
    n, r, s = body.dim, body.scale, body.lk
    x = sample_uniform(body, 200_000, 4)
    th = sample_sphere(n, 200, 5)
    lhs, rhs = verify_representation(body, s, x, th)
    oracle, _ = integrate.quad(lambda rho: n * rho ** (n - 1) / r ** n * orlicz_sphere_formula(n, rho, s),
                               s, r, epsabs=0, epsrel=1e-10)
    assert abs(rhs.value - oracle) <= rhs.std_error
    assert lhs.agrees_with(rhs, 3.0)


def test_implied_level_on_cube_marginal(cube_axis_samples):
    level = implied_support_level(cube_axis_samples, [1, 0, 0], 100)
    assert not level.flagged
    # SE of the sample functional at s0, carried to s through the slope of the closed form
    se_m = orlicz_sample(cube_axis_samples, [1, 0, 0], S0_N100).error
    slope = (A ** 2 - S0_N100 ** 2) / (2 * A * S0_N100 ** 2)
    assert abs(level.value - S0_N100) <= 3 * se_m / slope


def test_implied_level_approaches_the_edge(cube_axis_samples):
    level = implied_support_level(cube_axis_samples, [1, 0, 0], 10**6)
    assert 0.49 < level.value <= 0.5


@pytest.mark.parametrize("lam,exact", [(2.0, True), (3.0, False), (0.37, False)])
def test_implied_level_is_homogeneous(lam, exact):
    x = sample_uniform(make_body("ball", 5), 30_000, 8).points
    theta = sample_sphere(5, 1, 9)[0]
    a = implied_support_level(x, theta, 64).value
    b = implied_support_level(lam * x, theta, 64).value
    if exact:
        assert b == lam * a
    else:
        assert b == pytest.approx(lam * a, rel=2e-8)


def test_implied_level_errors_and_flags():
    with pytest.raises(UsageError):
        implied_support_level(np.ones((5, 2)), [1, 0], 1)
    assert implied_support_level(np.zeros((5, 2)), [1, 0], 10).flagged


def test_tail_bound_examples(cube_axis_samples):
    chk = tail_bound_check(cube_axis_samples, [1, 0, 0], 1 / 8)
    assert abs(chk.m_value.value - 1.125) <= 3 * chk.m_value.error
    assert abs(chk.half_tail.value - 0.25) <= 3 * chk.half_tail.std_error
    assert chk.holds()
    # at s >= a/2 the tail at 2s is empty while M(1/s) stays positive until s = a
    far = tail_bound_check(cube_axis_samples, [1, 0, 0], 0.3)
    assert far.half_tail.value == 0.0
    assert abs(far.m_value.value - cube_orlicz(0.3)) <= 3 * far.m_value.error
    assert far.holds()
    assert tail_bound_check(cube_axis_samples, [1, 0, 0], 0.6).m_value.value == 0.0


def test_tail_bound_on_ball():
    body = make_body("ball", 5)
    x = sample_uniform(body, 1_000_000, 10).points
    theta = sample_sphere(5, 1, 11)[0]
    assert tail_bound_check(x, theta, body.lk).holds(3.0)


def test_support_expectation_is_reproducible():
    body = make_body("cube", 4)
    a = support_expectation(body, np.eye(4)[0], 16, 20, 3)
    b = support_expectation(body, np.eye(4)[0], 16, 20, 3)
    assert a == b and 0 < a.value <= 0.5
