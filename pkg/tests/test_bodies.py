import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from isogeo.bodies import Body, is_small_diameter, make_body, membership
from isogeo.errors import ConfigurationError, UsageError
from isogeo.sampling import sample_uniform

from .conftest import CATALOG, body_id, unit


def test_cube_is_already_volume_one():
    body = make_body("cube", 10)
    assert body.scale == 1.0
    lk_sq, _ = integrate.quad(lambda u: u * u, -0.5, 0.5)
    assert body.lk == pytest.approx(math.sqrt(lk_sq), rel=1e-14)
    assert body.lk == pytest.approx(0.288675, abs=1e-6)


def test_planar_ball():
    body = make_body("ball", 2)
    assert body.scale == pytest.approx(math.pi ** -0.5, rel=1e-14)
    assert body.lk ** 2 == pytest.approx(1 / (4 * math.pi), rel=1e-13)
    assert body.lk == pytest.approx(0.28209, abs=1e-5)


def test_cube_circumradius():
    assert make_body("cube", 4).circumradius == 1.0


def _mp_unit_volume(kind, n, p):
    # independent arbitrary-precision closed forms of the unscaled bodies
    n = mpmath.mpf(n)
    if kind == "ball":
        return mpmath.pi ** (n / 2) / mpmath.gamma(n / 2 + 1)
    if kind == "simplex":
        return mpmath.sqrt(n + 1) / mpmath.factorial(n)
    p = mpmath.mpf(1 if kind == "cross_polytope" else p)
    return (2 * mpmath.gamma(1 + 1 / p)) ** n / mpmath.gamma(1 + n / p)


@pytest.mark.parametrize("kp", CATALOG, ids=body_id)
@pytest.mark.parametrize("n", [2, 3, 7, 50, 400])
def test_volume_is_one(kp, n):
    kind, p = kp
    body = make_body(kind, n, p)
    assert body.volume() == pytest.approx(1.0, rel=1e-10)
    if kind != "cube":
        vol = _mp_unit_volume(kind, n, p) * mpmath.mpf(body.scale) ** n
        assert float(vol) == pytest.approx(1.0, rel=1e-10)


def test_simplex_volume_from_vertices():
    body = make_body("simplex", 6)
    v = body.simplex_vertices
    edges = v[1:] - v[0]
    assert abs(np.linalg.det(edges)) / math.factorial(6) == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(v.mean(axis=0), 0.0, atol=1e-14)


def test_simplex_isotropic_from_vertex_moments():
    # E XX^T = (sum v v^T + (sum v)(sum v)^T) / ((n+1)(n+2)) for a uniform simplex
    n = 5
    body = make_body("simplex", n)
    v = body.simplex_vertices
    s = v.sum(axis=0)
    cov = (v.T @ v + np.outer(s, s)) / ((n + 1) * (n + 2))
    np.testing.assert_allclose(cov, body.lk ** 2 * np.eye(n), atol=1e-13)
    assert body.circumradius == pytest.approx(np.linalg.norm(v, axis=1).max(), rel=1e-13)


@pytest.mark.parametrize("kind,p,n", [("cross_polytope", None, 8), ("lp_ball", 3.0, 6), ("lp_ball", 1.5, 12),
                                      ("ball", None, 9)])
def test_lk_matches_marginal_quadrature(kind, p, n):
    # 1-D marginal of the unit l_p ball: density proportional to (1 - |u|^p)^((n-1)/p)
    p_eff = 1.0 if kind == "cross_polytope" else (2.0 if kind == "ball" else p)
    dens = lambda u: (1 - u ** p_eff) ** ((n - 1) / p_eff)
    mass = integrate.quad(dens, 0, 1, epsabs=0, epsrel=1e-13)[0]
    second = integrate.quad(lambda u: u * u * dens(u), 0, 1, epsabs=0, epsrel=1e-13)[0]
    body = make_body(kind, n, p)
    assert body.lk == pytest.approx(body.scale * math.sqrt(second / mass), rel=1e-10)


@pytest.mark.parametrize("kind,p,n,expected", [
    ("lp_ball", 3.0, 8, lambda s: s * 8 ** (0.5 - 1 / 3)),
    ("lp_ball", 1.5, 8, lambda s: s),
    ("cross_polytope", None, 8, lambda s: s),
])
def test_lp_circumradius(kind, p, n, expected):
    body = make_body(kind, n, p)
    assert body.circumradius == pytest.approx(expected(body.scale), rel=1e-14)


def test_membership_examples():
    c3 = make_body("cube", 3)
    assert membership(c3, [0, 0, 0])
    assert not membership(c3, [0.51, 0, 0])
    assert membership(make_body("ball", 2), [math.pi ** -0.5, 0.0])


@pytest.mark.parametrize("kp", CATALOG, ids=body_id)
def test_membership_boundary_points(kp):
    kind, p = kp
    body = make_body(kind, 4, p)
    if kind == "simplex":
        vertex = body.simplex_vertices[0]
        assert membership(body, vertex)
        assert not membership(body, 1.01 * vertex)
    else:
        # the farthest points lie on the diagonal when p >= 2 and on an axis otherwise
        diagonal = kind == "cube" or (kind == "lp_ball" and p >= 2)
        far = body.circumradius * unit([1, 1, 1, 1] if diagonal else [1, 0, 0, 0])
        assert membership(body, far)
        assert not membership(body, 1.001 * far)


def test_membership_dimension_mismatch():
    with pytest.raises(UsageError):
        membership(make_body("cube", 3), [0, 0])


def test_small_diameter():
    c16 = make_body("cube", 16)
    assert math.sqrt(16) * c16.lk == pytest.approx(1.1547, abs=1e-4)
    assert is_small_diameter(c16, 2.0)
    for n in (3, 10, 100):
        assert is_small_diameter(make_body("cube", n), math.sqrt(3))
        assert not is_small_diameter(make_body("cube", n), math.sqrt(3) * 0.999)
    cp = make_body("cross_polytope", 8)
    ratio = cp.circumradius / (math.sqrt(8) * cp.lk)
    # closed forms: |B_1^8| = 2^8/8!, E x_1^2 on B_1^n = 2/((n+1)(n+2))
    scale = (math.factorial(8) / 2 ** 8) ** (1 / 8)
    assert ratio == pytest.approx(scale / (math.sqrt(8) * scale * math.sqrt(2 / 90)), rel=1e-12)
    assert not is_small_diameter(cp, 0.9 * ratio)
    assert is_small_diameter(cp, ratio)


@pytest.mark.parametrize("bad", [("dodecahedron", 3, None), ("cube", 1, None), ("lp_ball", 3, 0.5),
                                 ("lp_ball", 3, None), ("cross_polytope", 3, 2.0)])
def test_configuration_errors(bad):
    with pytest.raises(ConfigurationError):
        make_body(*bad)


def test_descriptor_roundtrip():
    body = make_body("lp_ball", 7, 2.5)
    text = body.descriptor()
    assert "kind=lp_ball" in text and "n=7" in text and "lk=" in text and "circumradius=" in text
    assert Body.from_descriptor(text) == body
    assert Body.from_descriptor(make_body("cube", 3).descriptor()) == make_body("cube", 3)


def test_only_simplex_is_not_symmetric():
    assert [make_body(k, 3, p).symmetric for k, p in CATALOG] == [k != "simplex" for k, _ in CATALOG]


@pytest.mark.parametrize("kp", CATALOG, ids=body_id)
def test_isotropy_and_centering(kp):
    kind, p = kp
    n = 6
    body = make_body(kind, n, p)
    x = sample_uniform(body, 200_000, 11).points
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
    assert np.all(np.abs(mean) <= 4 * se)
    rng = np.random.default_rng(3)
    for _ in range(3):
        a, b = unit(rng.standard_normal(n)), unit(rng.standard_normal(n))
        ya, yb = (x @ a) ** 2, (x @ b) ** 2
        se_a = ya.std(ddof=1) / math.sqrt(ya.size)
        se_b = yb.std(ddof=1) / math.sqrt(yb.size)
        assert abs(ya.mean() - yb.mean()) <= 4 * math.hypot(se_a, se_b)
        assert abs(ya.mean() - body.lk ** 2) <= 4 * se_a


@pytest.mark.parametrize("kp", CATALOG, ids=body_id)
@pytest.mark.parametrize("n", [2, 3])
def test_rejection_acceptance_matches_volume(kp, n):
    kind, p = kp
    body = make_body(kind, n, p)
    lo, hi = body.bounding_box()
    m = 400_000
    pts = lo + (hi - lo) * np.random.default_rng(5).random((m, n))
    rate = body.contains(pts).mean()
    expected = body.volume() / np.prod(hi - lo)
    se = math.sqrt(expected * (1 - expected) / m)
    assert abs(rate - expected) <= 3 * se
