import math

import numpy as np
import pytest

from conftest import BL1_FAN, BL3_FAN
from errors import ToleranceNotReached, DimensionMismatch
from exp_moments import (
    MomentEngine,
    divided_diff_exp,
    simplex_exp_moments,
    polytope_exp_moments,
    weighted_barycenter,
    grundmann_moeller_rule,
    quadrature_oracle,
)
from polytope_geometry import Polytope, Simplex, canonical_polytope, translate, triangulate, contains, volume


def random_polytope(rng, dim, scale=0.7):
    return Polytope.from_vertices(scale * rng.normal(size=(8 + 2 * dim, dim)))


def explicit_divided_difference(nodes):
    """sum_i e^{a_i} / prod_{j != i} (a_i - a_j) for distinct nodes."""
    total = 0.0
    for i, a in enumerate(nodes):
        total += math.exp(a) / np.prod([a - b for j, b in enumerate(nodes) if j != i])
    return total


def test_divided_difference_single_and_pair():
    assert divided_diff_exp([0.7]) == pytest.approx(math.exp(0.7), rel=1e-15)
    expected = (math.exp(0.3) - math.exp(-1.2)) / 1.5
    assert divided_diff_exp([0.3, -1.2]) == pytest.approx(expected, rel=1e-13)


def test_divided_difference_wide_nodes():
    nodes = [0.0, -30.0, -60.0]
    assert divided_diff_exp(nodes) == pytest.approx(explicit_divided_difference(nodes), rel=1e-10)


def test_divided_difference_repeated_nodes():
    # exp[x, x, x] = e^x / 2!
    assert divided_diff_exp([0.4, 0.4, 0.4]) == pytest.approx(math.exp(0.4) / 2.0, rel=1e-14)


@pytest.mark.parametrize('spread', [1e-3, 5e-4, 1.01e-4, 0.99e-4])
def test_series_and_matrix_exponential_agree_near_threshold(spread):
    nodes = 0.25 + spread * np.array([0.0, 0.3, 1.0, 0.7])
    series = divided_diff_exp(nodes, taylor_threshold=1.0)
    matrix = divided_diff_exp(nodes, taylor_threshold=0.0)
    assert series == pytest.approx(matrix, rel=1e-12)


def test_unit_interval_closed_form():
    simplex = Simplex(np.array([[0.0], [1.0]]))
    result = simplex_exp_moments(simplex, [2.0])
    e2 = math.exp(2.0)
    assert result.i0 == pytest.approx((e2 - 1.0) / 2.0, rel=1e-13)
    assert result.i1[0] == pytest.approx(e2 / 4.0 + 0.25, rel=1e-13)
    assert result.i2[0, 0] == pytest.approx((e2 - 1.0) / 4.0, rel=1e-13)


def test_zero_weight_gives_volume_and_centroid():
    polytope = canonical_polytope(BL1_FAN)
    result = polytope_exp_moments(polytope, [0.0, 0.0])
    assert result.i0 == pytest.approx(4.0, rel=1e-14)
    np.testing.assert_allclose(result.mean, [1.0 / 12.0, 1.0 / 12.0], atol=1e-14)


def test_tiny_weight_is_continuous():
    rng = np.random.default_rng(3)
    for dim in (1, 2, 3):
        polytope = random_polytope(rng, dim)
        at_zero = polytope_exp_moments(polytope, np.zeros(dim))
        tiny = polytope_exp_moments(polytope, 1e-12 * rng.normal(size=dim))
        assert tiny.i0 == pytest.approx(at_zero.i0, rel=1e-10)
        np.testing.assert_allclose(tiny.i1, at_zero.i1, rtol=1e-10, atol=1e-10 * at_zero.i0)
        np.testing.assert_allclose(tiny.i2, at_zero.i2, rtol=1e-10, atol=1e-10 * at_zero.i0)


def test_weight_gradient_identity():
    polytope = canonical_polytope(BL1_FAN)
    w = np.array([0.4, -0.7])
    base = polytope_exp_moments(polytope, w)
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        plus = polytope_exp_moments(polytope, w + e)
        minus = polytope_exp_moments(polytope, w - e)
        assert (plus.i0 - minus.i0) / (2 * h) == pytest.approx(base.i1[j], rel=1e-7)
        np.testing.assert_allclose((plus.i1 - minus.i1) / (2 * h), base.i2[:, j], rtol=1e-7)


def test_retriangulation_invariance():
    polytope = canonical_polytope(BL3_FAN)
    w = [0.9, -0.3]
    first = polytope_exp_moments(polytope, w, simplices=triangulate(polytope, apex=0))
    second = polytope_exp_moments(polytope, w, simplices=triangulate(polytope, apex=4))
    assert first.i0 == pytest.approx(second.i0, rel=1e-13)
    np.testing.assert_allclose(first.i1, second.i1, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(first.i2, second.i2, rtol=1e-12, atol=1e-13)


def test_translation_covariance():
    polytope = canonical_polytope(BL1_FAN)
    w = np.array([-0.6, 0.2])
    v = np.array([0.3, -1.1])
    moved = polytope_exp_moments(translate(polytope, v), w)
    base = polytope_exp_moments(polytope, w)
    assert moved.i0 == pytest.approx(math.exp(w @ v) * base.i0, rel=1e-13)
    np.testing.assert_allclose(moved.mean, base.mean + v, atol=1e-13)
    np.testing.assert_allclose(moved.covariance, base.covariance, atol=1e-12)


def test_weighted_barycenter_is_interior():
    rng = np.random.default_rng(11)
    polytope = canonical_polytope(BL1_FAN)
    for _ in range(10):
        w = 3.0 * rng.normal(size=2)
        assert contains(polytope, weighted_barycenter(polytope, w))


def test_covariance_is_positive_definite():
    polytope = canonical_polytope(BL3_FAN)
    covariance = polytope_exp_moments(polytope, [1.0, 2.0]).covariance
    assert np.all(np.linalg.eigvalsh(covariance) > 0.0)


def test_weight_dimension_is_checked():
    with pytest.raises(DimensionMismatch):
        polytope_exp_moments(canonical_polytope(BL1_FAN), [1.0])


def test_engine_thread_pool_gives_identical_results():
    polytope = canonical_polytope(BL3_FAN)
    serial = MomentEngine({})
    pooled = MomentEngine({'system': {'thread_pool_size': 4}})
    try:
        a = serial.moments(polytope, [0.5, -0.25])
        b = pooled.moments(polytope, [0.5, -0.25])
    finally:
        pooled.close()
    assert a.i0 == b.i0
    np.testing.assert_array_equal(a.i1, b.i1)
    np.testing.assert_array_equal(a.i2, b.i2)
    assert pooled.get_stats()['workers'] == 4
    assert serial.get_stats()['evaluations'] == 1


def test_engine_caches_triangulations(engine):
    polytope = canonical_polytope(BL1_FAN)
    engine.moments(polytope, [0.0, 0.0])
    engine.barycenter(polytope, [1.0, 0.0])
    stats = engine.get_stats()
    assert stats['evaluations'] == 2
    assert stats['cached_triangulations'] == 1


@pytest.mark.parametrize('a, b', [(0, 0), (3, 0), (2, 5), (0, 11), (6, 5)])
def test_grundmann_moeller_exact_on_monomials(a, b):
    points, weights = grundmann_moeller_rule(2, 5)
    # barycentric points -> cartesian on the unit triangle (0,0), (1,0), (0,1)
    x = points[:, 1]
    y = points[:, 2]
    expected = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
    assert weights @ (x ** a * y ** b) == pytest.approx(expected, rel=1e-11, abs=1e-15)


def assert_matches_oracle(polytope, w, exact, oracle):
    radius = max(1.0, float(np.max(np.linalg.norm(polytope.vertices, axis=1))))
    assert abs(exact.i0 - oracle.i0) <= 1e-9 * exact.i0
    assert np.max(np.abs(exact.i1 - oracle.i1)) <= 1e-9 * exact.i0 * radius
    assert np.max(np.abs(exact.i2 - oracle.i2)) <= 1e-9 * exact.i0 * radius ** 2


@pytest.mark.parametrize('dim', [1, 2, 3])
def test_moments_match_quadrature_oracle(dim, engine):
    rng = np.random.default_rng(100 + dim)
    polytope = random_polytope(rng, dim)
    w = rng.uniform(-1.0, 1.0, size=dim)
    assert_matches_oracle(polytope, w, polytope_exp_moments(polytope, w), engine.oracle(polytope, w))


@pytest.mark.slow
def test_moments_match_quadrature_oracle_on_random_batch():
    rng = np.random.default_rng(2024)
    for index in range(25):
        dim = 1 + index % 3
        polytope = random_polytope(rng, dim)
        for _ in range(4):
            w = rng.uniform(-1.0, 1.0, size=dim)
            assert_matches_oracle(polytope, w, polytope_exp_moments(polytope, w),
                                  quadrature_oracle(polytope, w))


def test_oracle_selector_and_budget():
    polytope = canonical_polytope(BL1_FAN)
    with pytest.raises(ValueError):
        quadrature_oracle(polytope, [0.0, 0.0], integrand_selector='i3')
    with pytest.raises(ToleranceNotReached):
        quadrature_oracle(polytope, [3.0, 3.0], tol=1e-15, max_simplices=4)
    volume_only = quadrature_oracle(polytope, [0.0, 0.0], integrand_selector='i0')
    assert volume_only.i0 == pytest.approx(volume(polytope), rel=1e-12)


def test_divided_difference_small_examples():
    assert divided_diff_exp([0.0, 0.0]) == pytest.approx(1.0, rel=1e-15)
    assert divided_diff_exp([0.0, 1.0]) == pytest.approx(math.e - 1.0, rel=1e-14)


def test_divided_difference_clustered_nodes():
    t, eps = 0.3, 1e-8
    assert divided_diff_exp([t, t + eps, t - eps]) == pytest.approx(math.exp(t) / 2.0, rel=1e-12)


def test_standard_triangle_at_zero_weight():
    simplex = Simplex(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    result = simplex_exp_moments(simplex, [0.0, 0.0])
    assert result.i0 == pytest.approx(0.5, rel=1e-15)
    np.testing.assert_allclose(result.i1, [1.0 / 6.0, 1.0 / 6.0], rtol=1e-14)


def test_unit_interval_second_moment_at_zero_weight():
    result = simplex_exp_moments(Simplex(np.array([[0.0], [1.0]])), [0.0])
    assert result.i2[0, 0] == pytest.approx(1.0 / 3.0, rel=1e-14)


def test_symmetric_interval_mass():
    interval = Polytope.from_vertices([[-1.0], [1.0]])
    result = polytope_exp_moments(interval, [1.0])
    assert result.i0 == pytest.approx(math.e - 1.0 / math.e, rel=1e-14)


def test_interval_barycenter_closed_form_and_limit():
    interval = Polytope.from_vertices([[-1.0], [1.0]])
    assert weighted_barycenter(interval, [1.0])[0] == pytest.approx(1.0 / math.tanh(1.0) - 1.0, rel=1e-13)
    values = [weighted_barycenter(interval, [w])[0] for w in (1.0, 5.0, 10.0, 20.0)]
    assert all(a < b for a, b in zip(values, values[1:]))
    # coth(w) - 1/w tends to the right endpoint
    assert values[-1] == pytest.approx(1.0 - 1.0 / 20.0, abs=1e-12)
