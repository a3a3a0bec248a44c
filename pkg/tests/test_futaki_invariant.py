import numpy as np
import pytest

from conftest import BL1_FAN, BL3_FAN, CP2_FAN, bl1_soliton_constant, interval
from errors import ArityMismatch, DimensionMismatch, InvalidDecomposition, SchemaError
from futaki_invariant import (
    Decomposition,
    futaki,
    futaki_twisted,
    check_normalizations,
    coupled_ke_exists,
    vanishing_tolerance,
)
from polytope_geometry import Polytope, canonical_polytope, translate

# Bl1 CP^2 = T + S with T = conv(0, 2e1, 2e2) and S = conv(-e1, -e2)
BL1_TRIANGLE = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
BL1_SEGMENT = np.array([[-1.0, 0.0], [0.0, -1.0]])


def bl1_piece(a, b):
    points = [a * t + b * s for t in BL1_TRIANGLE for s in BL1_SEGMENT]
    return Polytope.from_vertices(points)


def slab_mean(a, b):
    """Mean of x + y over a T + b S; the slice at level u + b has length proportional to u + b."""
    return (4.0 * a * a / 3.0 + a * b) / (a + b) - b


@pytest.mark.parametrize('name', ['cp1_decomposition', 'cp1_split_decomposition',
                                  'cp2_decomposition', 'hexagon_decomposition'])
def test_symmetric_decompositions_have_vanishing_obstruction(name, request, engine):
    decomp = request.getfixturevalue(name)
    exists, report = coupled_ke_exists(decomp, engine=engine)
    assert exists
    assert report.norm < 1e-12


def test_bl1_obstruction_is_twice_the_centroid(bl1_decomposition):
    report = futaki_twisted(bl1_decomposition, [[0.0, 0.0]])
    np.testing.assert_allclose(report.vector, [1.0 / 12.0, 1.0 / 12.0], atol=1e-13)
    assert not report.vanishes
    assert futaki(bl1_decomposition, [1.0, 1.0]) == pytest.approx(1.0 / 6.0, abs=1e-13)
    assert futaki(bl1_decomposition, [1.0, -1.0]) == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize('a, b', [(0.5, 0.5), (0.25, 0.75), (0.9, 0.1), (0.3, 0.6)])
def test_bl1_two_summand_splits_are_obstructed(a, b):
    summands = [bl1_piece(a, b), bl1_piece(1.0 - a, 1.0 - b)]
    decomp = Decomposition(canonical_polytope(BL1_FAN), summands)
    assert decomp.check().passed
    expected = slab_mean(a, b) + slab_mean(1.0 - a, 1.0 - b)
    assert futaki(decomp, [1.0, 1.0]) == pytest.approx(expected, abs=1e-12)
    exists, report = coupled_ke_exists(decomp)
    assert not exists
    assert report.norm > 0.1


def test_futaki_is_linear_in_the_vector(bl1_decomposition):
    u = np.array([0.3, -2.0])
    v = np.array([1.5, 0.25])
    combined = futaki(bl1_decomposition, 2.0 * u - 3.0 * v)
    assert combined == pytest.approx(2.0 * futaki(bl1_decomposition, u) - 3.0 * futaki(bl1_decomposition, v),
                                     abs=1e-13)


def test_opposite_translations_leave_the_vector_unchanged(hexagon_decomposition):
    shift = np.array([0.2, -0.35])
    first, second = hexagon_decomposition.summands
    moved = Decomposition(hexagon_decomposition.target, [translate(first, shift), translate(second, -shift)])
    assert moved.check().passed
    np.testing.assert_allclose(futaki_twisted(moved, [[0, 0], [0, 0]]).vector, [0.0, 0.0], atol=1e-13)


def test_soliton_field_kills_the_twisted_obstruction(bl1_decomposition, engine):
    c = bl1_soliton_constant()
    report = futaki_twisted(bl1_decomposition, [[c, c]], tol=1e-9, engine=engine)
    assert report.vanishes
    assert report.norm < 1e-10
    assert engine.get_stats()['evaluations'] >= 1


def test_weight_arity_and_dimension_are_checked(hexagon_decomposition):
    with pytest.raises(ArityMismatch):
        futaki_twisted(hexagon_decomposition, [[0.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        futaki_twisted(hexagon_decomposition, [[0.0, 0.0], [0.0]])
    with pytest.raises(DimensionMismatch):
        futaki(hexagon_decomposition, [1.0, 0.0, 0.0])


def test_wrong_summands_raise_invalid_decomposition():
    third = Polytope.from_vertices(np.array([[-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]]) / 3.0)
    decomp = Decomposition(canonical_polytope(CP2_FAN), [third, third])
    with pytest.raises(InvalidDecomposition):
        futaki_twisted(decomp, [[0, 0], [0, 0]])
    # the normalization report describes the failure instead of raising
    report = check_normalizations(decomp)
    assert not report.support_passed
    assert report.support_deviation > 0.1


def test_summand_dimension_must_match_target():
    with pytest.raises(DimensionMismatch):
        Decomposition(canonical_polytope(CP2_FAN), [Polytope.from_vertices([[-1.0], [1.0]])])
    with pytest.raises(InvalidDecomposition):
        Decomposition(canonical_polytope(CP2_FAN), [])


def test_normalizations_on_hexagon(hexagon_decomposition, engine):
    report = check_normalizations(hexagon_decomposition, engine=engine)
    assert report.support_passed
    assert report.parallel
    assert report.first_moment_passed
    assert report.minkowski_barycenter_passed
    assert report.translation_ambiguity == 2
    data = report.to_dict()
    assert data['support']['passed'] is True


def test_normalizations_on_bl1_fail_the_moment_conditions(bl1_decomposition):
    report = check_normalizations(bl1_decomposition)
    assert report.support_passed
    assert not report.first_moment_passed
    assert not report.minkowski_barycenter_passed
    assert report.translation_ambiguity == 0
    np.testing.assert_allclose(report.first_moment_sum, [1.0 / 3.0, 1.0 / 3.0], atol=1e-12)


def test_vanishing_tolerance_scales_with_circumradius(hexagon_decomposition):
    assert vanishing_tolerance(hexagon_decomposition, 0.5) == 0.5
    radius = hexagon_decomposition.target.circumradius
    assert vanishing_tolerance(hexagon_decomposition) == pytest.approx(1e-9 * max(1.0, radius))


def test_decomposition_from_dict_with_fan():
    data = {
        'fan': BL3_FAN,
        'summands': [
            {'vertices': [[0, 0], [1, 0], [0, 1]]},
            {'vertices': [[0, 0], [-1, 0], [0, -1]]},
        ],
    }
    decomp = Decomposition.from_dict(data)
    assert decomp.k == 2
    assert decomp.check().passed
    again = Decomposition.from_dict(decomp.to_dict())
    assert again.target.same_body(decomp.target)


@pytest.mark.parametrize('data, location', [
    ([], '$'),
    ({'fan': BL3_FAN}, '$.summands'),
    ({'fan': BL3_FAN, 'target': {'vertices': [[0, 0], [1, 0], [0, 1]]},
      'summands': [{'vertices': [[0, 0], [1, 0], [0, 1]]}]}, '$'),
    ({'fan': [], 'summands': [{'vertices': [[0, 0], [1, 0], [0, 1]]}]}, '$.fan'),
    ({'fan': BL3_FAN, 'summands': [{'vertices': [[0, 0], [1, 0], [0, 1]]}, {'dim': 2}]}, '$.summands[1]'),
])
def test_decomposition_schema_errors(data, location):
    with pytest.raises(SchemaError) as excinfo:
        Decomposition.from_dict(data)
    assert excinfo.value.location == location


def interval_split():
    return Decomposition(interval(-1.0, 1.0), [interval(-1.0, 0.0), interval(0.0, 1.0)])


def test_interval_split_pairing_vanishes():
    assert futaki(interval_split(), [1.0]) == pytest.approx(0.0, abs=1e-13)


def test_interval_split_weighted_vector_matches_quadrature():
    from scipy.integrate import quad

    def tilted_mean(lo, hi):
        mass = quad(np.exp, lo, hi, epsabs=1e-15)[0]
        return quad(lambda x: x * np.exp(x), lo, hi, epsabs=1e-15)[0] / mass

    report = futaki_twisted(interval_split(), [[1.0], [1.0]])
    expected = tilted_mean(-1.0, 0.0) + tilted_mean(0.0, 1.0)
    assert report.vector[0] == pytest.approx(expected, abs=1e-10)
    assert not report.vanishes


def test_interval_split_normalizations_pass():
    report = check_normalizations(interval_split())
    assert report.support_passed
    assert report.first_moment_passed
    assert report.first_moment_sum[0] == pytest.approx(0.0, abs=1e-13)


def test_half_square_split_has_coupled_metric():
    square = canonical_polytope([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    half = Polytope.from_vertices(square.vertices / 2.0)
    exists, report = coupled_ke_exists(Decomposition(square, [half, half]))
    assert exists
    assert report.norm < 1e-13
