import numpy as np
import pytest

from conftest import interval
from errors import DimensionMismatch, EigenSolveFailure, NonConvexIterate, NotConverged
from futaki_invariant import Decomposition
from monge_ampere_solver import ContinuationSolver
from spectral_check import (
    SturmLiouvilleProblem,
    first_eigenvalue,
    richardson,
    verify_holomorphic_identity,
    weighted_correlation,
)

BOX = 16.0


def ke_potential(x):
    return 2.0 * np.log(np.cosh(x / 2.0)) + 2.0 * np.log(2.0)


def ke_problem(n, bump=None):
    x = np.linspace(-BOX, BOX, n)
    f = ke_potential(x)
    if bump is not None:
        amplitude, center = bump
        f = f + amplitude * np.exp(-(x - center) ** 2)
    return SturmLiouvilleProblem.from_potential(x, f)


def extrapolated_eigenvalue(bump=None):
    values, spacings = [], []
    for n in (1025, 2049):
        problem = ke_problem(n, bump)
        values.append(first_eigenvalue(problem).eigenvalue)
        spacings.append(problem.spacing)
    return richardson(values, spacings)


@pytest.fixture(scope='module')
def split_states():
    decomp = Decomposition(interval(-1.0, 1.0), [interval(-0.5, 0.5), interval(-0.5, 0.5)])
    return [ContinuationSolver({'ma_solver': {'dim': 1, 'grid': n, 'box': 12.0}}).solve(decomp).state
            for n in (257, 513)]


def test_kaehler_einstein_potential_has_first_eigenvalue_one():
    result = first_eigenvalue(ke_problem(2049))
    assert result.eigenvalue == pytest.approx(1.0, abs=1e-3)
    assert abs(result.constant_mode) < 1e-8
    assert result.to_dict()['at_least_one']


def test_richardson_extrapolation_recovers_one():
    assert extrapolated_eigenvalue() == pytest.approx(1.0, abs=1e-5)


def test_eigenvector_is_the_translation_hamiltonian():
    problem = ke_problem(2049)
    result = first_eigenvalue(problem)
    assert weighted_correlation(problem, result.eigenvector, np.tanh(problem.x / 2.0)) > 1.0 - 1e-6
    assert result.eigenvector[-1] > result.eigenvector[0]
    _, mass = problem.assemble()
    assert np.sum(mass * result.eigenvector ** 2) == pytest.approx(1.0, rel=1e-12)
    assert abs(np.sum(mass * result.eigenvector)) < 1e-8


def test_perturbed_potentials_keep_eigenvalue_above_one():
    rng = np.random.default_rng(42)
    for _ in range(10):
        bump = (rng.uniform(-0.05, 0.05), rng.uniform(-2.0, 2.0))
        assert extrapolated_eigenvalue(bump) >= 1.0 - 1e-3


def test_assembled_stiffness_is_symmetric_with_constant_kernel():
    stiffness, mass = ke_problem(257).assemble()
    assert abs(stiffness - stiffness.T).max() == 0.0
    np.testing.assert_allclose(stiffness @ np.ones(stiffness.shape[0]), 0.0, atol=1e-12)
    assert np.all(mass > 0.0)


def test_coupled_split_has_first_eigenvalue_two(split_states):
    problem = SturmLiouvilleProblem.from_state(split_states[1], alpha=0)
    result = first_eigenvalue(problem)
    assert result.eigenvalue == pytest.approx(2.0, abs=1e-2)
    assert result.eigenvalue >= 1.0


def test_holomorphic_identity_converges_under_refinement(split_states):
    coarse, fine = (verify_holomorphic_identity(state) for state in split_states)
    assert fine['weighted_sup_residual'] < coarse['weighted_sup_residual'] / 3.0
    assert abs(fine['constants_sum']) < 1e-8
    assert fine['spacing'] == pytest.approx(coarse['spacing'] / 2.0)


def test_opposite_shifts_leave_the_identity_unchanged(split_states):
    state = split_states[0]
    base = verify_holomorphic_identity(state)
    shifted = verify_holomorphic_identity(state, shifts=[0.3, -0.3])
    assert shifted['sup_residual'] == pytest.approx(base['sup_residual'], rel=1e-9)
    assert shifted['summands'][0]['constant'] == pytest.approx(base['summands'][0]['constant'] + 0.3)
    with pytest.raises(DimensionMismatch):
        verify_holomorphic_identity(state, shifts=[0.3])


def test_identity_needs_a_converged_endpoint(split_states):
    with pytest.raises(NotConverged):
        verify_holomorphic_identity(split_states[0].with_values(t=0.5))
    solver = ContinuationSolver({'ma_solver': {'dim': 1, 'grid': 65}})
    start = solver.initial_state(Decomposition(interval(-1.0, 1.0), [interval(-1.0, 1.0)]), None)
    with pytest.raises(NotConverged):
        verify_holomorphic_identity(start.with_values(t=1.0))


def test_summand_index_is_checked(split_states):
    with pytest.raises(DimensionMismatch):
        SturmLiouvilleProblem.from_state(split_states[0], alpha=2)


@pytest.mark.parametrize('x, rho, m', [
    ([0.0, 1.0, 2.0], [1.0, -1.0, 1.0], [1.0, 1.0, 1.0]),
    ([0.0, 1.0, 2.0], [1.0, np.nan, 1.0], [1.0, 1.0, 1.0]),
    ([0.0, 1.0, 2.0], [1.0, 1.0], [1.0, 1.0, 1.0]),
    ([0.0, 1.0], [1.0, 1.0], [1.0, 1.0]),
])
def test_bad_densities_are_rejected(x, rho, m):
    with pytest.raises(EigenSolveFailure):
        SturmLiouvilleProblem(x, rho, m)


def test_concave_potential_is_rejected():
    x = np.linspace(-1.0, 1.0, 11)
    with pytest.raises(NonConvexIterate):
        SturmLiouvilleProblem.from_potential(x, -x ** 2)


def test_richardson_on_exact_quadratic_model():
    spacings = [0.1, 0.05]
    values = [3.0 + 7.0 * h ** 2 for h in spacings]
    assert richardson(values, spacings) == pytest.approx(3.0, abs=1e-12)
    with pytest.raises(ValueError):
        richardson([1.0], [0.1])
