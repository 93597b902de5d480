"""Tests for the dense references and error bounds."""
import math

import numpy as np
import pytest

from odeq.exceptions import ShapeError, ValidationError
from odeq.oracle import (
    BoundQuantities,
    compute_bound_quantities,
    cumulative_error_bound,
    dilation_block,
    exact_solution,
    exact_step_dense,
    expm_apply,
    lindblad_rk4,
    normalized_distance,
    normalized_error_bound,
    normalized_error_rows,
    ordered_commutator_sum,
    per_step_error_bound,
    solution_grid,
    spectral_norm,
    trace_distance,
    trotter_step_bound,
)
from odeq.pauli import PauliSum
from odeq.problem import build_dilation, build_problem

from . import damping_problem, decay_problem


def test_expm_apply_examples():
    """Test e^{At} v for diagonal generators."""
    vec = np.array([1.0, 1.0])
    np.testing.assert_allclose(expm_apply(np.zeros((2, 2)), vec, 3.0), vec)
    np.testing.assert_allclose(
        expm_apply(np.diag([-1.0, -2.0]), vec, 1.0), [math.exp(-1), math.exp(-2)]
    )


@pytest.mark.parametrize(
    ("matrix", "t", "error"),
    [
        (np.zeros((2, 3)), 1.0, ShapeError),
        (np.zeros((3, 3)), 1.0, ShapeError),
        (np.array([[np.nan, 0], [0, 0]]), 1.0, ValidationError),
        (np.zeros((2, 2)), -1.0, ValidationError),
    ],
)
def test_expm_apply_errors(matrix, t, error):
    """Test malformed generators and negative times."""
    with pytest.raises(error):
        expm_apply(matrix, np.ones(matrix.shape[0]), t)


def test_spectral_norm(rng):
    """Test against the largest singular value."""
    matrix = rng.standard_normal((4, 4))
    assert spectral_norm(matrix) == pytest.approx(np.linalg.norm(matrix, 2))
    assert spectral_norm(np.zeros((0, 0))) == 0.0


def test_exact_solution_is_non_increasing(small_problem):
    """Test that a dissipative generator never grows the norm."""
    times, states = solution_grid(small_problem, 33)
    norms = np.linalg.norm(states, axis=1)
    assert times[-1] == small_problem.final_time
    assert np.all(np.diff(norms) <= 1e-12)
    np.testing.assert_allclose(states[-1], exact_solution(small_problem), atol=1e-10)


def test_exact_step_without_dissipation():
    """Test that L = 0 reduces a step to e^{-i tau H}."""
    problem = build_problem(
        PauliSum.from_dict(1, {"Z": 1.0}), [PauliSum.zero(1)], [1.0, 0.0], 1.0
    )
    np.testing.assert_allclose(
        exact_step_dense(problem, 0.2), np.diag(np.exp([-0.2j, 0.2j])), atol=1e-14
    )
    np.testing.assert_allclose(exact_step_dense(problem, 0.0), np.eye(2))
    with pytest.raises(ValidationError):
        exact_step_dense(problem, -0.1)


def test_dilation_block_of_identity():
    """Test that L = I keeps cos(sqrt(2 tau)) on the ancilla-0 block."""
    block = dilation_block(build_dilation(PauliSum.identity(1)), 0.08)
    np.testing.assert_allclose(block, math.cos(0.4) * np.eye(2), atol=1e-15)


def test_lindblad_constant_cases():
    """Test L = I and L = H = 0, which leave rho unchanged."""
    for problem in (
        decay_problem(),
        build_problem(PauliSum.zero(1), [PauliSum.zero(1)], [0.6, 0.8], 1.0),
    ):
        rhos = lindblad_rk4(problem, [0.5, 1.0])
        rho0 = np.outer(problem.psi0, problem.psi0.conj())
        for rho in rhos:
            np.testing.assert_allclose(rho, rho0, atol=1e-12)


def test_lindblad_damping_preserves_trace():
    """Test trace and Hermiticity of a damped driven qubit."""
    rhos = lindblad_rk4(damping_problem(), np.linspace(0, 1, 5))
    for rho in rhos:
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(rho)[0] >= -1e-10
    assert rhos[-1][1, 1].real < rhos[0][1, 1].real


def test_lindblad_pure_damping():
    """Test exponential relaxation of |1> with L = sqrt(rate) |0><1|."""
    problem = build_problem(
        PauliSum.zero(1),
        [PauliSum.from_dict(1, {"X": 0.5, "Y": 0.5j})],
        [0.0, 1.0],
        1.0,
    )
    rho = lindblad_rk4(problem, [1.0])[0]
    assert rho[1, 1].real == pytest.approx(math.exp(-2.0), abs=1e-8)


def test_lindblad_grid_errors(decay):
    """Test malformed time grids."""
    for grid in ([], [1.0, 0.5], [-1.0]):
        with pytest.raises(ValidationError):
            lindblad_rk4(decay, grid)


def test_bound_quantities_of_decay(decay):
    """Test the bound quantities of d psi/dt = -psi."""
    bounds = compute_bound_quantities(decay)
    assert bounds.commutator_sum == pytest.approx(0.0, abs=1e-12)
    assert bounds.sup_psi == pytest.approx(1.0)
    assert bounds.sup_L4 == pytest.approx(1.0)
    assert bounds.final_norm == pytest.approx(math.exp(-1))
    assert bounds.converged
    assert bounds.as_dict()["grid_points"] >= 64


def test_bound_quantities_validation():
    """Test that negative quantities are rejected."""
    with pytest.raises(ValidationError):
        BoundQuantities(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        BoundQuantities(math.nan, 1.0, 1.0, 1.0)


def test_cumulative_error_bound():
    """Test the closed form for unit quantities."""
    bounds = BoundQuantities(2.0, 1.0, 3.0, 1.0, final_time=2.0)
    assert cumulative_error_bound(bounds, 4) == pytest.approx(1.0 + 2.0)
    with pytest.raises(ValidationError):
        cumulative_error_bound(bounds, 0)


def test_ordered_commutator_sum():
    """Test the nested commutator sum of two Pauli generators."""
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    assert ordered_commutator_sum([x, z]) == pytest.approx(2.0)
    assert ordered_commutator_sum([x, x]) == 0.0
    assert ordered_commutator_sum([]) == 0.0


def test_per_step_bound_holds(small_problem):
    """Test the operator-norm step bound against the exact propagator."""
    tau = 0.05
    step = exact_step_dense(small_problem, tau)
    exact = np.column_stack(
        [expm_apply(small_problem.dense_coefficient, e, tau) for e in np.eye(4)]
    )
    assert spectral_norm(step - exact) <= per_step_error_bound(small_problem, tau)


def test_trotter_step_bound():
    """Test the Pauli coefficient bound of H = X + Z."""
    assert trotter_step_bound(PauliSum.from_dict(1, {"X": 1.0, "Z": 1.0}), 0.1) == (
        pytest.approx(0.01)
    )
    assert trotter_step_bound(PauliSum.from_dict(2, {"ZI": 1.0, "IZ": 1.0}), 0.1) == 0


def test_normalized_error_bound():
    """Test the normalized distance and its premise."""
    psi = np.array([1.0, 0.0])
    phi = np.array([1.0, 0.1])
    assert normalized_distance(psi, phi) <= normalized_error_bound(psi, phi)
    assert normalized_error_bound(psi, phi) == pytest.approx(0.4)
    assert normalized_error_bound(psi, np.array([0.0, 1.0])) is None


def test_normalized_error_rows(rng):
    """Test the row-wise form against the scalar one."""
    psi = rng.standard_normal((5, 3))
    phi = psi + 0.01 * rng.standard_normal((5, 3))
    phi[4] = -psi[4]
    distance, bound = normalized_error_rows(psi, phi)
    for row in range(4):
        assert distance[row] == pytest.approx(normalized_distance(psi[row], phi[row]))
        assert bound[row] == pytest.approx(normalized_error_bound(psi[row], phi[row]))
        assert distance[row] <= bound[row]
    assert math.isnan(bound[4])
    with pytest.raises(ShapeError):
        normalized_error_rows(psi, phi[:, :2])


def test_trace_distance():
    """Test orthogonal and identical states."""
    zero = np.diag([1.0, 0.0])
    one = np.diag([0.0, 1.0])
    assert trace_distance(zero, one) == pytest.approx(1.0)
    assert trace_distance(zero, zero) == 0.0
    plus = np.full((2, 2), 0.5)
    assert trace_distance(zero, plus) == pytest.approx(math.sqrt(0.5))
