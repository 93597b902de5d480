"""Tests for problem construction."""
import json

import numpy as np
import pytest

from odeq.const import CONF_DATA, CONF_KIND, PSI0_AMPLITUDES, PSI0_BASIS, PSI0_UNIFORM
from odeq.exceptions import (
    DimensionMismatchError,
    DissipativeConditionViolated,
    ShapeError,
    ValidationError,
)
from odeq.pauli import PauliSum, to_dense
from odeq.problem import (
    OdeProblem,
    build_dilation,
    build_problem,
    check_dissipative,
    dump_problem,
    factorize_dissipator,
    load_problem,
    make_initial_state,
    problem_from_config,
    problem_from_dense,
    problem_to_config,
    split_coefficient,
)

from . import random_problem


def test_split_coefficient_examples():
    """Test the Hermitian and anti-Hermitian parts."""
    hermitian = np.array([[-1.0, 0.5], [0.5, -2.0]])
    anti, herm = split_coefficient(hermitian)
    np.testing.assert_allclose(anti, 0)
    np.testing.assert_allclose(herm, hermitian)

    skew = np.array([[1j, 2.0], [-2.0, 0]])
    anti, herm = split_coefficient(skew)
    np.testing.assert_allclose(anti, skew / 1j)
    np.testing.assert_allclose(herm, 0)

    matrix = np.array([[-1.0, 1.0], [0.0, -1.0]])
    anti, herm = split_coefficient(matrix)
    np.testing.assert_allclose(herm, [[-1.0, 0.5], [0.5, -1.0]])
    np.testing.assert_allclose(herm + 1j * anti, matrix)


def test_split_coefficient_shape():
    """Test that non-square input is rejected."""
    with pytest.raises(ShapeError):
        split_coefficient(np.zeros((2, 3)))


def test_factorize_dissipator_examples():
    """Test scalar square roots."""
    np.testing.assert_allclose(factorize_dissipator(np.zeros((2, 2))), 0)
    np.testing.assert_allclose(
        factorize_dissipator(np.diag([0.0, -4.0])), np.diag([0.0, 2.0])
    )


def test_factorize_dissipator_violation():
    """Test that a positive eigenvalue reports the fixing shift."""
    with pytest.raises(DissipativeConditionViolated) as err:
        factorize_dissipator(np.diag([0.5, -1.0]))
    assert err.value.eigenvalue == pytest.approx(0.5)
    assert err.value.shift == pytest.approx(0.5)


def test_factorize_random(rng):
    """Test V = -L^dag L for a random semidefinite V."""
    matrix = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    dissipator = -matrix.conj().T @ matrix
    root = factorize_dissipator(dissipator)
    np.testing.assert_allclose(-root.conj().T @ root, dissipator, atol=1e-10)


def test_build_dilation_examples():
    """Test the ancilla branches of G."""
    assert build_dilation(PauliSum.zero(1)).g_pauli.is_zero
    assert build_dilation(PauliSum.identity(1)).g_pauli.as_dict() == {"XI": 1.0}
    assert build_dilation(PauliSum.single(1, {0: "Z"}, 1j)).g_pauli.as_dict() == {
        "YZ": 1.0
    }


def test_dilation_dense_form(rng):
    """Test G = [[0, L^dag], [L, 0]] for a complex jump."""
    jump = PauliSum.from_dict(2, {"XZ": 0.3 + 0.4j, "IY": -0.2j, "ZZ": 0.7})
    dilation = build_dilation(jump)
    block = to_dense(jump)
    zero = np.zeros_like(block)
    expected = np.block([[zero, block.conj().T], [block, zero]])
    np.testing.assert_allclose(dilation.g_dense, expected, atol=1e-14)
    np.testing.assert_allclose(to_dense(dilation.g_pauli), expected, atol=1e-14)
    assert dilation.g_pauli.is_hermitian()
    assert dilation.g_pauli.locality <= jump.locality + 1


def test_dilation_without_dense_form(dense_cap):
    """Test that the dense shadow is skipped above the cap."""
    dense_cap(2)
    dilation = build_dilation(PauliSum.identity(2))
    assert dilation.g_dense is None


def test_problem_validation():
    """Test input checks."""
    h = PauliSum.single(1, {0: "Z"})
    with pytest.raises(ValidationError):
        OdeProblem(PauliSum.single(1, {0: "Z"}, 1j), (), np.array([1, 0]), 1.0)
    with pytest.raises(DimensionMismatchError):
        OdeProblem(h, (PauliSum.identity(2),), np.array([1, 0]), 1.0)
    with pytest.raises(DimensionMismatchError):
        OdeProblem(h, (), np.array([1, 0, 0, 0]), 1.0)
    with pytest.raises(ValidationError):
        OdeProblem(h, (), np.array([1, 0]), -1.0)
    with pytest.raises(ValidationError):
        OdeProblem(h, (), np.array([0, 0]), 1.0)


def test_dense_coefficient(small_problem):
    """Test A = -iH - sum L^dag L and its dissipative condition."""
    problem = small_problem
    coefficient = -1j * to_dense(problem.hamiltonian)
    for jump in problem.jumps:
        dense = to_dense(jump)
        coefficient -= dense.conj().T @ dense
    np.testing.assert_allclose(problem.dense_coefficient, coefficient, atol=1e-12)
    hermitian = (coefficient + coefficient.conj().T) / 2
    assert np.linalg.eigvalsh(hermitian)[-1] <= 1e-12
    assert check_dissipative(problem) >= -1e-12


def test_problem_from_dense_reconstructs(rng):
    """Test split, factorize and Pauli decomposition end to end."""
    dim = 4
    anti = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    anti = anti - anti.conj().T
    root = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    coefficient = anti - root.conj().T @ root
    problem = problem_from_dense(coefficient, np.eye(dim)[0], 1.0)
    np.testing.assert_allclose(problem.dense_coefficient, coefficient, atol=1e-9)
    assert len(problem.jumps) == 1


def test_problem_from_dense_rejects_growth():
    """Test that a growing generator is rejected with the shift it needs."""
    with pytest.raises(DissipativeConditionViolated) as err:
        problem_from_dense(np.diag([1.0, -1.0]), [1.0, 0.0], 1.0)
    assert err.value.shift == pytest.approx(1.0)


@pytest.mark.parametrize(
    ("description", "expected"),
    [
        ({CONF_KIND: PSI0_BASIS, CONF_DATA: "10"}, [0, 0, 1, 0]),
        ({CONF_KIND: PSI0_BASIS, CONF_DATA: 1}, [0, 1, 0, 0]),
        ({CONF_KIND: PSI0_UNIFORM}, [0.5, 0.5, 0.5, 0.5]),
        (
            {CONF_KIND: PSI0_AMPLITUDES, CONF_DATA: [1, [0, 1], 0, 0]},
            [1, 1j, 0, 0],
        ),
    ],
)
def test_make_initial_state(description, expected):
    """Test every initial-state kind."""
    np.testing.assert_allclose(make_initial_state(2, description), expected)


@pytest.mark.parametrize(
    "description",
    [
        {CONF_KIND: PSI0_BASIS, CONF_DATA: "102"},
        {CONF_KIND: PSI0_BASIS, CONF_DATA: "1"},
        {CONF_KIND: PSI0_BASIS, CONF_DATA: 9},
        {CONF_KIND: PSI0_BASIS},
        {CONF_KIND: PSI0_AMPLITUDES, CONF_DATA: "1"},
    ],
)
def test_make_initial_state_errors(description):
    """Test malformed initial states."""
    with pytest.raises(ValidationError):
        make_initial_state(2, description)


def test_config_round_trip(rng, tmp_path):
    """Test that files reproduce a problem bit for bit."""
    problem = random_problem(rng, 2, jumps=2)
    path = tmp_path / "problem.json"
    dump_problem(problem, path)
    loaded = load_problem(path)
    assert loaded.hamiltonian == problem.hamiltonian
    assert loaded.jumps == problem.jumps
    np.testing.assert_array_equal(loaded.psi0, problem.psi0)
    assert loaded.final_time == problem.final_time
    assert problem_to_config(loaded) == problem_to_config(problem)


def test_problem_from_config_errors(tmp_path):
    """Test schema and file errors."""
    with pytest.raises(ValidationError):
        problem_from_config({"n": 1, "H": [[1.0, 0.0, "Z"]]})
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_problem(path)


def test_problem_from_config():
    """Test a hand-written problem description."""
    config = {
        "n": 1,
        "H": [[0.5, 0.0, "X"]],
        "jumps": [[[1.0, 0.0, "I"]]],
        "psi0": {"kind": "basis", "data": "0"},
        "T": 2.0,
    }
    problem = problem_from_config(json.loads(json.dumps(config)))
    assert problem.n == 1
    assert problem.final_time == 2.0
    assert problem.jumps[0].as_dict() == {"I": 1.0}
    np.testing.assert_allclose(problem.psi0, [1, 0])


def test_with_final_time(small_problem):
    """Test copying a problem with a new horizon."""
    copy = small_problem.with_final_time(3.0)
    assert copy.final_time == 3.0
    assert copy.hamiltonian == small_problem.hamiltonian


def test_build_problem_above_cap(dense_cap, caplog):
    """Test that problems above the cap skip dense checks with a warning."""
    dense_cap(1)
    problem = build_problem(
        PauliSum.single(2, {0: "Z"}), [PauliSum.identity(2)], np.eye(4)[0], 1.0
    )
    assert not problem.dense_enabled
    assert "above the dense cap" in caplog.text
