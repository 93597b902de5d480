"""Tests for Pauli strings and sums."""
import numpy as np
import pytest

from odeq.exceptions import (
    CapacityError,
    DimensionMismatchError,
    ShapeError,
    ValidationError,
)
from odeq.hatano_nelson import hn_jump_operator
from odeq.pauli import (
    PauliString,
    PauliSum,
    PauliTerm,
    anticommutes,
    commutator,
    frobenius_norm,
    multiply,
    pauli_action,
    pauli_decompose_dense,
    to_dense,
)

from . import random_matrix, random_pauli_sum

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
SINGLE = {"I": np.eye(2), "X": X, "Y": Y, "Z": Z}


def _kron(axes: str) -> np.ndarray:
    out = np.eye(1)
    for axis in axes:
        out = np.kron(out, SINGLE[axis])
    return out


@pytest.mark.parametrize(
    ("left", "right", "phase", "result"),
    [
        ("X", "X", 1, "I"),
        ("X", "Y", 1j, "Z"),
        ("Y", "X", -1j, "Z"),
        ("XZ", "YZ", 1j, "ZI"),
    ],
)
def test_multiply(left, right, phase, result):
    """Test the phase and string of products."""
    got_phase, got = multiply(PauliString(left), PauliString(right))
    assert got_phase == phase
    assert got == PauliString(result)
    np.testing.assert_allclose(_kron(left) @ _kron(right), got_phase * _kron(result))


def test_multiply_size_mismatch():
    """Test that strings on different qubit counts do not multiply."""
    with pytest.raises(DimensionMismatchError):
        multiply(PauliString("X"), PauliString("XX"))


def test_invalid_string():
    """Test that unknown axis labels are rejected."""
    with pytest.raises(ValidationError):
        PauliString("XA")
    with pytest.raises(ValidationError):
        PauliString("")


def test_weight_and_locality():
    """Test weight counts non-identity factors."""
    assert PauliString("IXIZ").weight == 2
    total = PauliSum.from_dict(4, {"IXIZ": 1.0, "XYZI": 2.0, "IIII": 3.0})
    assert total.locality == 3


def test_canonical_merging():
    """Test duplicate strings merge and cancelled terms drop."""
    total = PauliSum(
        2,
        (
            PauliTerm(1.0, PauliString("XX")),
            PauliTerm(-1.0, PauliString("XX")),
            PauliTerm(0.5, PauliString("ZI")),
            PauliTerm(0.25, PauliString("ZI")),
        ),
    )
    assert total.as_dict() == {"ZI": 0.75}


def test_term_dimension_mismatch():
    """Test that a term on the wrong qubit count is rejected."""
    with pytest.raises(DimensionMismatchError):
        PauliSum(2, (PauliTerm(1.0, PauliString("X")),))


def test_commutator_examples():
    """Test simple commutators."""
    x = PauliSum.single(1, {0: "X"})
    y = PauliSum.single(1, {0: "Y"})
    assert commutator(x, x).is_zero
    assert commutator(x, y).allclose(PauliSum.single(1, {0: "Z"}, 2j))


def test_self_commutator_vanishes(rng):
    """Test that every sum commutes with itself."""
    for n in (1, 2, 3):
        total = random_pauli_sum(rng, n, 6)
        assert commutator(total, total).is_zero


@pytest.mark.parametrize("hermitian", [True, False])
def test_is_hermitian_matches_dense(rng, hermitian):
    """Test real coefficients against the dense conjugate transpose."""
    for _ in range(5):
        total = random_pauli_sum(rng, 3, 6, hermitian=hermitian)
        dense = to_dense(total)
        dense_hermitian = np.allclose(dense, dense.conj().T, atol=1e-12, rtol=0)
        assert total.is_hermitian() is hermitian
        assert dense_hermitian is hermitian


def test_commutator_matches_dense(rng):
    """Test the commutator of random 3-qubit sums against dense products."""
    left = random_pauli_sum(rng, 3, 6)
    right = random_pauli_sum(rng, 3, 6)
    a, b = to_dense(left), to_dense(right)
    expected = a @ b - b @ a
    assert np.linalg.norm(to_dense(commutator(left, right)) - expected) <= 1e-12


def test_anticommutes():
    """Test anticommutation of strings."""
    assert anticommutes(PauliString("X"), PauliString("Z"))
    assert not anticommutes(PauliString("XX"), PauliString("ZZ"))


def test_product_matches_dense(rng):
    """Test operator products against dense matrices."""
    left = random_pauli_sum(rng, 2, 4)
    right = random_pauli_sum(rng, 2, 4)
    np.testing.assert_allclose(
        to_dense(left * right), to_dense(left) @ to_dense(right), atol=1e-12
    )


def test_arithmetic():
    """Test addition, subtraction, scaling and adjoint."""
    a = PauliSum.from_dict(1, {"X": 1.0, "Z": 2j})
    b = PauliSum.from_dict(1, {"X": 3.0})
    assert (a + b).as_dict() == {"X": 4.0, "Z": 2j}
    assert (a - b).as_dict() == {"X": -2.0, "Z": 2j}
    assert (2 * a).as_dict() == {"X": 2.0, "Z": 4j}
    assert a.adjoint().as_dict() == {"X": 1.0, "Z": -2j}
    assert not a.is_hermitian()
    assert a.real_part().is_hermitian()
    with pytest.raises(DimensionMismatchError):
        a + PauliSum.identity(2)


def test_to_dense_examples():
    """Test dense forms of small sums."""
    np.testing.assert_array_equal(to_dense(PauliSum.single(1, {0: "Z"})), Z)
    np.testing.assert_array_equal(to_dense(PauliSum.zero(2)), np.zeros((4, 4)))
    xx = to_dense(PauliSum.from_dict(2, {"XX": 0.5}))
    np.testing.assert_array_equal(xx, 0.5 * np.fliplr(np.eye(4)))


def test_to_dense_matches_kron(rng):
    """Test every term against explicit Kronecker products."""
    total = random_pauli_sum(rng, 3, 8)
    expected = sum(t.coeff * _kron(t.string.axes) for t in total)
    np.testing.assert_allclose(to_dense(total), expected, atol=1e-12)


def test_to_dense_capacity(dense_cap):
    """Test the dense cap."""
    dense_cap(2)
    with pytest.raises(CapacityError):
        to_dense(PauliSum.identity(3))


def test_pauli_action(rng):
    """Test the permutation-and-phase action against the dense matrix."""
    string = PauliString("YXZ")
    vec = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    perm, phase = pauli_action(string)
    np.testing.assert_allclose((phase * vec)[perm], _kron("YXZ") @ vec, atol=1e-14)


@pytest.mark.parametrize(
    ("matrix", "expected"),
    [(np.eye(2), {"I": 1.0}), (Z, {"Z": 1.0})],
)
def test_decompose_examples(matrix, expected):
    """Test decomposition of single-qubit matrices."""
    assert pauli_decompose_dense(matrix, 1).as_dict() == pytest.approx(expected)


def test_decompose_round_trip(rng):
    """Test that decomposition rebuilds random matrices."""
    for n in (1, 2, 3):
        matrix = random_matrix(rng, 1 << n)
        rebuilt = to_dense(pauli_decompose_dense(matrix, n))
        np.testing.assert_allclose(rebuilt, matrix, atol=1e-12)


def test_decompose_recovers_jump_closed_form():
    """Test that the principal root of K decomposes into the closed-form jump."""
    jump, k_op = hn_jump_operator(2, 0, 1.0)
    values, vectors = np.linalg.eigh(to_dense(k_op))
    root = (vectors * np.sqrt(np.clip(values, 0, None))) @ vectors.conj().T
    assert pauli_decompose_dense(root, 2).allclose(jump, atol=1e-10)


def test_decompose_shape_errors():
    """Test non-square and non power of two inputs."""
    with pytest.raises(ShapeError):
        pauli_decompose_dense(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        pauli_decompose_dense(np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        pauli_decompose_dense(np.eye(4), 1)


def test_frobenius_norm(rng):
    """Test the Frobenius norm without a dense matrix."""
    total = random_pauli_sum(rng, 3, 5)
    assert frobenius_norm(total) == pytest.approx(np.linalg.norm(to_dense(total)))


def test_text_serialisation():
    """Test line and JSON forms."""
    total = PauliSum.from_dict(2, {"XY": 0.1 + 0.2j, "ZI": -1.5})
    assert PauliSum.from_lines(total.to_lines()) == total
    assert PauliSum.from_json(2, total.to_json()) == total
    assert PauliSum.from_lines(["# comment", "", "1.0 0.0 XX"], 2).as_dict() == {
        "XX": 1.0
    }
    with pytest.raises(ValidationError):
        PauliSum.from_lines(["1.0 XX"])


def test_tensor_left():
    """Test the ancilla extension."""
    total = PauliSum.from_dict(1, {"Z": 2.0}).tensor_left("X")
    assert total.as_dict() == {"XZ": 2.0}
    assert total.n == 2
