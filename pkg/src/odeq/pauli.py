"""Pauli strings and complex-weighted Pauli sums."""
from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from functools import lru_cache
import math
from numbers import Number
from typing import Any

import numpy as np

from .const import DROP_TOLERANCE, HERMITIAN_TOLERANCE, PAULI_AXES
from .exceptions import DimensionMismatchError, ShapeError, ValidationError
from .util import check_dense_capacity, parity, qubits_for_dim

# Single-qubit products: (a, b) -> (phase, c) with a.b = phase * c
_PRODUCT_TABLE: dict[tuple[str, str], tuple[complex, str]] = {
    ("I", "I"): (1, "I"),
    ("I", "X"): (1, "X"),
    ("I", "Y"): (1, "Y"),
    ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"),
    ("X", "X"): (1, "I"),
    ("X", "Y"): (1j, "Z"),
    ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"),
    ("Y", "X"): (-1j, "Z"),
    ("Y", "Y"): (1, "I"),
    ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"),
    ("Z", "X"): (1j, "Y"),
    ("Z", "Y"): (-1j, "X"),
    ("Z", "Z"): (1, "I"),
}

_AXIS_FROM_BITS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_I_POWERS = np.array([1, 1j, -1, -1j], dtype=np.complex128)


@dataclass(frozen=True, order=True)
class PauliString:
    """Phase-free tensor product of single-qubit Paulis.

    Qubit 0 is the leftmost character and the most significant bit of a
    computational-basis index.
    """

    axes: str

    def __post_init__(self) -> None:
        """Validate the axis labels."""
        if not self.axes or any(axis not in PAULI_AXES for axis in self.axes):
            raise ValidationError(f"Invalid Pauli string {self.axes!r}")

    @classmethod
    def identity(cls, n: int) -> PauliString:
        """Return the identity string on n qubits."""
        return cls("I" * n)

    @classmethod
    def from_sites(cls, n: int, sites: Mapping[int, str]) -> PauliString:
        """Build a string from a {qubit: axis} map, identity elsewhere."""
        axes = ["I"] * n
        for site, axis in sites.items():
            if not 0 <= site < n:
                raise DimensionMismatchError(f"Site {site} outside {n} qubits")
            axes[site] = axis
        return cls("".join(axes))

    @property
    def n(self) -> int:
        """Return the qubit count."""
        return len(self.axes)

    @property
    def weight(self) -> int:
        """Return the number of non-identity factors."""
        return sum(axis != "I" for axis in self.axes)

    def tensor_left(self, other: PauliString) -> PauliString:
        """Return other (x) self, placing other on the leading qubits."""
        return PauliString(other.axes + self.axes)

    def __str__(self) -> str:
        """Return the axis labels."""
        return self.axes


def multiply(left: PauliString, right: PauliString) -> tuple[complex, PauliString]:
    """Return (phase, R) with phase * R equal to the matrix product left.right."""
    if left.n != right.n:
        raise DimensionMismatchError(
            f"Cannot multiply strings on {left.n} and {right.n} qubits"
        )
    phase: complex = 1
    axes = []
    for a, b in zip(left.axes, right.axes):
        factor, c = _PRODUCT_TABLE[(a, b)]
        phase *= factor
        axes.append(c)
    return complex(phase), PauliString("".join(axes))


@lru_cache(maxsize=4096)
def pauli_masks(string: PauliString) -> tuple[int, int, int]:
    """Return (x_mask, z_mask, y_count) of a string.

    x_mask flags X and Y factors, z_mask flags Z and Y factors.
    """
    x_mask = z_mask = 0
    for qubit, axis in enumerate(string.axes):
        bit = 1 << (string.n - 1 - qubit)
        if axis in "XY":
            x_mask |= bit
        if axis in "ZY":
            z_mask |= bit
    return x_mask, z_mask, string.axes.count("Y")


@lru_cache(maxsize=4096)
def pauli_action(string: PauliString) -> tuple[np.ndarray, np.ndarray]:
    """Return (perm, phase) with (P v)[k] = (phase * v)[perm[k]]."""
    x_mask, z_mask, y_count = pauli_masks(string)
    index = np.arange(1 << string.n, dtype=np.int64)
    signs = 1 - 2 * parity(index & z_mask, string.n)
    phase = (1j**y_count) * signs.astype(np.complex128)
    perm = index ^ x_mask
    perm.setflags(write=False)
    phase.setflags(write=False)
    return perm, phase


@dataclass(frozen=True)
class PauliTerm:
    """A complex coefficient on a Pauli string."""

    coeff: complex
    string: PauliString

    def __post_init__(self) -> None:
        """Validate the coefficient."""
        if not np.isfinite(complex(self.coeff)):
            raise ValidationError(f"Non-finite coefficient on {self.string}")
        object.__setattr__(self, "coeff", complex(self.coeff))


def _canonical_terms(
    n: int, terms: Iterable[PauliTerm], tolerance: float
) -> tuple[PauliTerm, ...]:
    """Merge duplicate strings, drop small coefficients and sort."""
    merged: dict[PauliString, complex] = {}
    for term in terms:
        if term.string.n != n:
            raise DimensionMismatchError(
                f"Term {term.string} does not act on {n} qubits"
            )
        merged[term.string] = merged.get(term.string, 0j) + term.coeff
    return tuple(
        PauliTerm(coeff, string)
        for string, coeff in sorted(merged.items())
        if abs(coeff) >= tolerance
    )


@dataclass(frozen=True)
class PauliSum:
    """Canonical weighted sum of Pauli strings on n qubits."""

    n: int
    terms: tuple[PauliTerm, ...] = ()

    def __post_init__(self) -> None:
        """Canonicalize the terms."""
        if self.n < 1:
            raise ValidationError(f"A Pauli sum needs at least one qubit, got {self.n}")
        object.__setattr__(
            self, "terms", _canonical_terms(self.n, self.terms, DROP_TOLERANCE)
        )

    @classmethod
    def zero(cls, n: int) -> PauliSum:
        """Return the empty sum."""
        return cls(n)

    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> PauliSum:
        """Return coeff times the identity."""
        return cls(n, (PauliTerm(coeff, PauliString.identity(n)),))

    @classmethod
    def from_dict(cls, n: int, mapping: Mapping[str, complex]) -> PauliSum:
        """Build a sum from {axes: coeff}."""
        return cls(n, tuple(PauliTerm(c, PauliString(a)) for a, c in mapping.items()))

    @classmethod
    def single(cls, n: int, sites: Mapping[int, str], coeff: complex = 1.0) -> PauliSum:
        """Return coeff times the string with the given {site: axis} factors."""
        return cls(n, (PauliTerm(coeff, PauliString.from_sites(n, sites)),))

    def __iter__(self) -> Iterator[PauliTerm]:
        """Iterate over the canonical terms."""
        return iter(self.terms)

    def __len__(self) -> int:
        """Return the number of terms."""
        return len(self.terms)

    @property
    def is_zero(self) -> bool:
        """Return True for the empty sum."""
        return not self.terms

    @property
    def locality(self) -> int:
        """Return the largest string weight in the sum."""
        return max((term.string.weight for term in self.terms), default=0)

    def coefficient(self, axes: str) -> complex:
        """Return the coefficient on a string, zero if absent."""
        for term in self.terms:
            if term.string.axes == axes:
                return term.coeff
        return 0j

    def as_dict(self) -> dict[str, complex]:
        """Return {axes: coeff}."""
        return {term.string.axes: term.coeff for term in self.terms}

    def is_hermitian(self, tolerance: float = HERMITIAN_TOLERANCE) -> bool:
        """Return True if every coefficient is real."""
        return all(abs(term.coeff.imag) <= tolerance for term in self.terms)

    def adjoint(self) -> PauliSum:
        """Return the conjugate transpose."""
        return PauliSum(
            self.n, tuple(PauliTerm(t.coeff.conjugate(), t.string) for t in self.terms)
        )

    def real_part(self) -> PauliSum:
        """Return the sum with imaginary coefficient parts removed."""
        return PauliSum(
            self.n, tuple(PauliTerm(t.coeff.real, t.string) for t in self.terms)
        )

    def tensor_left(self, axis: str) -> PauliSum:
        """Return (axis) (x) self on n + 1 qubits."""
        prefix = PauliString(axis)
        return PauliSum(
            self.n + 1,
            tuple(PauliTerm(t.coeff, t.string.tensor_left(prefix)) for t in self.terms),
        )

    def _check(self, other: PauliSum) -> None:
        if self.n != other.n:
            raise DimensionMismatchError(
                f"Pauli sums act on {self.n} and {other.n} qubits"
            )

    def __add__(self, other: PauliSum) -> PauliSum:
        """Return self + other."""
        self._check(other)
        return PauliSum(self.n, self.terms + other.terms)

    def __neg__(self) -> PauliSum:
        """Return -self."""
        return -1.0 * self

    def __sub__(self, other: PauliSum) -> PauliSum:
        """Return self - other."""
        return self + (-other)

    def __mul__(self, other: Any) -> PauliSum:
        """Return the operator product self.other or a scalar multiple."""
        if isinstance(other, Number):
            scale = complex(other)  # type: ignore[arg-type]
            return PauliSum(
                self.n, tuple(PauliTerm(t.coeff * scale, t.string) for t in self.terms)
            )
        if not isinstance(other, PauliSum):
            return NotImplemented
        self._check(other)
        products = []
        for left in self.terms:
            for right in other.terms:
                phase, string = multiply(left.string, right.string)
                products.append(PauliTerm(phase * left.coeff * right.coeff, string))
        return PauliSum(self.n, tuple(products))

    def __rmul__(self, other: Any) -> PauliSum:
        """Return scalar * self."""
        if isinstance(other, Number):
            return self * other
        return NotImplemented

    def allclose(self, other: PauliSum, atol: float = 1e-12) -> bool:
        """Return True if coefficients agree within atol."""
        self._check(other)
        return all(abs(term.coeff) <= atol for term in (self - other).terms)

    def to_lines(self) -> list[str]:
        """Serialise as 'coeff_re coeff_im AXES' lines."""
        return [f"{t.coeff.real!r} {t.coeff.imag!r} {t.string.axes}" for t in self.terms]

    @classmethod
    def from_lines(cls, lines: Iterable[str], n: int | None = None) -> PauliSum:
        """Parse 'coeff_re coeff_im AXES' lines; blank and # lines are skipped."""
        terms = []
        for raw in lines:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                real, imag, axes = line.split()
                terms.append(PauliTerm(complex(float(real), float(imag)), PauliString(axes)))
            except ValueError as ex:
                raise ValidationError(f"Malformed Pauli line {line!r}") from ex
        if n is None:
            if not terms:
                raise ValidationError("Cannot infer the qubit count of an empty sum")
            n = terms[0].string.n
        return cls(n, tuple(terms))

    def to_json(self) -> list[list[Any]]:
        """Return [[re, im, axes], ...]."""
        return [[t.coeff.real, t.coeff.imag, t.string.axes] for t in self.terms]

    @classmethod
    def from_json(cls, n: int, items: Iterable[Iterable[Any]]) -> PauliSum:
        """Build a sum from [[re, im, axes], ...]."""
        terms = []
        for real, imag, axes in items:
            terms.append(PauliTerm(complex(float(real), float(imag)), PauliString(axes)))
        return cls(n, tuple(terms))

    def __str__(self) -> str:
        """Return a readable sum."""
        if not self.terms:
            return "0"
        return " + ".join(f"({t.coeff:.6g}) {t.string}" for t in self.terms)


def commutator(left: PauliSum, right: PauliSum) -> PauliSum:
    """Return left.right - right.left."""
    if left.n != right.n:
        raise DimensionMismatchError(
            f"Cannot commute sums on {left.n} and {right.n} qubits"
        )
    terms = []
    for a in left.terms:
        for b in right.terms:
            phase_ab, string = multiply(a.string, b.string)
            phase_ba, _ = multiply(b.string, a.string)
            # Commuting strings cancel exactly; anticommuting ones double.
            if phase_ab == phase_ba:
                continue
            terms.append(PauliTerm(2 * phase_ab * a.coeff * b.coeff, string))
    return PauliSum(left.n, tuple(terms))


def anticommutes(left: PauliString, right: PauliString) -> bool:
    """Return True if the two strings anticommute."""
    phase_ab, _ = multiply(left, right)
    phase_ba, _ = multiply(right, left)
    return phase_ab != phase_ba


def to_dense(pauli_sum: PauliSum) -> np.ndarray:
    """Return the 2**n x 2**n matrix of a Pauli sum."""
    check_dense_capacity(pauli_sum.n)
    dim = 1 << pauli_sum.n
    matrix = np.zeros((dim, dim), dtype=np.complex128)
    columns = np.arange(dim)
    for term in pauli_sum.terms:
        x_mask, _, _ = pauli_masks(term.string)
        _, phase = pauli_action(term.string)
        matrix[columns ^ x_mask, columns] += term.coeff * phase
    return matrix


def _walsh_hadamard(rows: np.ndarray) -> np.ndarray:
    """Return the Sylvester-ordered Walsh-Hadamard transform along the last axis."""
    out = rows.copy()
    batch, dim = out.shape
    half = 1
    while half < dim:
        view = out.reshape(batch, dim // (2 * half), 2, half)
        upper = view[:, :, 0, :].copy()
        lower = view[:, :, 1, :]
        view[:, :, 0, :] = upper + lower
        view[:, :, 1, :] = upper - lower
        half *= 2
    return out


def pauli_decompose_dense(
    matrix: np.ndarray, n: int | None = None, tolerance: float = DROP_TOLERANCE
) -> PauliSum:
    """Return the Pauli sum with coefficients trace(P.M) / 2**n."""
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"Expected a square matrix, got shape {matrix.shape}")
    dim = matrix.shape[0]
    n_found = qubits_for_dim(dim)
    if n is not None and n != n_found:
        raise ShapeError(f"Matrix of dimension {dim} does not act on {n} qubits")
    n = n_found
    if n < 1:
        raise ShapeError("A 1x1 matrix has no qubits to decompose over")
    check_dense_capacity(n)

    index = np.arange(dim)
    # shifted[m, b] = M[b, b ^ m]
    shifted = matrix[index[None, :], index[None, :] ^ index[:, None]]
    transformed = _walsh_hadamard(shifted)
    # Y factors sit where both masks are set; each contributes a factor i.
    overlap = index[:, None] & index[None, :]
    y_counts = np.zeros_like(overlap)
    for bit in range(n):
        y_counts += (overlap >> bit) & 1
    coeffs = _I_POWERS[y_counts % 4] * transformed / dim

    terms = []
    for x_mask, z_mask in zip(*np.nonzero(np.abs(coeffs) >= tolerance)):
        axes = "".join(
            _AXIS_FROM_BITS[((x_mask >> (n - 1 - q)) & 1, (z_mask >> (n - 1 - q)) & 1)]
            for q in range(n)
        )
        terms.append(PauliTerm(coeffs[x_mask, z_mask], PauliString(axes)))
    return PauliSum(n, tuple(terms))


def frobenius_norm(pauli_sum: PauliSum) -> float:
    """Return the Frobenius norm of the dense operator without building it."""
    return math.sqrt((1 << pauli_sum.n) * sum(abs(t.coeff) ** 2 for t in pauli_sum))
