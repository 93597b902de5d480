"""Build and validate linear ODE problems d psi/dt = A psi."""
from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import scipy.linalg
import voluptuous as vol

from .const import (
    _LOGGER,
    CONF_DATA,
    CONF_H,
    CONF_JUMPS,
    CONF_KIND,
    CONF_N,
    CONF_PSI0,
    CONF_T,
    PSD_TOLERANCE,
    PSI0_AMPLITUDES,
    PSI0_BASIS,
    PSI0_KINDS,
    PSI0_UNIFORM,
)
from .exceptions import (
    DimensionMismatchError,
    DissipativeConditionViolated,
    ShapeError,
    ValidationError,
)
from .pauli import PauliSum, PauliTerm, pauli_decompose_dense, to_dense
from .util import as_state_array, dense_allowed, qubits_for_dim

CONF_SHIFT = "shift"
CONF_LABEL = "label"

PAULI_TERMS_SCHEMA = [vol.ExactSequence([vol.Coerce(float), vol.Coerce(float), str])]

PSI0_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_KIND): vol.In(PSI0_KINDS),
        vol.Optional(CONF_DATA): vol.Any(str, int, list, None),
    }
)

PROBLEM_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_N): vol.All(int, vol.Range(min=1)),
        vol.Required(CONF_H): PAULI_TERMS_SCHEMA,
        vol.Optional(CONF_JUMPS, default=[]): [PAULI_TERMS_SCHEMA],
        vol.Required(CONF_PSI0): PSI0_SCHEMA,
        vol.Required(CONF_T): vol.All(vol.Coerce(float), vol.Range(min=0)),
        vol.Optional(CONF_SHIFT, default=0.0): vol.Coerce(float),
        vol.Optional(CONF_LABEL, default=""): str,
    }
)


@dataclass(frozen=True)
class Dilation:
    """Hermitian dilation G = [[0, L^dag], [L, 0]] of one jump operator.

    The ancilla is qubit 0, so the blocks are indexed by the ancilla value.
    """

    index: int
    jump: PauliSum
    g_pauli: PauliSum
    g_dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    @staticmethod
    def angle(tau: float) -> float:
        """Return the rotation scale sqrt(2 tau) of one dissipative step."""
        return math.sqrt(2.0 * tau)


def split_coefficient(coefficient: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (H_return, V) with A = V + i H_return, both Hermitian.

    The ODE form A = -iH - sum L^dag L uses H = -H_return.
    """
    matrix = np.asarray(coefficient, dtype=np.complex128)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"Coefficient matrix must be square, got {matrix.shape}")
    adjoint = matrix.conj().T
    hermitian_part = (matrix + adjoint) / 2
    anti_part = (matrix - adjoint) / 2j
    return anti_part, hermitian_part


def factorize_dissipator(
    dissipator: np.ndarray, tolerance: float | None = None
) -> np.ndarray:
    """Return the principal square root L of -V, so that V = -L^dag L."""
    matrix = np.asarray(dissipator, dtype=np.complex128)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"Dissipator must be square, got {matrix.shape}")
    eigenvalues, vectors = scipy.linalg.eigh(matrix)
    scale = float(np.max(np.abs(eigenvalues), initial=0.0))
    if tolerance is None:
        tolerance = PSD_TOLERANCE * scale
    top = float(eigenvalues[-1]) if eigenvalues.size else 0.0
    if top > tolerance:
        raise DissipativeConditionViolated(top, top)
    roots = np.sqrt(np.clip(-eigenvalues, 0.0, None))
    root = (vectors * roots) @ vectors.conj().T
    residual = np.linalg.norm(matrix + root.conj().T @ root)
    limit = 10 * max(tolerance, PSD_TOLERANCE * scale) * matrix.shape[0]
    if residual > limit + 1e-12:
        raise ValidationError(f"Dissipator factorization residual {residual:.3g}")
    return root


def build_dilation(jump: PauliSum, index: int = 0) -> Dilation:
    """Return both forms of G for a jump operator L."""
    imaginary = PauliSum(
        jump.n, tuple(PauliTerm(t.coeff.imag, t.string) for t in jump.terms)
    )
    g_pauli = jump.real_part().tensor_left("X") + imaginary.tensor_left("Y")
    g_dense = None
    if dense_allowed(jump.n + 1):
        block = to_dense(jump)
        zero = np.zeros_like(block)
        g_dense = np.block([[zero, block.conj().T], [block, zero]])
    return Dilation(index=index, jump=jump, g_pauli=g_pauli, g_dense=g_dense)


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """Instance of d psi/dt = (-iH - sum_j L_j^dag L_j) psi on n qubits.

    shift records a multiple of the identity removed from a user generator
    to make it dissipative: A_user = A + shift * I, so e^{A_user t} psi0 =
    e^{shift t} e^{A t} psi0.
    """

    hamiltonian: PauliSum
    jumps: tuple[PauliSum, ...]
    psi0: np.ndarray = field(repr=False)
    final_time: float
    shift: float = 0.0
    label: str = ""

    def __post_init__(self) -> None:
        """Validate the instance."""
        n = self.hamiltonian.n
        if not self.hamiltonian.is_hermitian():
            raise ValidationError("The Hamiltonian must have real Pauli coefficients")
        for index, jump in enumerate(self.jumps):
            if jump.n != n:
                raise DimensionMismatchError(
                    f"Jump {index} acts on {jump.n} qubits, expected {n}"
                )
        if not (math.isfinite(self.final_time) and self.final_time >= 0):
            raise ValidationError(f"Final time must be >= 0, got {self.final_time}")
        psi0 = as_state_array(self.psi0)
        if psi0.shape != (1 << n,):
            raise DimensionMismatchError(
                f"Initial state has {psi0.shape[0]} amplitudes, expected {1 << n}"
            )
        if not np.linalg.norm(psi0) > 0:
            raise ValidationError("Initial state must have a positive norm")
        psi0.setflags(write=False)
        object.__setattr__(self, "psi0", psi0)
        object.__setattr__(self, "jumps", tuple(self.jumps))

    @property
    def n(self) -> int:
        """Return the system qubit count."""
        return self.hamiltonian.n

    @property
    def dim(self) -> int:
        """Return the system vector dimension 2**n."""
        return 1 << self.n

    @property
    def initial_norm(self) -> float:
        """Return ||psi0||."""
        return float(np.linalg.norm(self.psi0))

    @property
    def dense_enabled(self) -> bool:
        """Return True if n-qubit dense shadows are allowed."""
        return dense_allowed(self.n)

    @cached_property
    def dilations(self) -> tuple[Dilation, ...]:
        """Return the dilation of every jump."""
        return tuple(build_dilation(jump, index) for index, jump in enumerate(self.jumps))

    @cached_property
    def dense_hamiltonian(self) -> np.ndarray:
        """Return H as a dense matrix."""
        return to_dense(self.hamiltonian)

    @cached_property
    def dense_jumps(self) -> tuple[np.ndarray, ...]:
        """Return every L_j as a dense matrix."""
        return tuple(to_dense(jump) for jump in self.jumps)

    @cached_property
    def dense_dissipators(self) -> tuple[np.ndarray, ...]:
        """Return every L_j^dag L_j as a dense matrix."""
        return tuple(jump.conj().T @ jump for jump in self.dense_jumps)

    @cached_property
    def dense_coefficient(self) -> np.ndarray:
        """Return A = -iH - sum_j L_j^dag L_j as a dense matrix."""
        coefficient = -1j * self.dense_hamiltonian
        for dissipator in self.dense_dissipators:
            coefficient = coefficient - dissipator
        return coefficient

    def with_final_time(self, final_time: float) -> OdeProblem:
        """Return a copy with a different final time."""
        return OdeProblem(
            self.hamiltonian,
            self.jumps,
            self.psi0,
            final_time,
            shift=self.shift,
            label=self.label,
        )


def check_dissipative(problem: OdeProblem, tolerance: float = PSD_TOLERANCE) -> float:
    """Return the smallest eigenvalue of sum_j L_j^dag L_j, raising if negative."""
    total = np.zeros((problem.dim, problem.dim), dtype=np.complex128)
    for dissipator in problem.dense_dissipators:
        total += dissipator
    smallest = float(scipy.linalg.eigvalsh(total)[0])
    if smallest < -tolerance:
        raise DissipativeConditionViolated(-smallest, -smallest)
    return smallest


def build_problem(
    hamiltonian: PauliSum,
    jumps: Iterable[PauliSum],
    psi0: Any,
    final_time: float,
    shift: float = 0.0,
    label: str = "",
) -> OdeProblem:
    """Build a problem, running the dense semidefinite check when allowed."""
    problem = OdeProblem(
        hamiltonian, tuple(jumps), np.asarray(psi0), float(final_time), shift, label
    )
    if dense_allowed(problem.n):
        smallest = check_dissipative(problem)
        _LOGGER.debug(
            "Built %s-qubit problem with %s jump(s); min eigenvalue of sum L^dag L %.3g",
            problem.n,
            len(problem.jumps),
            smallest,
        )
    else:
        _LOGGER.warning(
            "Problem on %s qubits is above the dense cap; oracle features are disabled",
            problem.n,
        )
    return problem


def problem_from_dense(
    coefficient: np.ndarray,
    psi0: Any,
    final_time: float,
    tolerance: float | None = None,
    label: str = "",
) -> OdeProblem:
    """Build a problem from a dense coefficient matrix with one jump L = sqrt(-V)."""
    anti_part, hermitian_part = split_coefficient(coefficient)
    n = qubits_for_dim(anti_part.shape[0])
    root = factorize_dissipator(hermitian_part, tolerance)
    hamiltonian = pauli_decompose_dense(-anti_part, n).real_part()
    jump = pauli_decompose_dense(root, n)
    jumps = () if jump.is_zero else (jump,)
    return build_problem(hamiltonian, jumps, psi0, final_time, label=label)


def make_initial_state(n: int, description: Mapping[str, Any]) -> np.ndarray:
    """Return psi0 from a {kind, data} description."""
    dim = 1 << n
    kind = description[CONF_KIND]
    data = description.get(CONF_DATA)
    if kind == PSI0_UNIFORM:
        return np.full(dim, 1 / math.sqrt(dim), dtype=np.complex128)
    if kind == PSI0_BASIS:
        if isinstance(data, str):
            if len(data) != n or set(data) - {"0", "1"}:
                raise ValidationError(f"Basis label {data!r} is not an {n}-bit string")
            index = int(data, 2)
        elif isinstance(data, int):
            index = data
        else:
            raise ValidationError("A basis state needs a bit string or an index")
        if not 0 <= index < dim:
            raise ValidationError(f"Basis index {index} outside dimension {dim}")
        state = np.zeros(dim, dtype=np.complex128)
        state[index] = 1.0
        return state
    if kind == PSI0_AMPLITUDES:
        if not isinstance(data, list):
            raise ValidationError("Amplitudes must be a list")
        values = [
            complex(*entry) if isinstance(entry, list) else complex(entry)
            for entry in data
        ]
        return as_state_array(values)
    raise ValidationError(f"Unknown initial state kind {kind!r}")


def problem_from_config(config: Mapping[str, Any]) -> OdeProblem:
    """Build a problem from its JSON description."""
    try:
        data = PROBLEM_SCHEMA(dict(config))
    except vol.Invalid as ex:
        raise ValidationError(f"Invalid problem description: {ex}") from ex
    n = data[CONF_N]
    return build_problem(
        PauliSum.from_json(n, data[CONF_H]),
        [PauliSum.from_json(n, items) for items in data[CONF_JUMPS]],
        make_initial_state(n, data[CONF_PSI0]),
        data[CONF_T],
        shift=data[CONF_SHIFT],
        label=data[CONF_LABEL],
    )


def problem_to_config(problem: OdeProblem) -> dict[str, Any]:
    """Return the JSON description of a problem, amplitudes stored exactly."""
    return {
        CONF_N: problem.n,
        CONF_H: problem.hamiltonian.to_json(),
        CONF_JUMPS: [jump.to_json() for jump in problem.jumps],
        CONF_PSI0: {
            CONF_KIND: PSI0_AMPLITUDES,
            CONF_DATA: [[float(a.real), float(a.imag)] for a in problem.psi0],
        },
        CONF_T: problem.final_time,
        CONF_SHIFT: problem.shift,
        CONF_LABEL: problem.label,
    }


def load_problem(path: str | Path) -> OdeProblem:
    """Read a problem file."""
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as ex:
        raise ValidationError(f"Cannot read problem file {path}: {ex}") from ex
    return problem_from_config(config)


def dump_problem(problem: OdeProblem, path: str | Path) -> None:
    """Write a problem file."""
    Path(path).write_text(json.dumps(problem_to_config(problem), indent=2))
