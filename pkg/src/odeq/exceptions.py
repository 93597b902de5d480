"""Exceptions raised by odeq."""
from __future__ import annotations

from .const import EXIT_CAPACITY, EXIT_CONFIG, EXIT_FAILURE, EXIT_NO_SURVIVORS


class OdeqError(Exception):
    """Base class for odeq errors."""

    exit_code = EXIT_FAILURE


class ValidationError(OdeqError):
    """Error to indicate invalid parameters, operators or configuration."""

    exit_code = EXIT_CONFIG


class DimensionMismatchError(ValidationError):
    """Error to indicate operands act on a different number of qubits."""


class ShapeError(ValidationError):
    """Error to indicate a matrix or vector has an unusable shape."""


class CapacityError(OdeqError):
    """Error to indicate a dense operation exceeds the configured qubit cap."""

    exit_code = EXIT_CAPACITY

    def __init__(self, n_qubits: int, cap: int) -> None:
        """Initialize the error."""
        super().__init__(
            f"Dense representation of {n_qubits} qubits exceeds the cap of {cap}"
        )
        self.n_qubits = n_qubits
        self.cap = cap


class DissipativeConditionViolated(ValidationError):
    """Error to indicate the Hermitian part of A has a positive eigenvalue."""

    def __init__(self, eigenvalue: float, shift: float) -> None:
        """Initialize the error."""
        super().__init__(
            f"Hermitian part has eigenvalue {eigenvalue:.6g} > 0; "
            f"shifting A by -{shift:.6g}*I restores the dissipative condition"
        )
        self.eigenvalue = eigenvalue
        self.shift = shift


class DegenerateStateError(OdeqError):
    """Error to indicate an operation on a zero-norm state."""


class SuccessProbabilityUnderflow(OdeqError):
    """Error to indicate the post-selected norm vanished during a run."""

    def __init__(self, step: int, success_prob: float) -> None:
        """Initialize the error."""
        super().__init__(
            f"Success probability underflowed to {success_prob:.3g} at step {step}"
        )
        self.step = step
        self.success_prob = success_prob


class UnsolvableTargetError(OdeqError):
    """Error to indicate a target that cannot be met, e.g. psi(T) = 0."""


class OracleConvergenceError(OdeqError):
    """Error to indicate a dense reference failed its self-consistency check."""


class NoSurvivorsError(OdeqError):
    """Error to indicate every trajectory of a batch was discarded."""

    exit_code = EXIT_NO_SURVIVORS

    def __init__(self, shots: int, seed: int) -> None:
        """Initialize the error."""
        super().__init__(f"All {shots} trajectories were discarded (seed {seed})")
        self.shots = shots
        self.seed = seed
