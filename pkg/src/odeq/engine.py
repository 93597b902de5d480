"""Statevector simulation over one ancilla qubit and n system qubits.

The ancilla is qubit 0, the most significant bit of an amplitude index, so
the ancilla-|0> block is the first half of the amplitude vector.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
import math
from pathlib import Path

import numpy as np
import scipy.linalg

from .const import _LOGGER, SPLITTING_FIRST, SPLITTING_SYMMETRIC
from .exceptions import (
    DegenerateStateError,
    DimensionMismatchError,
    ValidationError,
)
from .pauli import PauliString, PauliSum, pauli_action
from .problem import Dilation
from .util import as_state_array, check_dense_capacity, qubits_for_dim


@dataclass(frozen=True)
class StateVector:
    """Unnormalized amplitudes over 1 + n qubits with a tracked squared norm."""

    amps: np.ndarray
    norm_sq: float

    @classmethod
    def from_amplitudes(cls, amplitudes: np.ndarray) -> StateVector:
        """Wrap amplitudes, computing the squared norm."""
        amps = as_state_array(amplitudes)
        qubits_for_dim(amps.shape[0])
        amps.setflags(write=False)
        return cls(amps, float(np.vdot(amps, amps).real))

    @classmethod
    def embed(cls, psi: np.ndarray) -> StateVector:
        """Return |0> (x) psi."""
        psi = as_state_array(psi)
        return cls.from_amplitudes(np.concatenate([psi, np.zeros_like(psi)]))

    @property
    def n_total(self) -> int:
        """Return the qubit count including the ancilla."""
        return qubits_for_dim(self.amps.shape[0])

    @property
    def half(self) -> int:
        """Return the size of one ancilla block."""
        return self.amps.shape[0] // 2

    def block(self, ancilla: int = 0) -> np.ndarray:
        """Return the system amplitudes paired with an ancilla value."""
        return self.amps[ancilla * self.half : (ancilla + 1) * self.half]

    def with_amps(self, amps: np.ndarray, norm_sq: float | None = None) -> StateVector:
        """Return a state with new amplitudes, keeping norm_sq if given."""
        amps.setflags(write=False)
        if norm_sq is None:
            norm_sq = float(np.vdot(amps, amps).real)
        return StateVector(amps, norm_sq)

    def dump(self, path: str | Path) -> None:
        """Write amplitudes as little-endian f64 interleaved re/im."""
        self.amps.astype("<c16").tofile(path)


@dataclass(frozen=True)
class Rotation:
    """The unitary exp(-i theta P)."""

    string: PauliString
    theta: float


def apply_rotations(amps: np.ndarray, rotations: Sequence[Rotation]) -> np.ndarray:
    """Apply rotations in order along the last axis of amps."""
    out = amps
    for rotation in rotations:
        perm, phase = pauli_action(rotation.string)
        flipped = (phase * out)[..., perm]
        out = math.cos(rotation.theta) * out - 1j * math.sin(rotation.theta) * flipped
    return out


def trotter_sequence(
    pauli_sum: PauliSum, scale: float, splitting: str = SPLITTING_FIRST
) -> tuple[Rotation, ...]:
    """Return the product-formula rotations of exp(-i scale * S) for real-coefficient S."""
    if not pauli_sum.is_hermitian():
        raise ValidationError("Only real-coefficient Pauli sums can be exponentiated")
    forward = [Rotation(t.string, scale * t.coeff.real) for t in pauli_sum.terms]
    if splitting == SPLITTING_FIRST or len(forward) < 2:
        return tuple(forward)
    if splitting != SPLITTING_SYMMETRIC:
        raise ValidationError(f"Unknown splitting {splitting!r}")
    halves = [Rotation(r.string, r.theta / 2) for r in forward]
    middle = Rotation(forward[-1].string, forward[-1].theta)
    return (*halves[:-1], middle, *reversed(halves[:-1]))


def rotation_count(rotations: Sequence[Rotation]) -> int:
    """Return the number of elementary rotations, global phases excluded."""
    return sum(rotation.string.weight > 0 for rotation in rotations)


@lru_cache(maxsize=64)
def lift_to_ancilla(pauli_sum: PauliSum) -> PauliSum:
    """Return I (x) S acting on ancilla plus system."""
    return pauli_sum.tensor_left("I")


def _check_width(state: StateVector, n: int) -> None:
    if state.n_total != n:
        raise DimensionMismatchError(
            f"Operator acts on {n} qubits but the state has {state.n_total}"
        )


def apply_pauli_exp(state: StateVector, string: PauliString, theta: float) -> StateVector:
    """Return exp(-i theta P) applied to the state."""
    _check_width(state, string.n)
    amps = apply_rotations(state.amps, (Rotation(string, theta),))
    return state.with_amps(amps, state.norm_sq)


def apply_trotter_step_h(
    state: StateVector, hamiltonian: PauliSum, tau: float
) -> StateVector:
    """Return the first-order Trotterization of exp(-i tau H) applied to the state.

    H may act on the system qubits only or on all qubits.
    """
    if hamiltonian.n == state.n_total - 1:
        hamiltonian = lift_to_ancilla(hamiltonian)
    _check_width(state, hamiltonian.n)
    amps = apply_rotations(state.amps, trotter_sequence(hamiltonian, tau))
    return state.with_amps(amps, state.norm_sq)


def dilation_rotations(
    dilation: Dilation, tau: float, splitting: str = SPLITTING_SYMMETRIC
) -> tuple[Rotation, ...]:
    """Return the rotations realising exp(+i sqrt(2 tau) G)."""
    if tau < 0:
        raise ValidationError(f"Time step must be >= 0, got {tau}")
    return trotter_sequence(dilation.g_pauli, -Dilation.angle(tau), splitting)


@lru_cache(maxsize=256)
def _dilation_unitary(dilation: Dilation, tau: float) -> np.ndarray:
    assert dilation.g_dense is not None
    return scipy.linalg.expm(1j * Dilation.angle(tau) * dilation.g_dense)


def dilation_unitary(dilation: Dilation, tau: float) -> np.ndarray:
    """Return exp(+i sqrt(2 tau) G) as a dense matrix."""
    if tau < 0:
        raise ValidationError(f"Time step must be >= 0, got {tau}")
    check_dense_capacity(dilation.g_pauli.n)
    if dilation.g_dense is None:
        raise ValidationError("Dilation has no dense form")
    return _dilation_unitary(dilation, tau)


def apply_dilated_jump(
    state: StateVector,
    dilation: Dilation,
    tau: float,
    splitting: str = SPLITTING_SYMMETRIC,
    exact: bool = False,
) -> StateVector:
    """Return exp(+i sqrt(2 tau) G) applied to the state.

    With exact=True the dense exponential is used instead of Pauli rotations.
    """
    _check_width(state, dilation.g_pauli.n)
    if exact:
        amps = dilation_unitary(dilation, tau) @ state.amps
    else:
        amps = apply_rotations(state.amps, dilation_rotations(dilation, tau, splitting))
    return state.with_amps(amps, state.norm_sq)


def project_ancilla_zero(state: StateVector) -> tuple[StateVector, float]:
    """Return (|0><0| (x) I) state without renormalizing, and the kept fraction."""
    if state.norm_sq <= 0:
        raise DegenerateStateError("Cannot project a zero-norm state")
    amps = state.amps.copy()
    amps[state.half :] = 0
    projected = state.with_amps(amps)
    return projected, projected.norm_sq / state.norm_sq


def sample_ancilla(
    state: StateVector, rng: np.random.Generator
) -> tuple[int, StateVector]:
    """Measure the ancilla, returning the outcome and the renormalized collapsed state."""
    if state.norm_sq <= 0:
        raise DegenerateStateError("Cannot measure a zero-norm state")
    zero_block = state.block(0)
    p_zero = float(np.vdot(zero_block, zero_block).real) / state.norm_sq
    outcome = int(rng.random() >= p_zero)
    amps = state.amps.copy()
    if outcome:
        amps[: state.half] = 0
    else:
        amps[state.half :] = 0
    amps /= math.sqrt(float(np.vdot(amps, amps).real))
    return outcome, state.with_amps(amps, 1.0)


def reset_ancilla(state: StateVector, rng: np.random.Generator) -> StateVector:
    """Measure the ancilla and return it to |0>, keeping the collapsed system state."""
    outcome, collapsed = sample_ancilla(state, rng)
    if not outcome:
        return collapsed
    amps = np.zeros_like(collapsed.amps)
    amps[: collapsed.half] = collapsed.block(1)
    return collapsed.with_amps(amps, collapsed.norm_sq)


def expectation(
    state: StateVector, observable: PauliSum, normalized: bool = False
) -> float:
    """Return <s|O|s>, divided by <s|s> when normalized."""
    if not observable.is_hermitian():
        raise ValidationError("Observables must have real Pauli coefficients")
    if observable.n == state.n_total - 1:
        observable = lift_to_ancilla(observable)
    _check_width(state, observable.n)
    value = batch_expectation(state.amps[None, :], observable)[0]
    if normalized:
        if state.norm_sq <= 0:
            raise DegenerateStateError("Cannot normalize a zero-norm state")
        value /= state.norm_sq
    return float(value)


def batch_expectation(amps: np.ndarray, observable: PauliSum) -> np.ndarray:
    """Return <a|O|a> for every row a of amps (no normalization)."""
    values = np.zeros(amps.shape[0])
    for term in observable.terms:
        perm, phase = pauli_action(term.string)
        moved = (phase * amps)[..., perm]
        values += term.coeff.real * np.sum((amps.conj() * moved).real, axis=1)
    return values


def counter_stream(seed: int, *keys: int) -> np.random.Generator:
    """Return a Philox stream keyed by (seed, *keys)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


def sample_ancilla_batch(
    amps: np.ndarray, uniforms: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Measure the ancilla of every row, returning outcomes and renormalized rows.

    Rows must have a positive norm.
    """
    half = amps.shape[1] // 2
    weight_zero = np.sum(np.abs(amps[:, :half]) ** 2, axis=1)
    weight_one = np.sum(np.abs(amps[:, half:]) ** 2, axis=1)
    total = weight_zero + weight_one
    if np.any(total <= 0):
        raise DegenerateStateError("Cannot measure a zero-norm state")
    outcomes = (uniforms >= weight_zero / total).astype(np.int8)
    collapsed = amps.copy()
    collapsed[outcomes == 1, :half] = 0
    collapsed[outcomes == 0, half:] = 0
    kept = np.where(outcomes == 1, weight_one, weight_zero)
    collapsed /= np.sqrt(kept)[:, None]
    return outcomes, collapsed


def reset_ancilla_batch(amps: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    """Move the ancilla-|1> block of rows with outcome 1 into the |0> block."""
    half = amps.shape[1] // 2
    out = amps.copy()
    flipped = outcomes == 1
    out[flipped, :half] = amps[flipped, half:]
    out[flipped, half:] = 0
    _LOGGER.debug("Reset %s of %s ancillas from |1>", int(flipped.sum()), len(outcomes))
    return out
