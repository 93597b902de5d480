"""Dense brute-force references for small problems."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass
import math
from typing import Any

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .const import (
    _LOGGER,
    DEFAULT_GRID_POINTS,
    EXPM_CHECK_TOLERANCE,
    MAX_GRID_POINTS,
    RK4_MAX_DOUBLINGS,
    RK4_MIN_STEPS,
    RK4_TOLERANCE,
    SUP_GRID_TOLERANCE,
)
from .exceptions import OracleConvergenceError, ShapeError, ValidationError
from .pauli import PauliSum, commutator
from .problem import Dilation, OdeProblem
from .util import check_dense_capacity, qubits_for_dim

DenseMatrix = np.ndarray


def _check_square(matrix: np.ndarray) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"Expected a square matrix, got shape {matrix.shape}")
    n = qubits_for_dim(matrix.shape[0])
    check_dense_capacity(n)
    return n


def spectral_norm(matrix: DenseMatrix) -> float:
    """Return the largest singular value from the eigenvalues of M^dag M."""
    if matrix.size == 0:
        return 0.0
    top = scipy.linalg.eigvalsh(matrix.conj().T @ matrix)[-1]
    return math.sqrt(max(float(top), 0.0))


def expm_apply(coefficient: DenseMatrix, vector: np.ndarray, t: float) -> np.ndarray:
    """Return e^{A t} v, cross-checked against two half steps."""
    matrix = np.asarray(coefficient, dtype=np.complex128)
    _check_square(matrix)
    if not np.all(np.isfinite(matrix)):
        raise ValidationError("Coefficient matrix has non-finite entries")
    if t < 0:
        raise ValidationError(f"Propagation time must be >= 0, got {t}")
    vector = np.asarray(vector, dtype=np.complex128)
    full = scipy.linalg.expm(matrix * t) @ vector
    half = scipy.linalg.expm(matrix * (t / 2))
    halved = half @ (half @ vector)
    scale = max(float(np.linalg.norm(full)), float(np.linalg.norm(vector)), 1.0)
    if (drift := float(np.linalg.norm(full - halved))) > EXPM_CHECK_TOLERANCE * scale:
        raise OracleConvergenceError(
            f"Matrix exponential failed its half-step check (drift {drift:.3g})"
        )
    return full


def exact_solution(problem: OdeProblem, t: float | None = None) -> np.ndarray:
    """Return psi(t) = e^{A t} psi0, at the final time by default."""
    t = problem.final_time if t is None else t
    return expm_apply(problem.dense_coefficient, problem.psi0, t)


def solution_grid(problem: OdeProblem, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (times, states) of psi(t) on a uniform grid over [0, T]."""
    check_dense_capacity(problem.n)
    times = np.linspace(0.0, problem.final_time, points)
    if problem.final_time == 0:
        return times, np.tile(problem.psi0, (points, 1))
    states = scipy.sparse.linalg.expm_multiply(
        problem.dense_coefficient,
        np.array(problem.psi0),
        start=0.0,
        stop=problem.final_time,
        num=points,
        endpoint=True,
    )
    return times, np.asarray(states)


def dilation_block(dilation: Dilation, tau: float) -> DenseMatrix:
    """Return (<0| (x) I) e^{i sqrt(2 tau) G} (|0> (x) I)."""
    if dilation.g_dense is None:
        raise ValidationError("Dilation has no dense form")
    half = dilation.g_dense.shape[0] // 2
    unitary = scipy.linalg.expm(1j * Dilation.angle(tau) * dilation.g_dense)
    return unitary[:half, :half]


def exact_step_dense(problem: OdeProblem, tau: float) -> DenseMatrix:
    """Return the effective n-qubit map of one post-selected step.

    e^{-i tau H} acts first, followed by the projected dilations in jump order.
    """
    check_dense_capacity(problem.n + 1)
    if tau < 0:
        raise ValidationError(f"Time step must be >= 0, got {tau}")
    step = scipy.linalg.expm(-1j * tau * problem.dense_hamiltonian)
    for dilation in problem.dilations:
        step = dilation_block(dilation, tau) @ step
    return step


def lindblad_derivative(problem: OdeProblem, rho: np.ndarray) -> np.ndarray:
    """Return A rho + rho A^dag + 2 sum_j L_j rho L_j^dag."""
    coefficient = problem.dense_coefficient
    out = coefficient @ rho + rho @ coefficient.conj().T
    for jump in problem.dense_jumps:
        out += 2.0 * (jump @ rho @ jump.conj().T)
    return out


def _rk4(problem: OdeProblem, rho: np.ndarray, span: float, steps: int) -> np.ndarray:
    h = span / steps
    for _ in range(steps):
        k1 = lindblad_derivative(problem, rho)
        k2 = lindblad_derivative(problem, rho + 0.5 * h * k1)
        k3 = lindblad_derivative(problem, rho + 0.5 * h * k2)
        k4 = lindblad_derivative(problem, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def initial_density(problem: OdeProblem) -> np.ndarray:
    """Return |psi0><psi0| / <psi0|psi0>."""
    psi = problem.psi0 / problem.initial_norm
    return np.outer(psi, psi.conj())


def lindblad_rk4(
    problem: OdeProblem,
    t_grid: Sequence[float],
    rho0: np.ndarray | None = None,
    tolerance: float = RK4_TOLERANCE,
) -> np.ndarray:
    """Return density matrices on t_grid from classic RK4 with step doubling.

    The jump term carries the factor 2 realized by resetting the ancilla after
    each dilated step, which keeps the trace at 1.
    """
    check_dense_capacity(problem.n)
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) < 0) or grid[0] < 0:
        raise ValidationError("Time grid must be a non-empty increasing sequence")
    rho = initial_density(problem) if rho0 is None else np.array(rho0, np.complex128)
    out = np.empty((grid.size, problem.dim, problem.dim), dtype=np.complex128)
    # Propagate from t = 0 to the first grid point as well.
    previous = 0.0
    steps = RK4_MIN_STEPS
    for index, t in enumerate(grid):
        span = t - previous
        if span > 0:
            coarse = _rk4(problem, rho, span, steps)
            for _ in range(RK4_MAX_DOUBLINGS):
                fine = _rk4(problem, rho, span, 2 * steps)
                if np.linalg.norm(fine - coarse) <= tolerance:
                    break
                coarse = fine
                steps *= 2
            else:
                raise OracleConvergenceError(
                    f"RK4 did not reach {tolerance:g} on [{previous:g}, {t:g}]"
                )
            rho = fine
        out[index] = rho
        previous = t
    if (drift := float(np.max(np.abs(np.trace(out, axis1=1, axis2=2) - 1.0)))) > tolerance:
        raise OracleConvergenceError(f"RK4 trace drifted by {drift:.3g}")
    _LOGGER.debug("Lindblad RK4 finished with %s steps per interval", steps)
    return out


@dataclass(frozen=True)
class BoundQuantities:
    """Every problem-dependent quantity of the cumulative error bound."""

    commutator_sum: float
    sup_psi: float
    sup_L4: float
    final_norm: float
    initial_norm: float = 1.0
    final_time: float = 0.0
    grid_points: int = DEFAULT_GRID_POINTS
    converged: bool = True

    def __post_init__(self) -> None:
        """Validate the quantities."""
        values = (self.commutator_sum, self.sup_psi, self.sup_L4, self.final_norm)
        if not all(math.isfinite(v) and v >= 0 for v in values):
            raise ValidationError(f"Bound quantities must be finite and >= 0: {values}")

    def as_dict(self) -> dict[str, Any]:
        """Return the quantities as a plain dict."""
        return asdict(self)


def ordered_commutator_sum(operators: Sequence[DenseMatrix]) -> float:
    """Return sum_j || [sum_{k<j} A_k, A_j] || in spectral norm."""
    total = 0.0
    if not operators:
        return total
    prefix = np.zeros_like(operators[0])
    for operator in operators:
        total += spectral_norm(prefix @ operator - operator @ prefix)
        prefix = prefix + operator
    return total


def split_operators(problem: OdeProblem) -> list[DenseMatrix]:
    """Return [A_0 = -iH, A_1 = -L_1^dag L_1, ...]."""
    return [-1j * problem.dense_hamiltonian] + [-d for d in problem.dense_dissipators]


def _grid_sups(problem: OdeProblem, points: int) -> tuple[float, float, float]:
    _, states = solution_grid(problem, points)
    sup_psi = float(np.max(np.linalg.norm(states, axis=1)))
    sup_l4 = 0.0
    for dissipator in problem.dense_dissipators:
        squared = dissipator @ dissipator
        sup_l4 += float(np.max(np.linalg.norm(states @ squared.T, axis=1)))
    return sup_psi, sup_l4, float(np.linalg.norm(states[-1]))


def compute_bound_quantities(
    problem: OdeProblem, grid_points: int = DEFAULT_GRID_POINTS
) -> BoundQuantities:
    """Evaluate the bound quantities with a grid-doubling guard on the sup terms."""
    check_dense_capacity(problem.n)
    if grid_points < 2:
        raise ValidationError(f"Need at least 2 grid points, got {grid_points}")
    commutator_sum = ordered_commutator_sum(split_operators(problem))

    points = grid_points
    sup_psi, sup_l4, final_norm = _grid_sups(problem, points)
    converged = problem.final_time == 0
    while not converged and points < MAX_GRID_POINTS:
        # 2p - 1 points keep the old grid as a subset.
        refined = 2 * points - 1
        new_psi, new_l4, final_norm = _grid_sups(problem, refined)
        converged = new_psi - sup_psi <= SUP_GRID_TOLERANCE * max(new_psi, 1e-300) and (
            new_l4 - sup_l4 <= SUP_GRID_TOLERANCE * max(new_l4, 1e-300)
        )
        _LOGGER.debug(
            "Sup grid %s -> %s points: sup_psi %.6g -> %.6g, sup_L4 %.6g -> %.6g",
            points,
            refined,
            sup_psi,
            new_psi,
            sup_l4,
            new_l4,
        )
        sup_psi, sup_l4, points = new_psi, new_l4, refined
    if not converged:
        _LOGGER.warning("Sup grid did not stabilise within %s points", points)

    return BoundQuantities(
        commutator_sum=commutator_sum,
        sup_psi=sup_psi,
        sup_L4=sup_l4,
        final_norm=final_norm,
        initial_norm=problem.initial_norm,
        final_time=problem.final_time,
        grid_points=points,
        converged=converged,
    )


def cumulative_error_bound(bounds: BoundQuantities, steps: int) -> float:
    """Return the bound on ||psi(T) - psi~(T)|| after R steps of exact stages."""
    if steps < 1:
        raise ValidationError(f"Step count must be >= 1, got {steps}")
    scale = bounds.final_time**2 / steps
    return (
        0.5 * bounds.commutator_sum * bounds.sup_psi * scale
        + bounds.sup_L4 * 2.0 * scale / 3.0
    )


def per_step_error_bound(problem: OdeProblem, tau: float) -> float:
    """Return the operator-norm bound on ||exact_step_dense - e^{A tau}||."""
    dissipator_term = sum(spectral_norm(d @ d) for d in problem.dense_dissipators)
    trotter_term = ordered_commutator_sum(split_operators(problem))
    return 0.5 * trotter_term * tau**2 + dissipator_term * 2.0 * tau**2 / 3.0


def trotter_step_bound(hamiltonian: PauliSum, tau: float) -> float:
    """Return the first-order Trotter bound for e^{-i tau H} in canonical term order.

    Commutator norms are bounded by the l1 norm of their Pauli coefficients.
    """
    total = 0.0
    prefix = PauliSum.zero(hamiltonian.n)
    for term in hamiltonian.terms:
        single = PauliSum(hamiltonian.n, (term,))
        total += sum(abs(t.coeff) for t in commutator(prefix, single))
        prefix = prefix + single
    return 0.5 * total * tau**2


def dilation_remainder_bound(dissipator: DenseMatrix, psi: np.ndarray, tau: float) -> float:
    """Return (2 tau^2 / 3) ||(L^dag L)^2 psi||."""
    return 2.0 * tau**2 / 3.0 * float(np.linalg.norm(dissipator @ (dissipator @ psi)))


def normalized_distance(psi: np.ndarray, phi: np.ndarray) -> float:
    """Return || psi/||psi|| - phi/||phi|| ||."""
    return float(
        np.linalg.norm(psi / np.linalg.norm(psi) - phi / np.linalg.norm(phi))
    )


def normalized_error_bound(psi: np.ndarray, phi: np.ndarray) -> float | None:
    """Return 4 ||psi - phi|| / ||psi||, or None when ||psi - phi|| > ||psi|| / 2."""
    gap = float(np.linalg.norm(psi - phi))
    scale = float(np.linalg.norm(psi))
    if gap > 0.5 * scale:
        return None
    return 4.0 * gap / scale


def trace_distance(rho: DenseMatrix, sigma: DenseMatrix) -> float:
    """Return half the trace norm of rho - sigma."""
    difference = np.asarray(rho) - np.asarray(sigma)
    hermitian = (difference + difference.conj().T) / 2
    return 0.5 * float(np.sum(np.abs(scipy.linalg.eigvalsh(hermitian))))


def normalized_error_rows(
    psi: np.ndarray, phi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Return row-wise normalized distances and their 4 ||psi - phi|| / ||psi|| bounds.

    Rows where ||psi - phi|| > ||psi|| / 2 get a NaN bound.
    """
    psi = np.atleast_2d(psi)
    phi = np.atleast_2d(phi)
    if psi.shape != phi.shape:
        raise ShapeError(f"Row batches differ in shape: {psi.shape} vs {phi.shape}")
    psi_norm = np.linalg.norm(psi, axis=1)
    phi_norm = np.linalg.norm(phi, axis=1)
    gap = np.linalg.norm(psi - phi, axis=1)
    distance = np.linalg.norm(psi / psi_norm[:, None] - phi / phi_norm[:, None], axis=1)
    bound = np.where(gap <= 0.5 * psi_norm, 4.0 * gap / psi_norm, np.nan)
    return distance, bound
