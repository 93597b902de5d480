"""Repeated dilation-plus-projection steps for d psi/dt = A psi."""
from __future__ import annotations

import asyncio
from collections.abc import Iterable, Iterator, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
import math
from typing import Any, Union

import numpy as np
import scipy.linalg

from .const import (
    _LOGGER,
    BRANCH_COMMUTATOR,
    BRANCH_DISSIPATOR,
    BRANCH_FLOOR,
    DEFAULT_GRID_POINTS,
    METHOD_DENSE,
    METHOD_PAULI,
    METHODS,
    OP_ORDER,
    SPLITTING_SYMMETRIC,
    SPLITTINGS,
    UNDERFLOW_LIMIT,
)
from .engine import (
    Rotation,
    StateVector,
    apply_rotations,
    batch_expectation,
    counter_stream,
    dilation_rotations,
    dilation_unitary,
    lift_to_ancilla,
    project_ancilla_zero,
    reset_ancilla_batch,
    rotation_count,
    sample_ancilla_batch,
    trotter_sequence,
)
from .exceptions import (
    NoSurvivorsError,
    SuccessProbabilityUnderflow,
    UnsolvableTargetError,
    ValidationError,
)
from .oracle import BoundQuantities, compute_bound_quantities, cumulative_error_bound
from .pauli import PauliSum
from .problem import OdeProblem
from .util import check_dense_capacity

Stage = Union[tuple[Rotation, ...], np.ndarray]


@dataclass(frozen=True)
class StepPlan:
    """Time mesh and per-step operator schedule of one run."""

    R: int
    tau: float
    op_order: str = OP_ORDER
    method: str = METHOD_PAULI
    splitting: str = SPLITTING_SYMMETRIC
    branch: str | None = None

    def __post_init__(self) -> None:
        """Validate the plan."""
        if not isinstance(self.R, (int, np.integer)) or self.R < 1:
            raise ValidationError(f"Step count must be an integer >= 1, got {self.R}")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ValidationError(f"Time step must be finite and >= 0, got {self.tau}")
        if self.method not in METHODS:
            raise ValidationError(f"Unknown step method {self.method!r}")
        if self.splitting not in SPLITTINGS:
            raise ValidationError(f"Unknown splitting {self.splitting!r}")

    @classmethod
    def for_time(
        cls,
        final_time: float,
        steps: int,
        method: str = METHOD_PAULI,
        splitting: str = SPLITTING_SYMMETRIC,
        branch: str | None = None,
    ) -> StepPlan:
        """Return the plan with tau = T / R."""
        if not isinstance(steps, (int, np.integer)) or steps < 1:
            raise ValidationError(f"Step count must be an integer >= 1, got {steps}")
        return cls(int(steps), final_time / steps, OP_ORDER, method, splitting, branch)

    @property
    def dissipative_angle(self) -> float:
        """Return sqrt(2 tau)."""
        return math.sqrt(2.0 * self.tau)

    @property
    def final_time(self) -> float:
        """Return R * tau."""
        return self.R * self.tau

    def as_dict(self) -> dict[str, Any]:
        """Return the plan as a plain dict."""
        return {
            "R": self.R,
            "tau": self.tau,
            "op_order": self.op_order,
            "dissipative_angle": self.dissipative_angle,
            "method": self.method,
            "splitting": self.splitting,
            "branch": self.branch,
        }


@dataclass(frozen=True)
class RunResult:
    """Outcome of one deterministic post-selected run."""

    final_state: StateVector
    success_prob: float
    norm_trace: tuple[float, ...]
    plan: StepPlan
    rotation_count: int
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def system_state(self) -> np.ndarray:
        """Return the unnormalized system amplitudes psi~(T)."""
        return self.final_state.block(0)

    @property
    def normalized_state(self) -> np.ndarray:
        """Return psi~(T) / ||psi~(T)||."""
        return self.system_state / math.sqrt(self.final_state.norm_sq)


@dataclass(frozen=True)
class TrajectoryStats:
    """Shot statistics of a trajectory batch.

    Estimates are means over surviving shots of normalized expectation
    values; stderr is the sample standard deviation over sqrt(successes).
    """

    shots: int
    successes: int
    seed: int
    estimates: dict[str, float] = field(default_factory=dict)
    stderrs: dict[str, float] = field(default_factory=dict)

    @property
    def available(self) -> bool:
        """Return True if any shot survived."""
        return self.successes > 0

    @property
    def success_fraction(self) -> float:
        """Return successes / shots."""
        return self.successes / self.shots

    @property
    def success_stderr(self) -> float:
        """Return the binomial standard error of the success fraction."""
        p = self.success_fraction
        return math.sqrt(p * (1 - p) / self.shots)

    def raise_for_survivors(self) -> None:
        """Raise if every shot was discarded."""
        if not self.available:
            raise NoSurvivorsError(self.shots, self.seed)


@dataclass(frozen=True)
class LindbladResult:
    """Trajectory average of a reset-mode batch."""

    shots: int
    seed: int
    density: np.ndarray | None
    estimates: dict[str, float] = field(default_factory=dict)
    stderrs: dict[str, float] = field(default_factory=dict)
    history: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class StateRatio:
    """q = ||psi0|| / ||psi(T)|| with the predicted repetition count q^2 R."""

    q: float
    repetitions: float | None = None


def chunk_bounds(shots: int, workers: int) -> list[tuple[int, int]]:
    """Split range(shots) into at most `workers` contiguous chunks."""
    workers = max(1, min(workers, shots))
    edges = np.linspace(0, shots, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


class OdeSolver:
    """Precompiled step schedule for one problem and plan."""

    def __init__(self, problem: OdeProblem, plan: StepPlan) -> None:
        """Initialize the stage operators."""
        self.problem = problem
        self.plan = plan
        lifted = lift_to_ancilla(problem.hamiltonian)
        self._h_rotations = trotter_sequence(lifted, plan.tau)
        self._g_rotations = tuple(
            dilation_rotations(d, plan.tau, plan.splitting) for d in problem.dilations
        )
        self.rotations_per_step = rotation_count(self._h_rotations) + sum(
            rotation_count(r) for r in self._g_rotations
        )

        self._h_stage: Stage
        self._g_stages: tuple[Stage, ...]
        if plan.method == METHOD_DENSE:
            check_dense_capacity(problem.n + 1)
            self._h_stage = scipy.linalg.expm(-1j * plan.tau * problem.dense_hamiltonian)
            self._g_stages = tuple(
                dilation_unitary(d, plan.tau) for d in problem.dilations
            )
        else:
            self._h_stage = self._h_rotations
            self._g_stages = self._g_rotations
        _LOGGER.debug(
            "Compiled %s-qubit solver: R=%s tau=%.6g method=%s splitting=%s, "
            "%s rotations per step",
            problem.n,
            plan.R,
            plan.tau,
            plan.method,
            plan.splitting,
            self.rotations_per_step,
        )

    @property
    def total_rotations(self) -> int:
        """Return the elementary rotation count of a full run."""
        return self.plan.R * self.rotations_per_step

    def _apply_h(self, amps: np.ndarray) -> np.ndarray:
        if isinstance(self._h_stage, np.ndarray):
            lead = amps.shape[:-1]
            blocks = amps.reshape(*lead, 2, self.problem.dim)
            return (blocks @ self._h_stage.T).reshape(amps.shape)
        return apply_rotations(amps, self._h_stage)

    def _apply_g(self, index: int, amps: np.ndarray) -> np.ndarray:
        stage = self._g_stages[index]
        if isinstance(stage, np.ndarray):
            return amps @ stage.T
        return apply_rotations(amps, stage)

    def initial_state(self, normalize: bool = False) -> StateVector:
        """Return |0> (x) psi0, optionally normalized."""
        psi = self.problem.psi0
        if normalize:
            psi = psi / self.problem.initial_norm
        return StateVector.embed(psi)

    def step(self, state: StateVector) -> tuple[StateVector, float]:
        """Apply one post-selected step, returning the state and p_step."""
        state = state.with_amps(self._apply_h(state.amps), state.norm_sq)
        p_step = 1.0
        for index in range(len(self._g_stages)):
            state = state.with_amps(self._apply_g(index, state.amps), state.norm_sq)
            state, p_jump = project_ancilla_zero(state)
            p_step *= p_jump
        return state, p_step

    def iterate(self) -> Iterator[tuple[int, StateVector]]:
        """Yield (k, state after k post-selected steps) for k = 0..R."""
        state = self.initial_state()
        initial = state.norm_sq
        yield 0, state
        for index in range(1, self.plan.R + 1):
            state, _ = self.step(state)
            if (success := state.norm_sq / initial) < UNDERFLOW_LIMIT:
                raise SuccessProbabilityUnderflow(index, success)
            yield index, state

    def run_postselect(self, bounds: BoundQuantities | None = None) -> RunResult:
        """Run all R steps keeping the unnormalized projected state."""
        trace = []
        for _, state in self.iterate():
            trace.append(state.norm_sq)

        metadata: dict[str, Any] = {
            "op_order": self.plan.op_order,
            "method": self.plan.method,
            "splitting": self.plan.splitting,
            "rotations_per_step": self.rotations_per_step,
        }
        if bounds is not None:
            metadata["error_bound"] = cumulative_error_bound(bounds, self.plan.R)
        result = RunResult(
            final_state=state,
            success_prob=state.norm_sq / trace[0],
            norm_trace=tuple(trace),
            plan=self.plan,
            rotation_count=self.total_rotations,
            metadata=metadata,
        )
        _LOGGER.debug(
            "Post-selected run finished: R=%s success_prob=%.6g",
            self.plan.R,
            result.success_prob,
        )
        return result

    def _uniforms(self, seed: int, step: int, jump: int, shots: int) -> np.ndarray:
        return counter_stream(seed, step, jump).random(shots)

    def _run_chunk(
        self,
        start: int,
        stop: int,
        shots: int,
        seed: int,
        postselect: bool,
        checkpoints: frozenset[int] = frozenset(),
    ) -> tuple[np.ndarray, np.ndarray, dict[int, np.ndarray]]:
        """Propagate trajectories start..stop-1.

        Returns the surviving ids, their rows and, in reset mode, copies of the
        rows after every checkpoint step.
        """
        ids = np.arange(start, stop)
        amps = np.tile(self.initial_state(normalize=True).amps, (stop - start, 1))
        snapshots = {0: amps.copy()} if 0 in checkpoints else {}
        for step in range(self.plan.R):
            amps = self._apply_h(amps)
            for jump in range(len(self._g_stages)):
                amps = self._apply_g(jump, amps)
                uniforms = self._uniforms(seed, step, jump, shots)[ids]
                outcomes, amps = sample_ancilla_batch(amps, uniforms)
                if postselect:
                    keep = outcomes == 0
                    ids, amps = ids[keep], amps[keep]
                else:
                    amps = reset_ancilla_batch(amps, outcomes)
            if step + 1 in checkpoints:
                snapshots[step + 1] = amps.copy()
            if not ids.size:
                break
        return ids, amps, snapshots

    async def _async_gather(
        self,
        shots: int,
        seed: int,
        threads: int,
        postselect: bool,
        checkpoints: frozenset[int] = frozenset(),
    ) -> tuple[np.ndarray, np.ndarray, dict[int, np.ndarray]]:
        if shots < 1:
            raise ValidationError(f"Shot count must be >= 1, got {shots}")
        if seed < 0:
            raise ValidationError(f"Seed must be >= 0, got {seed}")
        chunks = chunk_bounds(shots, threads)
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=len(chunks)) as executor:
            results = await asyncio.gather(
                *(
                    loop.run_in_executor(
                        executor,
                        partial(
                            self._run_chunk,
                            start,
                            stop,
                            shots,
                            seed,
                            postselect,
                            checkpoints,
                        ),
                    )
                    for start, stop in chunks
                )
            )
        _LOGGER.debug(
            "Finished %s trajectories in %s chunk(s) with seed %s",
            shots,
            len(chunks),
            seed,
        )
        # Chunks are contiguous and gathered in order, so rows stay in id order.
        ids = np.concatenate([r[0] for r in results])
        amps = np.concatenate([r[1] for r in results])
        snapshots = {
            k: np.concatenate([r[2][k] for r in results]) for k in sorted(checkpoints)
        }
        return ids, amps, snapshots

    def _estimate(
        self, amps: np.ndarray, observables: Mapping[str, PauliSum]
    ) -> tuple[dict[str, float], dict[str, float]]:
        estimates: dict[str, float] = {}
        stderrs: dict[str, float] = {}
        for name, observable in observables.items():
            values = batch_expectation(amps, lift_to_ancilla(observable))
            estimates[name] = float(np.mean(values)) if values.size else math.nan
            stderrs[name] = (
                float(np.std(values, ddof=1) / math.sqrt(values.size))
                if values.size > 1
                else math.nan
            )
        return estimates, stderrs

    async def async_run_trajectories(
        self,
        shots: int,
        seed: int,
        observables: Mapping[str, PauliSum] | None = None,
        threads: int = 1,
    ) -> TrajectoryStats:
        """Sample post-selected trajectories, discarding any with an ancilla 1."""
        ids, amps, _ = await self._async_gather(shots, seed, threads, postselect=True)
        estimates, stderrs = self._estimate(amps, observables or {})
        stats = TrajectoryStats(shots, int(ids.size), seed, estimates, stderrs)
        if not stats.available:
            _LOGGER.warning("All %s trajectories were discarded (seed %s)", shots, seed)
        return stats

    def run_trajectories(
        self,
        shots: int,
        seed: int,
        observables: Mapping[str, PauliSum] | None = None,
        threads: int = 1,
    ) -> TrajectoryStats:
        """Blocking form of async_run_trajectories."""
        return asyncio.run(
            self.async_run_trajectories(shots, seed, observables, threads)
        )

    def _average_density(self, amps: np.ndarray) -> np.ndarray | None:
        if not self.problem.dense_enabled:
            return None
        rows = amps[:, : self.problem.dim]
        density = rows.T @ rows.conj() / rows.shape[0]
        return density / np.trace(density).real

    async def async_run_lindblad(
        self,
        shots: int,
        seed: int,
        observables: Mapping[str, PauliSum] | None = None,
        threads: int = 1,
        checkpoints: Iterable[int] = (),
    ) -> LindbladResult:
        """Sample reset-mode trajectories and average them.

        checkpoints lists step counts k at which the averaged density after k
        steps is also recorded.
        """
        marks = frozenset(int(k) for k in checkpoints)
        if any(not 0 <= k <= self.plan.R for k in marks):
            raise ValidationError(f"Checkpoints must lie in 0..{self.plan.R}")
        _, amps, snapshots = await self._async_gather(
            shots, seed, threads, postselect=False, checkpoints=marks
        )
        estimates, stderrs = self._estimate(amps, observables or {})
        history = {}
        if self.problem.dense_enabled:
            history = {k: self._average_density(rows) for k, rows in snapshots.items()}
        return LindbladResult(
            shots, seed, self._average_density(amps), estimates, stderrs, history
        )

    def run_lindblad(
        self,
        shots: int,
        seed: int,
        observables: Mapping[str, PauliSum] | None = None,
        threads: int = 1,
        checkpoints: Iterable[int] = (),
    ) -> LindbladResult:
        """Blocking form of async_run_lindblad."""
        return asyncio.run(
            self.async_run_lindblad(shots, seed, observables, threads, checkpoints)
        )


def step(
    state: StateVector, problem: OdeProblem, plan: StepPlan
) -> tuple[StateVector, float]:
    """Apply one post-selected step of the plan."""
    return OdeSolver(problem, plan).step(state)


def run_postselect(
    problem: OdeProblem, plan: StepPlan, bounds: BoundQuantities | None = None
) -> RunResult:
    """Run the deterministic post-selected algorithm."""
    return OdeSolver(problem, plan).run_postselect(bounds)


def run_trajectories(
    problem: OdeProblem,
    plan: StepPlan,
    shots: int,
    seed: int,
    observables: Mapping[str, PauliSum] | None = None,
    threads: int = 1,
) -> TrajectoryStats:
    """Run shot-sampled post-selected trajectories."""
    return OdeSolver(problem, plan).run_trajectories(shots, seed, observables, threads)


def run_lindblad(
    problem: OdeProblem,
    plan: StepPlan,
    shots: int,
    seed: int,
    observables: Mapping[str, PauliSum] | None = None,
    threads: int = 1,
) -> LindbladResult:
    """Run reset-mode trajectories approximating the Lindblad solution."""
    return OdeSolver(problem, plan).run_lindblad(shots, seed, observables, threads)


def _branch_values(
    problem: OdeProblem, epsilon: float, bounds: BoundQuantities
) -> tuple[float, float]:
    if not 0 < epsilon < 1:
        raise ValidationError(f"Target error must lie in (0, 1), got {epsilon}")
    if bounds.final_norm == 0:
        raise UnsolvableTargetError("psi(T) = 0, no relative error target can be met")
    scale = problem.final_time**2 / (bounds.final_norm * epsilon)
    return (
        bounds.commutator_sum * bounds.sup_psi * scale,
        bounds.sup_L4 * scale,
    )


def choose_step_count(
    problem: OdeProblem,
    epsilon: float,
    bounds: BoundQuantities,
    method: str = METHOD_PAULI,
    splitting: str = SPLITTING_SYMMETRIC,
) -> StepPlan:
    """Return the plan whose R meets a relative error target epsilon."""
    commutator_branch, dissipator_branch = _branch_values(problem, epsilon, bounds)
    value = max(commutator_branch, dissipator_branch)
    if value <= 1:
        branch = BRANCH_FLOOR
    elif commutator_branch >= dissipator_branch:
        branch = BRANCH_COMMUTATOR
    else:
        branch = BRANCH_DISSIPATOR
    steps = max(1, math.ceil(value))
    _LOGGER.debug(
        "Chose R=%s for epsilon=%g (commutator %.6g, dissipator %.6g, branch %s)",
        steps,
        epsilon,
        commutator_branch,
        dissipator_branch,
        branch,
    )
    return StepPlan.for_time(problem.final_time, steps, method, splitting, branch)


def query_count(problem: OdeProblem, epsilon: float, bounds: BoundQuantities) -> float:
    """Return q^2 R with the real-valued R of the step-count formula."""
    value = max(_branch_values(problem, epsilon, bounds))
    return (bounds.initial_norm / bounds.final_norm) ** 2 * value


def state_ratio(
    problem: OdeProblem, oracle_solution: np.ndarray, plan: StepPlan | None = None
) -> StateRatio:
    """Return q = ||psi0|| / ||psi(T)|| and q^2 R when a plan is given."""
    final_norm = float(np.linalg.norm(oracle_solution))
    if final_norm == 0:
        raise UnsolvableTargetError("psi(T) = 0, the state ratio is unbounded")
    q = problem.initial_norm / final_norm
    return StateRatio(q, None if plan is None else q**2 * plan.R)


@dataclass(frozen=True)
class ScalingPoint:
    """Counted cost of one instance at a fixed target error."""

    n: int
    R: int
    rotations_per_step: int
    q: float
    cost: float


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit of cost = c n^alpha T^2 / epsilon."""

    points: tuple[ScalingPoint, ...]
    alpha: float
    prefactor: float


def scaling_probe(
    problems: Iterable[OdeProblem],
    epsilon: float,
    splitting: str = SPLITTING_SYMMETRIC,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> ScalingFit:
    """Fit the rotation count of step-count-selected runs against n.

    The cost of each instance is R times the rotations per step divided by q,
    since the step-count formula carries a factor 1 / ||psi(T)||.
    """
    points = []
    final_time = None
    for problem in problems:
        bounds = compute_bound_quantities(problem, grid_points)
        plan = choose_step_count(problem, epsilon, bounds, splitting=splitting)
        solver = OdeSolver(problem, plan)
        q = bounds.initial_norm / bounds.final_norm
        points.append(
            ScalingPoint(
                problem.n,
                plan.R,
                solver.rotations_per_step,
                q,
                plan.R * solver.rotations_per_step / q,
            )
        )
        final_time = problem.final_time
    if len(points) < 2:
        raise ValidationError("A scaling fit needs at least two instances")
    assert final_time is not None
    log_n = np.log([p.n for p in points])
    log_cost = np.log([p.cost * epsilon / final_time**2 for p in points])
    alpha, intercept = np.polyfit(log_n, log_cost, 1)
    _LOGGER.debug("Scaling probe exponent %.3f over n=%s", alpha, [p.n for p in points])
    return ScalingFit(tuple(points), float(alpha), float(math.exp(intercept)))


def sweep_plans(
    final_time: float,
    step_counts: Sequence[int],
    method: str = METHOD_PAULI,
    splitting: str = SPLITTING_SYMMETRIC,
) -> list[StepPlan]:
    """Return one plan per step count."""
    return [StepPlan.for_time(final_time, r, method, splitting) for r in step_counts]
