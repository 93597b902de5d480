"""Batch experiment runner: JSON config in, CSV plus JSON summary out."""
from __future__ import annotations

import argparse
from collections.abc import Callable, Mapping, Sequence
import csv
from dataclasses import dataclass, field
import io
import json
import logging
import math
from pathlib import Path
from typing import Any

import colorlog
import numpy as np
import voluptuous as vol

from .const import (
    _LOGGER,
    COMMAND_BOUNDS,
    COMMAND_CONVERGENCE,
    COMMAND_HN,
    COMMAND_LINDBLAD,
    COMMAND_SUCCESS_PROB,
    COMMAND_TRAJECTORIES,
    COMMAND_VERIFY,
    CONF_COMMAND,
    CONF_EPSILON,
    CONF_FRAMES,
    CONF_GRID_POINTS,
    CONF_HN,
    CONF_MATRIX_FILE,
    CONF_METHOD,
    CONF_MODE,
    CONF_OBSERVABLES,
    CONF_PROBLEM,
    CONF_PSI0,
    CONF_R,
    CONF_R_VALUES,
    CONF_SAMPLES,
    CONF_SEED,
    CONF_SHOTS,
    CONF_SPLITTING,
    CONF_T,
    CONF_THREADS,
    DEFAULT_FRAMES,
    DEFAULT_GRID_POINTS,
    DEFAULT_R_VALUES,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_SHOTS,
    DEFAULT_THREADS,
    EXIT_CONFIG,
    EXIT_FAILURE,
    EXIT_OK,
    METHOD_PAULI,
    METHODS,
    MODE_POSTSELECT,
    MODE_TRAJECTORIES,
    MODES,
    SPLITTING_SYMMETRIC,
    SPLITTINGS,
)
from .diagnostics import get_diagnostics, run_invariant_suite
from .engine import expectation
from .exceptions import OdeqError, ValidationError
from .hatano_nelson import (
    HNParams,
    build_hn_problem,
    density_observables,
    density_profile,
    hn_params_from_config,
    interaction_matrix,
    skin_profile,
)
from .oracle import (
    BoundQuantities,
    compute_bound_quantities,
    cumulative_error_bound,
    exact_solution,
    lindblad_rk4,
    normalized_distance,
    trace_distance,
    trotter_step_bound,
)
from .pauli import PauliSum
from .problem import (
    PAULI_TERMS_SCHEMA,
    PSI0_SCHEMA,
    OdeProblem,
    make_initial_state,
    problem_from_config,
    problem_from_dense,
)
from .solver import (
    OdeSolver,
    StepPlan,
    choose_step_count,
    query_count,
    run_postselect,
    run_trajectories,
    state_ratio,
    sweep_plans,
)
from .util import check_dense_capacity, content_hash, qubits_for_dim

SOURCE_GROUP = "source"
STEPS_GROUP = "steps"
HN_SOLVER_KEYS = (CONF_EPSILON, CONF_R, CONF_SHOTS, CONF_SEED)

CONVERGENCE_HEADER = ["R", "raw_error", "normalized_error", "success_prob", "bound_value"]
SUCCESS_HEADER = ["step", "t", "norm_sq", "success_prob"]
TRAJECTORY_HEADER = ["quantity", "estimate", "stderr", "reference"]
LINDBLAD_HEADER = ["step", "t", "trace_distance", "trace"]
BOUNDS_HEADER = ["quantity", "value"]
VERIFY_HEADER = ["check", "passed", "residual", "detail"]

EXPERIMENT_SCHEMA = vol.Schema(
    {
        vol.Exclusive(CONF_PROBLEM, SOURCE_GROUP): dict,
        vol.Exclusive(CONF_HN, SOURCE_GROUP): dict,
        vol.Exclusive(CONF_MATRIX_FILE, SOURCE_GROUP): str,
        vol.Optional(CONF_PSI0): PSI0_SCHEMA,
        vol.Optional(CONF_T): vol.All(vol.Coerce(float), vol.Range(min=0)),
        vol.Exclusive(CONF_EPSILON, STEPS_GROUP): vol.All(
            vol.Coerce(float),
            vol.Range(min=0, max=1, min_included=False, max_included=False),
        ),
        vol.Exclusive(CONF_R, STEPS_GROUP): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_R_VALUES, default=DEFAULT_R_VALUES): vol.All(
            [vol.All(int, vol.Range(min=1))], vol.Length(min=1)
        ),
        vol.Optional(CONF_SHOTS, default=DEFAULT_SHOTS): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): vol.All(int, vol.Range(min=0)),
        vol.Optional(CONF_THREADS, default=DEFAULT_THREADS): vol.All(
            int, vol.Range(min=1)
        ),
        vol.Optional(CONF_METHOD, default=METHOD_PAULI): vol.In(METHODS),
        vol.Optional(CONF_SPLITTING, default=SPLITTING_SYMMETRIC): vol.In(SPLITTINGS),
        vol.Optional(CONF_MODE, default=MODE_POSTSELECT): vol.In(MODES),
        vol.Optional(CONF_OBSERVABLES, default={}): {str: PAULI_TERMS_SCHEMA},
        vol.Optional(CONF_SAMPLES, default=DEFAULT_SAMPLES): vol.All(
            int, vol.Range(min=2)
        ),
        vol.Optional(CONF_GRID_POINTS, default=DEFAULT_GRID_POINTS): vol.All(
            int, vol.Range(min=2)
        ),
        vol.Optional(CONF_FRAMES, default=DEFAULT_FRAMES): vol.All(
            int, vol.Range(min=2)
        ),
    }
)


@dataclass
class Experiment:
    """A validated config with its problem built."""

    command: str
    config: dict[str, Any]
    problem: OdeProblem | None = None
    hn: HNParams | None = None

    @property
    def seed(self) -> int:
        """Return the trajectory seed."""
        return self.config[CONF_SEED]

    @property
    def threads(self) -> int:
        """Return the worker count for shot batches."""
        return self.config[CONF_THREADS]

    def require_problem(self) -> OdeProblem:
        """Return the problem, raising if the config has no source."""
        if self.problem is None:
            raise ValidationError(
                f"Command {self.command!r} needs one of "
                f"{CONF_PROBLEM!r}, {CONF_HN!r} or {CONF_MATRIX_FILE!r}"
            )
        return self.problem


@dataclass
class CommandOutput:
    """Rows and summary of one command, written only once complete."""

    header: list[str]
    rows: list[list[Any]]
    summary: dict[str, Any] = field(default_factory=dict)
    exit_code: int = EXIT_OK


@dataclass(frozen=True)
class Command:
    """A command handler and whether it needs the dense oracle."""

    handler: Callable[[Experiment], CommandOutput]
    oracle: bool = False


def _lift_hn_settings(config: Mapping[str, Any]) -> dict[str, Any]:
    """Copy solver settings given inside the chain section to the top level."""
    merged = dict(config)
    if isinstance(section := config.get(CONF_HN), Mapping):
        for key in HN_SOLVER_KEYS:
            if key in section and key not in merged:
                merged[key] = section[key]
        if {CONF_EPSILON, CONF_R} <= merged.keys():
            raise ValidationError(f"Give either {CONF_EPSILON!r} or {CONF_R!r}, not both")
    return merged


def _load_matrix(config: Mapping[str, Any]) -> OdeProblem:
    path = Path(config[CONF_MATRIX_FILE])
    if CONF_PSI0 not in config or CONF_T not in config:
        raise ValidationError(
            f"A matrix file needs {CONF_PSI0!r} and {CONF_T!r} alongside it"
        )
    try:
        matrix = np.load(path)
    except (OSError, ValueError) as ex:
        raise ValidationError(f"Cannot read matrix file {path}: {ex}") from ex
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"Matrix file holds shape {matrix.shape}, expected square")
    n = qubits_for_dim(matrix.shape[0])
    psi0 = make_initial_state(n, config[CONF_PSI0])
    return problem_from_dense(matrix, psi0, config[CONF_T], label=path.name)


def load_experiment(
    command: str,
    config: Mapping[str, Any],
    seed: int | None = None,
    threads: int | None = None,
) -> Experiment:
    """Validate a config and build its problem."""
    merged = _lift_hn_settings(config)
    if seed is not None:
        merged[CONF_SEED] = seed
    if threads is not None:
        merged[CONF_THREADS] = threads
    try:
        data = EXPERIMENT_SCHEMA(merged)
    except vol.Invalid as ex:
        raise ValidationError(f"Invalid experiment config: {ex}") from ex

    experiment = Experiment(command, data)
    if CONF_PROBLEM in data:
        experiment.problem = problem_from_config(data[CONF_PROBLEM])
    elif CONF_HN in data:
        experiment.hn = hn_params_from_config(data[CONF_HN])
        experiment.problem = build_hn_problem(experiment.hn)
    elif CONF_MATRIX_FILE in data:
        experiment.problem = _load_matrix(data)
    return experiment


def _observables(experiment: Experiment, problem: OdeProblem) -> dict[str, PauliSum]:
    configured = experiment.config[CONF_OBSERVABLES]
    if not configured and experiment.hn is not None:
        return density_observables(problem.n)
    observables = {}
    for name, items in configured.items():
        observable = PauliSum.from_json(problem.n, items)
        if not observable.is_hermitian():
            raise ValidationError(f"Observable {name!r} must have real coefficients")
        observables[name] = observable
    return observables


def _plan(
    experiment: Experiment,
    problem: OdeProblem,
    bounds: BoundQuantities | None = None,
) -> StepPlan:
    """Return the plan from an explicit R or from epsilon via the step-count formula."""
    config = experiment.config
    method, splitting = config[CONF_METHOD], config[CONF_SPLITTING]
    if CONF_R in config:
        return StepPlan.for_time(problem.final_time, config[CONF_R], method, splitting)
    if CONF_EPSILON in config:
        if bounds is None:
            bounds = compute_bound_quantities(problem, config[CONF_GRID_POINTS])
        return choose_step_count(
            problem, config[CONF_EPSILON], bounds, method, splitting
        )
    raise ValidationError(f"Give either {CONF_EPSILON!r} or {CONF_R!r}")


def _frames(steps: int, frames: int) -> list[int]:
    """Return distinct step indices spread evenly over 0..steps."""
    return sorted({int(k) for k in np.rint(np.linspace(0, steps, frames))})


def _fit_slope(step_counts: Sequence[int], errors: Sequence[float]) -> float | None:
    usable = [(r, e) for r, e in zip(step_counts, errors) if e > 0]
    if len(usable) < 2:
        return None
    x, y = zip(*usable)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def convergence(experiment: Experiment) -> CommandOutput:
    """Sweep R and compare every run with the exact solution."""
    problem = experiment.require_problem()
    config = experiment.config
    exact = exact_solution(problem)
    bounds = compute_bound_quantities(problem, config[CONF_GRID_POINTS])
    rows = []
    violations = 0
    for plan in sweep_plans(
        problem.final_time,
        config[CONF_R_VALUES],
        config[CONF_METHOD],
        config[CONF_SPLITTING],
    ):
        result = run_postselect(problem, plan)
        approx = result.system_state
        raw_error = float(np.linalg.norm(approx - exact))
        bound = cumulative_error_bound(bounds, plan.R)
        if plan.method == METHOD_PAULI:
            # Rotation-level H splitting adds its own per-step error.
            bound += (
                plan.R
                * trotter_step_bound(problem.hamiltonian, plan.tau)
                * problem.initial_norm
            )
        violations += raw_error > bound
        rows.append(
            [
                plan.R,
                raw_error,
                normalized_distance(exact, approx),
                result.success_prob,
                bound,
            ]
        )
    if violations:
        _LOGGER.warning("%s of %s rows exceed their error bound", violations, len(rows))
    return CommandOutput(
        CONVERGENCE_HEADER,
        rows,
        {
            "slope": _fit_slope([r[0] for r in rows], [r[2] for r in rows]),
            "bound_violations": violations,
            "exact_norm": float(np.linalg.norm(exact)),
            "bounds": bounds.as_dict(),
        },
    )


def success_prob(experiment: Experiment) -> CommandOutput:
    """Record the per-step norm trace of one post-selected run."""
    problem = experiment.require_problem()
    plan = _plan(experiment, problem)
    result = run_postselect(problem, plan)
    initial = result.norm_trace[0]
    rows = [
        [k, k * plan.tau, norm_sq, norm_sq / initial]
        for k, norm_sq in enumerate(result.norm_trace)
    ]
    summary: dict[str, Any] = {
        "plan": plan.as_dict(),
        "success_prob": result.success_prob,
        "rotation_count": result.rotation_count,
    }
    if problem.dense_enabled:
        exact = exact_solution(problem)
        ratio = state_ratio(problem, exact, plan)
        expected = 1.0 / ratio.q**2
        summary.update(
            {
                "expected_success_prob": expected,
                "gap": abs(result.success_prob - expected),
                "q": ratio.q,
                "q2R": ratio.repetitions,
            }
        )
    return CommandOutput(SUCCESS_HEADER, rows, summary)


def hn_series(experiment: Experiment) -> CommandOutput:
    """Record the site-density time series of the chain."""
    problem = experiment.require_problem()
    if (params := experiment.hn) is None:
        raise ValidationError(f"Command {COMMAND_HN!r} needs an {CONF_HN!r} section")
    plan = _plan(experiment, problem)
    frames = _frames(plan.R, experiment.config[CONF_FRAMES])
    times = [k * plan.tau for k in frames]

    wanted = set(frames)
    states = [
        state.block(0) for k, state in OdeSolver(problem, plan).iterate() if k in wanted
    ]
    densities = density_profile(np.array(states), params.sites)
    sites = range(params.sites)
    header = ["step", "t"] + [f"n_{i}" for i in sites]
    exact = None
    if problem.dense_enabled:
        exact = skin_profile(params, times)
        header += [f"exact_n_{i}" for i in sites]

    rows = []
    for index, (k, t) in enumerate(zip(frames, times)):
        row = [k, t, *map(float, densities[index])]
        if exact is not None:
            row += [float(v) for v in exact[index]]
        rows.append(row)

    summary: dict[str, Any] = {"plan": plan.as_dict(), "shift": params.shift}
    if experiment.config[CONF_MODE] == MODE_TRAJECTORIES:
        stats = run_trajectories(
            problem,
            plan,
            experiment.config[CONF_SHOTS],
            experiment.seed,
            density_observables(params.sites),
            experiment.threads,
        )
        stats.raise_for_survivors()
        summary["trajectories"] = {
            "successes": stats.successes,
            "estimates": stats.estimates,
            "stderrs": stats.stderrs,
        }
    return CommandOutput(header, rows, summary)


def trajectories(experiment: Experiment) -> CommandOutput:
    """Estimate observables from post-selected shots."""
    problem = experiment.require_problem()
    config = experiment.config
    plan = _plan(experiment, problem)
    observables = _observables(experiment, problem)
    stats = run_trajectories(
        problem, plan, config[CONF_SHOTS], experiment.seed, observables, experiment.threads
    )
    stats.raise_for_survivors()

    reference = None
    if problem.dense_enabled:
        reference = OdeSolver(problem, plan).run_postselect()
    rows = [
        [
            "success_prob",
            stats.success_fraction,
            stats.success_stderr,
            math.nan if reference is None else reference.success_prob,
        ]
    ]
    for name, observable in observables.items():
        expected = math.nan
        if reference is not None:
            expected = expectation(reference.final_state, observable, normalized=True)
        rows.append([name, stats.estimates[name], stats.stderrs[name], expected])
    return CommandOutput(
        TRAJECTORY_HEADER,
        rows,
        {
            "plan": plan.as_dict(),
            "shots": stats.shots,
            "successes": stats.successes,
            "seed": stats.seed,
        },
    )


def lindblad(experiment: Experiment) -> CommandOutput:
    """Compare the trajectory-averaged density with the master equation."""
    problem = experiment.require_problem()
    config = experiment.config
    plan = _plan(experiment, problem)
    frames = _frames(plan.R, config[CONF_FRAMES])
    solver = OdeSolver(problem, plan)
    result = solver.run_lindblad(
        config[CONF_SHOTS],
        experiment.seed,
        _observables(experiment, problem),
        experiment.threads,
        frames,
    )
    times = [k * plan.tau for k in frames]
    reference = lindblad_rk4(problem, times)
    rows = []
    for index, (k, t) in enumerate(zip(frames, times)):
        density = result.history[k]
        rows.append(
            [k, t, trace_distance(density, reference[index]), float(np.trace(density).real)]
        )
    return CommandOutput(
        LINDBLAD_HEADER,
        rows,
        {
            "plan": plan.as_dict(),
            "final_trace_distance": rows[-1][2],
            "max_trace_distance": max(r[2] for r in rows),
            "estimates": result.estimates,
            "stderrs": result.stderrs,
        },
    )


def bounds(experiment: Experiment) -> CommandOutput:
    """Report the bound quantities, R for epsilon and the repetition cost."""
    problem = experiment.require_problem()
    config = experiment.config
    if CONF_EPSILON not in config:
        raise ValidationError(f"Command {COMMAND_BOUNDS!r} needs {CONF_EPSILON!r}")
    quantities = compute_bound_quantities(problem, config[CONF_GRID_POINTS])
    plan = _plan(experiment, problem, quantities)
    q = quantities.initial_norm / quantities.final_norm
    values = {
        **quantities.as_dict(),
        CONF_EPSILON: config[CONF_EPSILON],
        CONF_R: plan.R,
        "q": q,
        "q2R": q**2 * plan.R,
        "query_count": query_count(problem, config[CONF_EPSILON], quantities),
    }
    rows = [[name, value] for name, value in values.items()]
    return CommandOutput(BOUNDS_HEADER, rows, {"branch": plan.branch, **values})


def verify(experiment: Experiment) -> CommandOutput:
    """Run the invariant suite."""
    params = experiment.hn or HNParams(
        sites=4, J_coupling=1.0, gamma=0.5, V=interaction_matrix(4, 0.5), T=1.0
    )
    report = run_invariant_suite(params, experiment.config[CONF_SAMPLES], experiment.seed)
    rows = [[c.name, c.passed, c.residual, c.detail] for c in report.checks]
    for row in rows:
        print(f"{'PASS' if row[1] else 'FAIL'}  {row[0]}")
    return CommandOutput(
        VERIFY_HEADER,
        rows,
        get_diagnostics(experiment.config, report),
        EXIT_OK if report.passed else EXIT_FAILURE,
    )


COMMANDS: dict[str, Command] = {
    COMMAND_CONVERGENCE: Command(convergence, oracle=True),
    COMMAND_SUCCESS_PROB: Command(success_prob),
    COMMAND_HN: Command(hn_series),
    COMMAND_TRAJECTORIES: Command(trajectories),
    COMMAND_LINDBLAD: Command(lindblad, oracle=True),
    COMMAND_BOUNDS: Command(bounds, oracle=True),
    COMMAND_VERIFY: Command(verify),
}


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def render_csv(output: CommandOutput) -> str:
    """Return the CSV text of a command output."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(output.header)
    for row in output.rows:
        writer.writerow([_cell(value) for value in row])
    return buffer.getvalue()


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def write_artifacts(
    out_dir: Path, experiment: Experiment, echo: Mapping[str, Any], output: CommandOutput
) -> tuple[Path, Path]:
    """Write <command>.csv and <command>.json into out_dir."""
    text = render_csv(output)
    summary = {
        CONF_COMMAND: experiment.command,
        "config": echo,
        "seed": experiment.seed,
        "content_hash": content_hash({"config": echo, "csv": text}),
        "summary": output.summary,
    }
    encoded = json.dumps(summary, indent=2, sort_keys=True, default=_json_default)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{experiment.command}.csv"
    json_path = out_dir / f"{experiment.command}.json"
    csv_path.write_text(text)
    json_path.write_text(encoded + "\n")
    _LOGGER.info("Wrote %s and %s", csv_path, json_path)
    return csv_path, json_path


def load_config(path: str | Path) -> dict[str, Any]:
    """Read an experiment config file."""
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as ex:
        raise ValidationError(f"Cannot read config {path}: {ex}") from ex
    if not isinstance(config, dict):
        raise ValidationError(f"Config {path} must hold a JSON object")
    return config


def run_command(
    command: str,
    config: Mapping[str, Any],
    out_dir: str | Path,
    seed: int | None = None,
    threads: int | None = None,
) -> int:
    """Run one command and write its artifacts, returning the exit status."""
    if command not in COMMANDS:
        _LOGGER.error("Unknown command %r", command)
        return EXIT_CONFIG
    try:
        experiment = load_experiment(command, config, seed, threads)
        if COMMANDS[command].oracle:
            check_dense_capacity(experiment.require_problem().n)
        output = COMMANDS[command].handler(experiment)
        echo = {
            **config,
            CONF_SEED: experiment.seed,
            CONF_THREADS: experiment.threads,
        }
        write_artifacts(Path(out_dir), experiment, echo, output)
    except OdeqError as ex:
        _LOGGER.error("%s", ex)
        return ex.exit_code
    return output.exit_code


def setup_logging(verbose: bool = False) -> None:
    """Attach a colored console handler to the package logger."""
    if not any(isinstance(h, colorlog.StreamHandler) for h in _LOGGER.handlers):
        handler = colorlog.StreamHandler()
        handler.setFormatter(
            colorlog.ColoredFormatter(
                "%(log_color)s%(levelname)-8s%(reset)s %(name)s: %(message)s"
            )
        )
        _LOGGER.addHandler(handler)
    _LOGGER.setLevel(logging.DEBUG if verbose else logging.INFO)


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser."""
    parser = argparse.ArgumentParser(
        prog="odeq",
        description="Simulate and validate the single-ancilla linear ODE algorithm.",
    )
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", type=Path, help="Experiment config (JSON).")
    parser.add_argument("--out", type=Path, default=Path("."), help="Output directory.")
    parser.add_argument("--seed", type=int, help="Override the trajectory seed.")
    parser.add_argument("--threads", type=int, help="Worker threads for shot batches.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the odeq console script."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    config: dict[str, Any] = {}
    if args.config is not None:
        try:
            config = load_config(args.config)
        except ValidationError as ex:
            _LOGGER.error("%s", ex)
            return ex.exit_code
    return run_command(args.command, config, args.out, args.seed, args.threads)
