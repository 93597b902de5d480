"""Invariant suite behind the verify command."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
import math
from typing import Any

import numpy as np

from .const import _LOGGER
from .hatano_nelson import HNParams, verify_hn_factorization
from .oracle import dilation_block, dilation_remainder_bound, normalized_error_rows
from .pauli import pauli_decompose_dense, to_dense
from .problem import build_dilation
from .util import CheckReport, CheckResult, qubits_for_dim

DILATION_DIMS = (2, 4, 8, 16)
NORMALIZED_DIMS = (2, 8, 64)
ROUND_TRIP_QUBITS = (1, 2, 3)
TAU_RANGE = (1e-4, 1e-1)
SLOPE_TARGET = 2.0
SLOPE_TOLERANCE = 0.1
ROUND_TRIP_TOLERANCE = 1e-12
NORMALIZED_BATCH = 8192


def random_matrix(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Return a complex Gaussian dim x dim matrix."""
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


def random_vectors(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    """Return complex Gaussian rows."""
    return rng.standard_normal((rows, dim)) + 1j * rng.standard_normal((rows, dim))


@dataclass(frozen=True)
class DilationSample:
    """One evaluation of the projected dilation against I - tau L^dag L."""

    dim: int
    tau: float
    residual: float
    bound: float
    quartic: float

    @property
    def violated(self) -> bool:
        """Return True if the residual exceeds its remainder bound."""
        return self.residual > self.bound * (1 + 1e-9) + 1e-15


def sample_dilation_identity(
    samples: int,
    rng: np.random.Generator,
    dims: Sequence[int] = DILATION_DIMS,
) -> list[DilationSample]:
    """Draw random (L, psi, tau) and compare the projected dilation with I - tau D.

    L is scaled to unit spectral norm; tau is log-uniform over TAU_RANGE.
    """
    low, high = (math.log10(t) for t in TAU_RANGE)
    out = []
    for index in range(samples):
        dim = dims[index % len(dims)]
        matrix = random_matrix(rng, dim)
        matrix /= np.linalg.norm(matrix, 2)
        jump = pauli_decompose_dense(matrix, qubits_for_dim(dim))
        dilation = build_dilation(jump)
        psi = random_vectors(rng, 1, dim)[0]
        psi /= np.linalg.norm(psi)
        tau = 10 ** rng.uniform(low, high)

        dense = to_dense(jump)
        dissipator = dense.conj().T @ dense
        projected = dilation_block(dilation, tau) @ psi
        first_order = psi - tau * (dissipator @ psi)
        out.append(
            DilationSample(
                dim=dim,
                tau=tau,
                residual=float(np.linalg.norm(projected - first_order)),
                bound=dilation_remainder_bound(dissipator, psi, tau),
                quartic=float(np.linalg.norm(dissipator @ (dissipator @ psi))),
            )
        )
    return out


def dilation_slope(samples: Sequence[DilationSample]) -> float:
    """Return the log-log slope of residual / ||(L^dag L)^2 psi|| against tau."""
    usable = [s for s in samples if s.quartic > 0 and s.residual > 0]
    taus = np.log([s.tau for s in usable])
    scaled = np.log([s.residual / s.quartic for s in usable])
    return float(np.polyfit(taus, scaled, 1)[0])


def check_dilation_identity(samples: int, rng: np.random.Generator) -> CheckReport:
    """Return the bound and slope checks of the projected dilation."""
    drawn = sample_dilation_identity(samples, rng)
    violations = sum(s.violated for s in drawn)
    worst = max((s.residual / s.bound for s in drawn if s.bound > 0), default=0.0)
    slope = dilation_slope(drawn)
    return CheckReport(
        (
            CheckResult(
                "dilation identity within remainder bound",
                violations == 0,
                worst,
                f"{violations} of {len(drawn)} samples violated",
            ),
            CheckResult(
                "dilation remainder is second order in tau",
                abs(slope - SLOPE_TARGET) <= SLOPE_TOLERANCE,
                abs(slope - SLOPE_TARGET),
                f"slope {slope:.4f}",
            ),
        )
    )


def check_normalized_error(
    samples: int,
    rng: np.random.Generator,
    dims: Sequence[int] = NORMALIZED_DIMS,
) -> CheckReport:
    """Check the normalized-distance bound on random pairs meeting its premise."""
    checks = []
    for dim in dims:
        violations = 0
        worst = 0.0
        for start in range(0, samples, NORMALIZED_BATCH):
            rows = min(NORMALIZED_BATCH, samples - start)
            psi = random_vectors(rng, rows, dim)
            direction = random_vectors(rng, rows, dim)
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            gap = rng.uniform(0.0, 0.5, rows) * np.linalg.norm(psi, axis=1)
            phi = psi + gap[:, None] * direction
            distance, bound = normalized_error_rows(psi, phi)
            positive = bound > 0
            violations += int(np.sum(distance > bound * (1 + 1e-12)))
            if positive.any():
                worst = max(worst, float(np.max(distance[positive] / bound[positive])))
        checks.append(
            CheckResult(
                f"normalized error bound, dim {dim}",
                violations == 0,
                worst,
                f"{violations} of {samples} pairs violated",
            )
        )
    return CheckReport(tuple(checks))


def check_pauli_round_trip(
    rng: np.random.Generator, qubits: Sequence[int] = ROUND_TRIP_QUBITS
) -> CheckReport:
    """Check that Pauli decomposition of random matrices rebuilds them."""
    checks = []
    for n in qubits:
        matrix = random_matrix(rng, 1 << n)
        rebuilt = to_dense(pauli_decompose_dense(matrix, n))
        residual = float(np.linalg.norm(rebuilt - matrix) / np.linalg.norm(matrix))
        checks.append(
            CheckResult(
                f"Pauli decomposition round trip, {n} qubit(s)",
                residual <= ROUND_TRIP_TOLERANCE,
                residual,
            )
        )
    return CheckReport(tuple(checks))


def run_invariant_suite(
    params: HNParams, samples: int = 200, seed: int = 0
) -> CheckReport:
    """Run every identity check: chain factorization, dilation, normalized error, Pauli."""
    rng = np.random.default_rng(seed)
    report = (
        verify_hn_factorization(params)
        + check_dilation_identity(samples, rng)
        + check_normalized_error(samples, rng)
        + check_pauli_round_trip(rng)
    )
    _LOGGER.debug(
        "Invariant suite finished: %s of %s checks passed",
        len(report.checks) - len(report.failures),
        len(report.checks),
    )
    for failure in report.failures:
        _LOGGER.warning("Check failed: %s (residual %.3g)", failure.name, failure.residual)
    return report


def get_diagnostics(config: dict[str, Any], report: CheckReport) -> dict[str, Any]:
    """Return the verify summary for a run."""
    return {
        "config": config,
        "data": report.as_dict(),
    }
