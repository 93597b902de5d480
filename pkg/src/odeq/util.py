"""Shared helpers for odeq."""
from __future__ import annotations

from dataclasses import dataclass
import hashlib
import json
import os
from typing import Any

import numpy as np

from .const import _LOGGER, DEFAULT_DENSE_CAP, ENV_DENSE_CAP
from .exceptions import CapacityError, ShapeError, ValidationError


def dense_cap() -> int:
    """Return the qubit cap for dense representations."""
    if (raw := os.environ.get(ENV_DENSE_CAP)) is None:
        return DEFAULT_DENSE_CAP
    try:
        cap = int(raw)
    except ValueError as ex:
        raise ValidationError(f"{ENV_DENSE_CAP} must be an integer, got {raw!r}") from ex
    if cap < 1:
        raise ValidationError(f"{ENV_DENSE_CAP} must be positive, got {cap}")
    return cap


def check_dense_capacity(n_qubits: int, cap: int | None = None) -> None:
    """Raise if a dense object over n_qubits would exceed the cap."""
    cap = dense_cap() if cap is None else cap
    if n_qubits > cap:
        raise CapacityError(n_qubits, cap)


def dense_allowed(n_qubits: int) -> bool:
    """Return True if dense objects over n_qubits are allowed."""
    return n_qubits <= dense_cap()


def qubits_for_dim(dim: int) -> int:
    """Return n such that dim == 2**n."""
    if dim < 1 or dim & (dim - 1):
        raise ShapeError(f"Dimension {dim} is not a power of two")
    return dim.bit_length() - 1


def parity(values: np.ndarray, n_bits: int) -> np.ndarray:
    """Return the parity of the set bits of each value as 0/1."""
    out = np.zeros_like(values)
    for bit in range(n_bits):
        out ^= (values >> bit) & 1
    return out


def as_state_array(amplitudes: Any) -> np.ndarray:
    """Coerce amplitudes to a finite complex vector."""
    vec = np.array(amplitudes, dtype=np.complex128)
    if vec.ndim != 1:
        raise ShapeError(f"Expected a vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValidationError("Amplitudes must be finite")
    return vec


def normalized(vec: np.ndarray) -> np.ndarray:
    """Return vec divided by its norm."""
    return vec / np.linalg.norm(vec)


def content_hash(payload: Any) -> str:
    """Return a stable sha256 digest of a JSON-serialisable payload."""
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    digest = hashlib.sha256(encoded).hexdigest()
    _LOGGER.debug("Content hash %s over %s bytes", digest[:12], len(encoded))
    return digest


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one identity check."""

    name: str
    passed: bool
    residual: float
    detail: str = ""


@dataclass(frozen=True)
class CheckReport:
    """A group of identity checks."""

    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        """Return True if every check passed."""
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        """Return the failed checks."""
        return [check for check in self.checks if not check.passed]

    def __add__(self, other: CheckReport) -> CheckReport:
        return CheckReport(self.checks + other.checks)

    def as_dict(self) -> dict[str, Any]:
        """Return the report as a plain dict."""
        return {
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "residual": c.residual,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
        }
