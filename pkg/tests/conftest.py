"""Fixtures for odeq tests."""
from __future__ import annotations

import numpy as np
import pytest

from odeq.const import ENV_DENSE_CAP
from odeq.hatano_nelson import HNParams, build_hn_problem
from odeq.problem import OdeProblem

from . import SEED, decay_problem, hn_params, random_problem


@pytest.fixture
def rng() -> np.random.Generator:
    """Return a seeded generator."""
    return np.random.default_rng(SEED)


@pytest.fixture
def chain() -> HNParams:
    """Return the 4-site chain with gamma = 0.5."""
    return hn_params()


@pytest.fixture
def chain_problem(chain: HNParams) -> OdeProblem:
    """Return the 4-site chain as an ODE problem."""
    return build_hn_problem(chain)


@pytest.fixture
def decay() -> OdeProblem:
    """Return the pure-decay qubit."""
    return decay_problem()


@pytest.fixture
def small_problem(rng: np.random.Generator) -> OdeProblem:
    """Return a random 2-qubit dissipative instance."""
    return random_problem(rng, 2)


@pytest.fixture
def dense_cap(monkeypatch: pytest.MonkeyPatch):
    """Return a setter for the dense qubit cap."""

    def _set(cap: int) -> None:
        monkeypatch.setenv(ENV_DENSE_CAP, str(cap))

    return _set
