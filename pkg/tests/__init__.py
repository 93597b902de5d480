"""Tests for odeq."""
from __future__ import annotations

import math

import numpy as np

from odeq.hatano_nelson import HNParams, interaction_matrix
from odeq.pauli import PauliString, PauliSum, PauliTerm, pauli_decompose_dense
from odeq.problem import OdeProblem, build_problem

SEED = 20240611


def random_matrix(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Return a complex Gaussian matrix."""
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Return a random Hermitian matrix."""
    matrix = random_matrix(rng, dim)
    return (matrix + matrix.conj().T) / 2


def random_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Return a random unit vector."""
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def random_pauli_sum(
    rng: np.random.Generator, n: int, terms: int, hermitian: bool = False
) -> PauliSum:
    """Return a sum of random strings with random coefficients."""
    out = []
    for _ in range(terms):
        axes = "".join(rng.choice(list("IXYZ"), size=n))
        coeff = complex(rng.standard_normal())
        if not hermitian:
            coeff += 1j * rng.standard_normal()
        out.append(PauliTerm(coeff, PauliString(axes)))
    return PauliSum(n, tuple(out))


def random_problem(
    rng: np.random.Generator,
    n: int,
    jumps: int = 1,
    final_time: float = 1.0,
    h_scale: float = 1.0,
    jump_scale: float = 0.5,
) -> OdeProblem:
    """Return a random dissipative instance with unit psi0.

    H has spectral norm h_scale and every jump has spectral norm jump_scale.
    """
    dim = 1 << n
    hermitian = random_hermitian(rng, dim)
    hermitian *= h_scale / np.linalg.norm(hermitian, 2)
    hamiltonian = pauli_decompose_dense(hermitian, n).real_part()
    ops = []
    for _ in range(jumps):
        matrix = random_matrix(rng, dim)
        matrix *= jump_scale / np.linalg.norm(matrix, 2)
        ops.append(pauli_decompose_dense(matrix, n))
    return build_problem(
        hamiltonian, ops, random_state(rng, dim), final_time, label=f"random n={n}"
    )


def decay_problem(final_time: float = 1.0) -> OdeProblem:
    """Return d psi/dt = -psi on one qubit (H = 0, L = I)."""
    return build_problem(
        PauliSum.zero(1), [PauliSum.identity(1)], np.array([1.0, 0.0]), final_time
    )


def damping_problem(rate: float = 1.0, final_time: float = 1.0) -> OdeProblem:
    """Return a driven qubit with L = sqrt(rate) |0><1|, starting in |1>."""
    lowering = PauliSum.from_dict(1, {"X": 0.5, "Y": 0.5j}) * math.sqrt(rate)
    return build_problem(
        PauliSum.from_dict(1, {"X": 0.5}),
        [lowering],
        np.array([0.0, 1.0]),
        final_time,
    )


def hn_params(
    sites: int = 4,
    gamma: float = 0.5,
    coupling: float = 1.0,
    v0: float = 0.5,
    final_time: float = 1.0,
) -> HNParams:
    """Return chain parameters with a nearest-neighbour interaction."""
    return HNParams(
        sites=sites,
        J_coupling=coupling,
        gamma=gamma,
        V=interaction_matrix(sites, v0),
        T=final_time,
    )
