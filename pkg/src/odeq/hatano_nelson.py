"""Interacting Hatano-Nelson chain as a dissipative linear ODE.

Site i of the open chain is system qubit i; bond j couples sites j and j + 1.
"""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
import math
from typing import Any

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
import voluptuous as vol

from .const import (
    _LOGGER,
    CONF_DATA,
    CONF_EPSILON,
    CONF_GAMMA,
    CONF_J,
    CONF_KIND,
    CONF_PSI0,
    CONF_R,
    CONF_SEED,
    CONF_SHOTS,
    CONF_SITES,
    CONF_T,
    CONF_V0,
    CONF_V_MATRIX,
    PSI0_BASIS,
)
from .exceptions import ValidationError
from .pauli import PauliString, PauliSum, PauliTerm, to_dense
from .problem import (
    PSI0_SCHEMA,
    OdeProblem,
    build_dilation,
    build_problem,
    make_initial_state,
)
from .util import CheckReport, CheckResult, check_dense_capacity

FACTORIZATION_TOLERANCE = 1e-12
RECONSTRUCTION_TOLERANCE = 1e-10
SOLVER_GROUP = "solver"

HN_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_SITES): vol.All(int, vol.Range(min=2)),
        vol.Optional(CONF_J, default=1.0): vol.Coerce(float),
        vol.Required(CONF_GAMMA): vol.All(vol.Coerce(float), vol.Range(min=0)),
        vol.Exclusive(CONF_V0, "interaction"): vol.Coerce(float),
        vol.Exclusive(CONF_V_MATRIX, "interaction"): [[vol.Coerce(float)]],
        vol.Optional(CONF_PSI0): PSI0_SCHEMA,
        vol.Required(CONF_T): vol.All(vol.Coerce(float), vol.Range(min=0)),
        vol.Exclusive(CONF_EPSILON, SOLVER_GROUP): vol.All(
            vol.Coerce(float),
            vol.Range(min=0, max=1, min_included=False, max_included=False),
        ),
        vol.Exclusive(CONF_R, SOLVER_GROUP): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_SHOTS): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_SEED): vol.All(int, vol.Range(min=0)),
    }
)


def neel_state(sites: int) -> dict[str, Any]:
    """Return the half-filled alternating basis state 1010..."""
    return {CONF_KIND: PSI0_BASIS, CONF_DATA: "10" * (sites // 2) + "1" * (sites % 2)}


@dataclass(frozen=True, eq=False)
class HNParams:
    """Parameters of the interacting chain."""

    sites: int
    J_coupling: float
    gamma: float
    V: np.ndarray = field(repr=False)
    psi0: Mapping[str, Any] = field(default_factory=dict)
    T: float = 1.0

    def __post_init__(self) -> None:
        """Validate the parameters."""
        if self.sites < 2:
            raise ValidationError(f"The chain needs at least 2 sites, got {self.sites}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")
        matrix = np.asarray(self.V, dtype=float)
        if matrix.shape != (self.sites, self.sites):
            raise ValidationError(
                f"Interaction matrix must be {self.sites}x{self.sites}, got {matrix.shape}"
            )
        if not np.array_equal(matrix, np.triu(matrix, 1)):
            raise ValidationError("Interaction matrix must be strictly upper triangular")
        object.__setattr__(self, "V", matrix)
        if not self.psi0:
            object.__setattr__(self, "psi0", neel_state(self.sites))

    @property
    def bonds(self) -> range:
        """Return the bond indices 0..sites-2."""
        return range(self.sites - 1)

    @property
    def shift(self) -> float:
        """Return (sites - 1) gamma, the identity removed to make A dissipative."""
        return (self.sites - 1) * self.gamma


def interaction_matrix(
    sites: int, v0: float | None = None, v_matrix: Sequence[Sequence[float]] | None = None
) -> np.ndarray:
    """Return V_ij from a nearest-neighbour V0 or an explicit matrix."""
    if v0 is not None and v_matrix is not None:
        raise ValidationError("Give either V0 or V_matrix, not both")
    if v_matrix is not None:
        return np.asarray(v_matrix, dtype=float)
    matrix = np.zeros((sites, sites))
    for i in range(sites - 1):
        matrix[i, i + 1] = v0 or 0.0
    return matrix


def hn_params_from_config(config: Mapping[str, Any]) -> HNParams:
    """Return parameters from an HN experiment config."""
    try:
        data = HN_SCHEMA(dict(config))
    except vol.Invalid as ex:
        raise ValidationError(f"Invalid Hatano-Nelson config: {ex}") from ex
    sites = data[CONF_SITES]
    return HNParams(
        sites=sites,
        J_coupling=data[CONF_J],
        gamma=data[CONF_GAMMA],
        V=interaction_matrix(sites, data.get(CONF_V0), data.get(CONF_V_MATRIX)),
        psi0=data.get(CONF_PSI0) or neel_state(sites),
        T=data[CONF_T],
    )


def _pair(n: int, site: int, first: str, second: str, coeff: complex) -> PauliTerm:
    return PauliTerm(coeff, PauliString.from_sites(n, {site: first, site + 1: second}))


def hopping_term(n: int, bond: int, coupling: float) -> PauliSum:
    """Return (J/2)(Y_j Y_j+1 + X_j X_j+1)."""
    return PauliSum(
        n,
        (
            _pair(n, bond, "Y", "Y", coupling / 2),
            _pair(n, bond, "X", "X", coupling / 2),
        ),
    )


def asymmetric_term(n: int, bond: int, gamma: float) -> PauliSum:
    """Return the anti-Hermitian hopping -(i gamma / 2)(Y_j X_j+1 - X_j Y_j+1)."""
    return PauliSum(
        n,
        (
            _pair(n, bond, "Y", "X", -0.5j * gamma),
            _pair(n, bond, "X", "Y", 0.5j * gamma),
        ),
    )


def site_density(n: int, site: int) -> PauliSum:
    """Return n_i = (I - Z_i) / 2."""
    return PauliSum.identity(n, 0.5) - PauliSum.single(n, {site: "Z"}, 0.5)


def density_observables(n: int) -> dict[str, PauliSum]:
    """Return {"n_i": n_i} for every site."""
    return {f"n_{site}": site_density(n, site) for site in range(n)}


def interaction_term(n: int, matrix: np.ndarray) -> PauliSum:
    """Return (1/4) sum_{i<j} V_ij (I - Z_i)(I - Z_j)."""
    total = PauliSum.zero(n)
    for i, j in zip(*np.nonzero(matrix)):
        total = total + float(matrix[i, j]) * (site_density(n, i) * site_density(n, j))
    return total


def hn_jump_operator(n: int, bond: int, gamma: float) -> tuple[PauliSum, PauliSum]:
    """Return (L_j, K_j) with K_j = i H_A,j + gamma I and L_j = sqrt(K_j)."""
    if not (math.isfinite(gamma) and gamma >= 0):
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    if not 0 <= bond < n - 1:
        raise ValidationError(f"Bond {bond} outside a chain of {n} sites")
    identity = PauliString.identity(n)
    k_op = PauliSum(
        n,
        (
            _pair(n, bond, "Y", "X", gamma / 2),
            _pair(n, bond, "X", "Y", -gamma / 2),
            PauliTerm(gamma, identity),
        ),
    )
    scale = math.sqrt(gamma) / 2
    root_half = 1 / math.sqrt(2)
    l_op = PauliSum(
        n,
        (
            _pair(n, bond, "Z", "Z", scale * (1 - root_half)),
            _pair(n, bond, "Y", "X", scale * root_half),
            _pair(n, bond, "X", "Y", -scale * root_half),
            PauliTerm(scale * (1 + root_half), identity),
        ),
    )
    return l_op, k_op


def hn_hamiltonian(params: HNParams) -> PauliSum:
    """Return the Hermitian part H = sum_j H_H,j + V."""
    n = params.sites
    total = interaction_term(n, params.V)
    for bond in params.bonds:
        total = total + hopping_term(n, bond, params.J_coupling)
    return total


def nonhermitian_hamiltonian(params: HNParams) -> PauliSum:
    """Return H_NH = sum_j (H_H,j + H_A,j) + V with complex coefficients."""
    total = hn_hamiltonian(params)
    for bond in params.bonds:
        total = total + asymmetric_term(params.sites, bond, params.gamma)
    return total


def build_hn_problem(params: HNParams) -> OdeProblem:
    """Return the problem with A = -i H_NH - (sites - 1) gamma I."""
    n = params.sites
    jumps = [hn_jump_operator(n, bond, params.gamma)[0] for bond in params.bonds]
    problem = build_problem(
        hn_hamiltonian(params),
        jumps,
        make_initial_state(n, params.psi0),
        params.T,
        shift=params.shift,
        label=f"hatano-nelson sites={n} J={params.J_coupling:g} gamma={params.gamma:g}",
    )
    _LOGGER.debug(
        "Built Hatano-Nelson problem with %s H terms and shift %.6g",
        len(problem.hamiltonian),
        params.shift,
    )
    return problem


def density_profile(states: np.ndarray, n: int) -> np.ndarray:
    """Return normalized site densities <n_i> for every row of system states."""
    rows = np.atleast_2d(states)
    weights = np.abs(rows) ** 2
    weights = weights / weights.sum(axis=1, keepdims=True)
    index = np.arange(1 << n)
    occupations = np.stack([(index >> (n - 1 - site)) & 1 for site in range(n)], axis=1)
    return weights @ occupations


def skin_profile(params: HNParams, times: Sequence[float]) -> np.ndarray:
    """Return site densities of e^{-i H_NH t} psi0 at increasing times t."""
    check_dense_capacity(params.sites)
    generator = -1j * to_dense(nonhermitian_hamiltonian(params))
    state = make_initial_state(params.sites, params.psi0)
    rows = []
    previous = 0.0
    for t in times:
        if t < previous:
            raise ValidationError("Profile times must be increasing and >= 0")
        if t > previous:
            state = scipy.sparse.linalg.expm_multiply(generator * (t - previous), state)
        rows.append(state)
        previous = t
    return density_profile(np.array(rows), params.sites)


def verify_hn_factorization(
    params: HNParams,
    jumps: Sequence[PauliSum] | None = None,
    tolerance: float = FACTORIZATION_TOLERANCE,
) -> CheckReport:
    """Check L_j^2 = K_j, K_j >= 0, G_j = X_0 L_j and G_j locality for every bond.

    jumps overrides the closed-form L_j, e.g. to probe a corrupted operator.
    """
    n = params.sites
    checks = []
    for bond in params.bonds:
        closed_form, k_op = hn_jump_operator(n, bond, params.gamma)
        l_op = closed_form if jumps is None else jumps[bond]
        l_dense = to_dense(l_op)
        k_dense = to_dense(k_op)

        residual = float(np.linalg.norm(l_dense @ l_dense - k_dense))
        checks.append(
            CheckResult(f"bond {bond}: L^2 = K", residual <= tolerance, residual)
        )

        smallest = float(scipy.linalg.eigvalsh(k_dense)[0])
        checks.append(
            CheckResult(
                f"bond {bond}: K >= 0 with min eigenvalue 0",
                abs(smallest) <= tolerance,
                abs(smallest),
            )
        )

        dilation = build_dilation(l_op, bond)
        residual = float(np.linalg.norm(dilation.g_dense - to_dense(l_op.tensor_left("X"))))
        checks.append(
            CheckResult(f"bond {bond}: G = X_0 L", residual <= tolerance, residual)
        )

        locality = dilation.g_pauli.locality
        checks.append(
            CheckResult(
                f"bond {bond}: G locality",
                locality <= 3 and l_op.locality <= 2,
                float(locality),
                f"max weight {locality}",
            )
        )

    problem = build_hn_problem(params)
    expected = -1j * to_dense(nonhermitian_hamiltonian(params)) - params.shift * np.eye(
        problem.dim
    )
    residual = float(np.linalg.norm(problem.dense_coefficient - expected))
    checks.append(
        CheckResult(
            "A = -i H_NH - (sites - 1) gamma I",
            residual <= RECONSTRUCTION_TOLERANCE,
            residual,
        )
    )
    report = CheckReport(tuple(checks))
    if not report.passed:
        _LOGGER.warning(
            "Hatano-Nelson factorization failed: %s",
            ", ".join(c.name for c in report.failures),
        )
    return report
