"""Const for odeq."""

import logging

DEFAULT_DENSE_CAP = 12
ENV_DENSE_CAP = "ODEQ_DENSE_CAP"

DROP_TOLERANCE = 1e-14
PSD_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-12
UNDERFLOW_LIMIT = 1e-300

DEFAULT_GRID_POINTS = 64
MAX_GRID_POINTS = 4096
SUP_GRID_TOLERANCE = 0.01

EXPM_CHECK_TOLERANCE = 1e-10
RK4_TOLERANCE = 1e-8
RK4_MIN_STEPS = 16
RK4_MAX_DOUBLINGS = 12

PAULI_AXES = "IXYZ"

METHOD_PAULI = "pauli"
METHOD_DENSE = "dense"
METHODS = [METHOD_PAULI, METHOD_DENSE]

SPLITTING_FIRST = "first"
SPLITTING_SYMMETRIC = "symmetric"
SPLITTINGS = [SPLITTING_FIRST, SPLITTING_SYMMETRIC]

OP_ORDER = "H-first then G1..GJ"

BRANCH_COMMUTATOR = "commutator"
BRANCH_DISSIPATOR = "dissipator"
BRANCH_FLOOR = "floor"

PSI0_BASIS = "basis"
PSI0_UNIFORM = "uniform"
PSI0_AMPLITUDES = "amplitudes"
PSI0_KINDS = [PSI0_BASIS, PSI0_UNIFORM, PSI0_AMPLITUDES]

CONF_N = "n"
CONF_H = "H"
CONF_JUMPS = "jumps"
CONF_PSI0 = "psi0"
CONF_KIND = "kind"
CONF_DATA = "data"
CONF_T = "T"

CONF_SITES = "sites"
CONF_J = "J"
CONF_GAMMA = "gamma"
CONF_V0 = "V0"
CONF_V_MATRIX = "V_matrix"
CONF_EPSILON = "epsilon"
CONF_R = "R"
CONF_SHOTS = "shots"
CONF_SEED = "seed"

CONF_COMMAND = "command"
CONF_PROBLEM = "problem"
CONF_HN = "hn"
CONF_MATRIX_FILE = "matrix_file"
CONF_METHOD = "method"
CONF_SPLITTING = "splitting"
CONF_R_VALUES = "R_values"
CONF_OBSERVABLES = "observables"
CONF_SAMPLES = "samples"
CONF_THREADS = "threads"
CONF_GRID_POINTS = "grid_points"
CONF_FRAMES = "frames"
CONF_MODE = "mode"

COMMAND_CONVERGENCE = "convergence"
COMMAND_SUCCESS_PROB = "success-prob"
COMMAND_HN = "hn"
COMMAND_TRAJECTORIES = "trajectories"
COMMAND_LINDBLAD = "lindblad"
COMMAND_BOUNDS = "bounds"
COMMAND_VERIFY = "verify"

MODE_POSTSELECT = "postselect"
MODE_TRAJECTORIES = "trajectories"
MODES = [MODE_POSTSELECT, MODE_TRAJECTORIES]

DEFAULT_R_VALUES = [8, 16, 32, 64, 128, 256]
DEFAULT_SHOTS = 1000
DEFAULT_SEED = 0
DEFAULT_THREADS = 1
DEFAULT_FRAMES = 11
DEFAULT_SAMPLES = 200

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_NO_SURVIVORS = 4

_LOGGER = logging.getLogger(__package__)
