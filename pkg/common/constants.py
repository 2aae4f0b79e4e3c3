"""
Common constants and enumerations for STEADY.
Centralizes tolerances, optimizer defaults, file names and message templates.
"""
from dataclasses import dataclass
from enum import Enum


# =============================================================================
# VERSION AND METADATA
# =============================================================================
APP_NAME = "STEADY"
APP_VERSION = "1.0.0"
APP_DESCRIPTION = "Stochastic estimation of Hamiltonian and Lindbladian parameters"
APP_TAGLINE = "Random pulses, shot noise, SPAM and Fisher-optimal designs on mock hardware"
CONFIG_VERSION = 1
LOGGER_NAME = "Steady"


# =============================================================================
# ENUMERATIONS
# =============================================================================
class Scenario(Enum):
    """Scenario selected on the command line"""
    GENERATE = "generate"
    FIT = "fit"
    VALIDATE = "validate"
    DESIGN = "design"
    SCAN_PS = "scan_ps"
    SCAN_SPAM = "scan_spam"
    LINDBLAD_COMPARE = "lindblad_compare"
    DESIGN_COMPARE = "design_compare"
    LSQ_DEMO = "lsq_demo"
    DISTANCE_COMPARE = "distance_compare"
    INCOMPLETE_COMPARE = "incomplete_compare"
    CRB_CHECK = "crb_check"


class ModelKind(Enum):
    """Parametrization of the model Hamiltonian"""
    LINEAR_MIX = "linear_mix"  # H = sum_k (alpha d + beta)_k A_k
    GENERAL = "general"        # H_ij = h_ij + sum_k sigma_ijk d_k
    LINDBLAD = "lindblad"      # Hamiltonian part plus collapse strengths


class DistanceKind(Enum):
    """Distance between measured and predicted populations"""
    MSE = "mse"
    MAE = "mae"
    CROSS_ENTROPY = "cross_entropy"
    BHATTACHARYYA = "bhattacharyya"


class IntegrationMethod(Enum):
    """Time stepper for the Lindblad equation"""
    EULER = "euler"
    RK4 = "rk4"


class AnnealSchedule(Enum):
    """How the L1 weight evolves during a fit"""
    COST_TRACKING = "cost_tracking"  # lambda0 * running cost, clipped below by the noise floor
    EXCESS = "excess"                # lambda0 * running cost in excess of the noise floor
    EXPONENTIAL = "exponential"      # lambda0 * decay**epoch
    NONE = "none"                    # no regularization


class InitKind(Enum):
    """Centre of the random starting point of a fit"""
    ZERO = "zero"        # every parameter around 0
    NOMINAL = "nominal"  # linear-mix alpha around the identity, one drive per operator


# =============================================================================
# NUMERICAL TOLERANCES
# =============================================================================
@dataclass(frozen=True)
class Tolerances:
    """Default tolerances; callers pass a tightened copy via dataclasses.replace."""
    hermitian: float = 1e-12        # |H - H^dagger| entrywise
    degenerate: float = 1e-10       # eigenvalue gap that switches to the limit formula
    norm: float = 1e-10             # state norm, eigenvector unitarity
    reconstruction: float = 1e-9    # relative Frobenius residual of V diag V^dagger
    prob_clip: float = 1e-12        # clamp before log / division
    psd_warning: float = 1e-7       # smallest density-matrix eigenvalue tolerated silently
    trace: float = 1e-8             # Lindblad trace drift reported as a warning
    pinv_cutoff: float = 1e-10      # relative eigenvalue cutoff for the Fisher pseudo-inverse
    null_overlap: float = 1e-6      # null-space weight that flags a parameter as unbounded
    design_ridge: float = 1e-8      # ridge inside log det of the design objective


TOLERANCES = Tolerances()


# =============================================================================
# OPTIMIZER DEFAULTS
# =============================================================================
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
DEFAULT_LR0 = 0.01
DEFAULT_LR_DECAY = 0.5
DEFAULT_PLATEAU_PATIENCE = 50      # epochs compared by the plateau rule
DEFAULT_PLATEAU_THRESHOLD = 0.01   # relative improvement below which lr decays
DEFAULT_MIN_LR = 1e-6
DEFAULT_LAMBDA0 = 0.1
DEFAULT_LAMBDA_DECAY = 0.99        # per-epoch factor of the exponential schedule
DEFAULT_COST_EMA = 0.9             # smoothing of the running batch cost
DEFAULT_BATCH_SIZE = 64
DEFAULT_MAX_EPOCHS = 2000
DEFAULT_TOL = 1e-16
DEFAULT_INIT_SCALE = 0.1
DEFAULT_FIT_SEED = 0
DEFAULT_RESTARTS = 1


# =============================================================================
# SIMULATION DEFAULTS
# =============================================================================
DEFAULT_QUBITS = 3
MAX_QUBITS = 4
DEFAULT_SYSTEM_SEED = 2021
TRUTH_RANGE = (0.5, 1.5)            # kappa, epsilon, eta drawn uniformly here
DEFAULT_DURATION = 1.0
DEFAULT_PULSES = 512
DEFAULT_SHOTS = 64
EXACT_SHOTS = 0                     # shots value that encodes exact probabilities
DEFAULT_VALIDATION_PULSES = 256
DEFAULT_VALIDATION_DURATION = 1.0
DEFAULT_VALIDATION_SEED = 7
LINDBLAD_MIN_STEPS = 100
LINDBLAD_STEPS_PER_TIME = 100
GAUGE_SCAN_POINTS = 721
DEFAULT_DESIGN_STEPS = 30
DEFAULT_DESIGN_LR = 0.05
DEFAULT_DESIGN_POWER = 1.0
DESIGN_FD_STEP = 1e-5
DEFAULT_LSQ_TRIALS = 1000
DEFAULT_LSQ_P = 0.25
DEFAULT_CRB_TRIALS = 20


# =============================================================================
# CONCURRENCY AND BUDGET
# =============================================================================
ENV_THREADS = "STEADY_THREADS"
DEFAULT_THREADS = 4
MIN_THREADS = 1
MAX_THREADS = 64
DESK_BUDGET_CAP = 2 ** 12           # largest P or S accepted without --full-scale


# =============================================================================
# EXIT CODES
# =============================================================================
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_INTERRUPTED = 130


# =============================================================================
# FILE PATTERNS
# =============================================================================
LOG_DIRECTORY = "logs"
RUNS_DIRECTORY = "runs"
MANIFEST_FILE = "manifest.json"
DATASET_FILE = "dataset.json"
REPORT_FILE = "fit_report.json"
VALIDATION_FILE = "validation.json"
DESIGN_FILE = "design.json"


# =============================================================================
# CSV SCHEMAS
# =============================================================================
CSV_COLUMNS = {
    Scenario.SCAN_PS: ["P", "S", "C_min", "V_min", "floor", "epochs"],
    Scenario.SCAN_SPAM: ["s", "T", "P", "S", "C_min", "V_min"],
    Scenario.LINDBLAD_COMPARE: ["gamma", "model_kind", "C_min", "V_min"],
    Scenario.DESIGN_COMPARE: ["S", "pulse_kind", "log_det", "C_min", "V_min"],
    Scenario.LSQ_DEMO: ["P", "S", "p", "trials", "mean_v_opt", "mean_v_slope", "mean_v_full", "predicted"],
    Scenario.DISTANCE_COMPARE: ["distance", "C_min", "V_mse", "V_bhattacharyya", "V_cross_entropy_surplus"],
    Scenario.INCOMPLETE_COMPARE: ["omega_coupling", "model_kind", "C_min", "V_min"],
    Scenario.CRB_CHECK: ["parameter", "bound", "variance", "ratio"],
}


# =============================================================================
# ANSI COLOR CODES
# =============================================================================
class Color:
    """ANSI color codes for terminal output"""
    RESET = "\033[0m"
    RED = "\033[91m"
    GREEN = "\033[92m"
    YELLOW = "\033[93m"
    CYAN = "\033[96m"
    GRAY = "\033[90m"
    BOLD = "\033[1m"


# =============================================================================
# ERROR MESSAGES
# =============================================================================
class ErrorMessage:
    """Standard error messages"""
    CONFIG_NOT_FOUND = "Configuration file not found: {path}"
    CONFIG_PARSE_FAILED = "Configuration file is not valid JSON ({path}): {error}"
    CONFIG_VERSION = "Unsupported config version {found}; expected {expected}"
    CONFIG_UNKNOWN_KEY = "Unknown configuration field: {key}"
    CONFIG_TYPE = "Field {key} must be {expected}, got {found!r}"
    SCENARIO_MISMATCH = "Config declares scenario '{declared}' but '{requested}' was requested"
    GRID_EMPTY = "Grid list '{name}' must not be empty"
    VALUE_RANGE = "{name} must be in {bounds}, got {value}"
    THREAD_COUNT_INVALID = "Thread count must be between {min} and {max}"
    SPAM_RANGE = "SPAM flip probability must satisfy 0 <= s < 1/Q = {limit:.6g}, got {s}"
    DIMENSION_MISMATCH = "{what}: expected {expected}, got {found}"
    NOT_SYMMETRIC = "{what} is not {kind} within {tol:g} (max deviation {dev:.3g})"
    EIGENSOLVER_FAILED = "Hermitian eigensolver failed ({error}); {diagnostics}"
    INTEGRATION_FAILED = "Lindblad integration produced non-finite state at step {step} (dt={dt:.3g})"
    FIT_DIVERGED = "Non-finite cost at epoch {epoch} (batch {batch})"
    WRONG_MODEL_KIND = "{operation} requires a {expected} model, got {found}"
    INVALID_PROBABILITIES = "Probability vector invalid: {reason}"
    ARTIFACT_WRITE_FAILED = "Failed to write {path}: {error}"
    DATASET_SCHEMA = "Dataset file {path} does not match the schema: {reason}"
    OUTPUT_NOT_WRITABLE = "Output directory is not writable: {path}"
    INPUT_UNREADABLE = "Input file cannot be read: {path}"


# =============================================================================
# SUCCESS MESSAGES
# =============================================================================
class SuccessMessage:
    """Standard success messages"""
    CONFIG_LOADED = "Configuration loaded from {file}"
    SCENARIO_COMPLETE = "Scenario {scenario} finished in {seconds:.1f}s"
    ARTIFACT_WRITTEN = "Wrote {path}"
    FIT_COMPLETE = "Fit finished after {epochs} epochs (cost {cost:.3e})"
