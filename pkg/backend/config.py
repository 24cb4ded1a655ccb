# Configuration file for the application
import os
from dotenv import load_dotenv

load_dotenv()

# Application Configuration
DEBUG = os.getenv("DEBUG", "False").lower() == "true"
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Worker pool for independent simulation tasks
MAX_WORKERS = int(os.getenv("MAX_WORKERS", "4"))

# Numerical tolerances
PRUNE_TOLERANCE = 1e-14
NORM_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-10
DENSITY_GUARD = 1e-8

# Size guards
MAX_OPERATOR_QUBITS = 12
MAX_DIAGONALIZE_DIM = 4096

# Memoized Hamiltonians and eigensystems per service
CACHE_SIZE = int(os.getenv("CACHE_SIZE", "32"))

# Model defaults (2x2 periodic lattice, two flavors)
N_TARGET_QUBITS = 4
DEFAULT_T = 1.0
DEFAULT_U = 2.0
DEFAULT_V = 3.0
DEFAULT_CHARGE_A = 1.0
DEFAULT_CHARGE_B = 1.0

# Noise defaults
DEFAULT_P1 = 0.001
DEFAULT_P2 = 0.01
DEFAULT_READOUT_FLIP = 0.02

# Mitigation defaults
DEFAULT_SCALES = (1, 3, 5)
DEFAULT_EXTRAPOLANT = "linear"
DEFAULT_CALIBRATION_SHOTS = 100_000

# Estimation defaults
DEFAULT_SHOTS = 10_000
DEFAULT_RELATIVE_ERROR = 0.1
DEFAULT_SEED = 1234

# Output
CSV_FLOAT_FORMAT = "%.12g"
