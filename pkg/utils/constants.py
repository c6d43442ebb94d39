"""
Constants used throughout the PRISM system
"""

import os
from pathlib import Path

# Project root path
PROJECT_ROOT = Path(__file__).parent.parent

# Data paths (PRISM_OUTPUT_ROOT moves every generated artifact elsewhere)
DATA_DIR = Path(os.environ.get("PRISM_OUTPUT_ROOT", PROJECT_ROOT / "data"))
LOGS_DIR = DATA_DIR / "logs"
DATASETS_DIR = DATA_DIR / "datasets"
MODELS_DIR = DATA_DIR / "models"
REPORTS_DIR = DATA_DIR / "reports"

# Config paths
CONFIG_DIR = PROJECT_ROOT / "config"

TOOL_NAME = "PRISM"
SCHEMA_VERSION = 1

# Units
ANGSTROM_TO_BOHR = 1.8897259886
HARTREE_TO_MILLIHARTREE = 1000.0

# Geometry generation
MIN_SEPARATION_ANGSTROM = 0.5
MAX_REJECTIONS = 10**6

# Matching
EXACT_MATCHING_MAX_ATOMS = 12

# Pauli algebra
PAULI_PRUNE_THRESHOLD = 1e-12
DENSE_ORACLE_MAX_QUBITS = 16
STATEVECTOR_MAX_QUBITS = 20
QUBITS_PER_PAIR = 4

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# Colors for console output
class Colors:
    HEADER = '\033[95m'
    MAGENTA = '\033[95m'
    CYAN = '\033[96m'
    BLUE = '\033[94m'
    GREEN = '\033[92m'
    YELLOW = '\033[93m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'
    UNDERLINE = '\033[4m'


def ensure_directories():
    """Create all necessary directories if they don't exist"""
    directories = [DATA_DIR, LOGS_DIR, DATASETS_DIR, MODELS_DIR, REPORTS_DIR]

    for directory in directories:
        directory.mkdir(exist_ok=True, parents=True)
