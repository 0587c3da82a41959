import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Project settings
PROJECT_NAME = "mmv-anomaly"
CODE_VERSION = "1.0.0"

# Random number generation - bit generator and normal transform are recorded in
# every metadata file so seeds can be replayed on another machine
RNG_ALGORITHM = "numpy.PCG64+ziggurat-normal"
DEFAULT_SEED = int(os.getenv("MMV_SEED", "0"))

# Worker processes for phase grids
DEFAULT_THREADS = int(os.getenv("MMV_THREADS", "1"))

# Prevalent / anomalous distributions of the reference experiments,
# as (mean, variance) pairs
PRESETS: Dict[str, Dict[str, Any]] = {
    "jsm2r": {"model": "jsm2r", "prevalent": (0.0, 1.0), "anomalous": (7.0, 1.0)},
    "jsm3r": {"model": "jsm3r", "prevalent": (7.0, 1.0), "anomalous": (0.0, 10.0)},
    "jsm3r-same-mean": {
        "model": "jsm3r",
        "prevalent": (7.0, 1.0),
        "anomalous": (7.0, 10.0),
    },
}

# Variance-ratio sweep default
DEFAULT_VARIANCE_RATIOS = (2.0, 5.0, 10.0)

# Adaptive trial sizing
JEFFREYS_CONFIDENCE = 0.95
JEFFREYS_TARGET_WIDTH = 0.1
MIN_TRIALS = 20
MAX_TRIALS = 10_000

# Detector defaults
ACIE_ITERATIONS = 5
LASSO_LAMBDA_FRACTION = 0.1  # lambda = fraction * ||phi^T y||_inf
LASSO_TOL = 1e-6
LASSO_MAX_ITERS = 5000

# Linear algebra tolerances
SPECTRAL_SAFETY_FACTOR = 1.01
SPECTRAL_RTOL = 1e-4
SPECTRAL_MAX_ITERS = 1000
MGS_DROP_TOLERANCE = 1e-10
RANK_TOLERANCE = 1e-10

# Results files
RESULTS_HEADER = (
    "algorithm",
    "model",
    "N",
    "K",
    "M",
    "T",
    "successes",
    "trials",
    "rate",
    "ci_low",
    "ci_high",
    "hit_max_trials",
    "seed",
)
HEATMAP_CAPTION = (
    "Success rate per (M, T) cell; each cell sampled until the "
    "{confidence:.0%} Jeffreys interval is narrower than {width}."
)

# File paths
OUTPUT_DIR = Path(os.getenv("MMV_OUTPUT_DIR", "results"))
MANIFEST_NAME = "manifest.json"

# Logging configuration
LOG_LEVEL = os.getenv("MMV_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("MMV_LOG_FILE")


def build_logging_config(
    level: str = LOG_LEVEL,
    log_file: Optional[str] = LOG_FILE,
) -> Dict[str, Any]:
    """Build a dictConfig dictionary; the file handler is added only on request."""
    handlers: Dict[str, Any] = {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "default",
            "stream": "ext://sys.stderr",
        },
    }
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers["file"] = {
            "class": "logging.FileHandler",
            "filename": str(log_file),
            "formatter": "default",
        }

    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "default": {
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
            },
        },
        "handlers": handlers,
        "root": {"handlers": list(handlers), "level": level},
    }
