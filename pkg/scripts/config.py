"""
Central configuration for all scripts in the HoloV token pruning project.

This module provides the defaults shared across the pruning, cost model,
refetch and analysis scripts. Update values here rather than in the
individual scripts so that command-line runs and tests agree.
"""

import json
import logging
import os
from datetime import datetime
from pathlib import Path

PROJECT_ROOT = Path(__file__).parent.parent
LOG_DIR = PROJECT_ROOT / "logs"

# Pruning defaults
DEFAULT_TAU = 1.0
CROP_TOKEN_BUDGET = 1024
DEFAULT_GAMMA_FLOOR = 1e-12
DEFAULT_PARTITION_MODE = "grid_tiles"
DEFAULT_SEED = 0

# Cost model defaults (LLaVA-1.5-7B shape; a, b, c are modeling conventions)
DEFAULT_FLOPS_A = 2.0
DEFAULT_FLOPS_B = 4.0
DEFAULT_FLOPS_C = 6.0
DEFAULT_HIDDEN_SIZE = 4096
DEFAULT_FFN_SIZE = 11008
DEFAULT_LAYERS = 32

# Visual context refetching
ALPHA_MAX = 0.3
ALPHA_MIDPOINT = 0.05
ALPHA_STEEPNESS = 60.0
DEFAULT_UNCERTAINTY_THRESHOLD = 0.5

# Analysis lab
DEFAULT_TRIALS = 500
DEFAULT_LAB_METHODS = ("holov", "random", "attn-topk")
LAB_RETAIN_COUNT = 64
LAB_PLANTED_COUNT = 8

# Greedy allocation objective: log(eps + prefix) keeps empty crops finite
ALLOCATION_LOG_EPSILON = 1e-9

# Environment
THREADS_ENV = "HOLOV_THREADS"


def setup_logging(log_name, debug=False):
    """
    Setup logging with both file and console output.

    A daily log file is written to logs/<log_name>_YYYYMMDD.log; console
    output goes to stderr so it never mixes with JSON printed on stdout.
    """
    LOG_DIR.mkdir(exist_ok=True)
    log_file = LOG_DIR / f"{log_name}_{datetime.now().strftime('%Y%m%d')}.log"

    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ]
    )
    return logging.getLogger(log_name)


def load_json_config(path, required_keys=()):
    """
    Load a JSON configuration file and check that required keys exist.

    Raises:
        FileNotFoundError: the file does not exist
        ValueError: invalid JSON, a non-object document, or missing keys
    """
    path = Path(path)
    try:
        with open(path, 'r') as f:
            config = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Configuration file not found: {path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in configuration file: {e}")

    if not isinstance(config, dict):
        raise ValueError(f"Configuration file {path} must contain a JSON object")

    missing_keys = [key for key in required_keys if key not in config]
    if missing_keys:
        raise ValueError(f"Missing required keys in {path}: {', '.join(missing_keys)}")

    return config


def get_max_workers(logger=None):
    """Worker thread cap from HOLOV_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        workers = int(raw)
    except ValueError:
        workers = 0
    if workers < 1:
        if logger:
            logger.warning(f"Ignoring invalid {THREADS_ENV}={raw!r}, using 1 worker")
        return 1
    return workers
