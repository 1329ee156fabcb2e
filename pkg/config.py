"""
config.py — Environment loading for the sim2real pipeline.
Process-level settings only; experiment parameters live in experiment_config.py.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

VERSION: str = "1.0.0"

# ── Runtime ──────────────────────────────────────────────────────────────────
# Fixed thread count is part of the reproducibility contract.
THREADS: int = int(os.getenv("SIM2REAL_THREADS", "1"))
WORKERS: int = int(os.getenv("SIM2REAL_WORKERS", "1"))
PRECISION: str = os.getenv("SIM2REAL_PRECISION", "float32")

# ── Logging ──────────────────────────────────────────────────────────────────
LOG_LEVEL: str = os.getenv("SIM2REAL_LOG_LEVEL", "INFO").upper()
LOG_FORMAT: str = "%(asctime)s %(name)s %(levelname)s %(message)s"

# ── Outputs ──────────────────────────────────────────────────────────────────
OUTPUT_ROOT: str = os.getenv("SIM2REAL_OUTPUT_ROOT", "./experiments")
EXAMPLE_CONFIG: str = os.getenv(
    "SIM2REAL_EXAMPLE_CONFIG",
    str(Path(__file__).parent / "configs" / "example.json"),
)

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def apply_thread_env() -> None:
    """Pin BLAS/OpenMP pools to THREADS. Must run before numpy is imported."""
    for var in _THREAD_VARS:
        os.environ.setdefault(var, str(THREADS))


def validate() -> list[str]:
    problems = []
    if THREADS < 1:
        problems.append(f"SIM2REAL_THREADS must be >= 1 (got {THREADS})")
    if WORKERS < 1:
        problems.append(f"SIM2REAL_WORKERS must be >= 1 (got {WORKERS})")
    if PRECISION not in ("float32", "float64"):
        problems.append(f"SIM2REAL_PRECISION must be float32 or float64 (got {PRECISION!r})")
    if LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        problems.append(f"SIM2REAL_LOG_LEVEL is not a logging level: {LOG_LEVEL!r}")
    return problems


def print_config_summary():
    print(f"  Version:         {VERSION}")
    print(f"  Threads:         {THREADS}")
    print(f"  Workers:         {WORKERS}")
    print(f"  Precision:       {PRECISION}")
    print(f"  Log level:       {LOG_LEVEL}")
    print(f"  Output root:     {OUTPUT_ROOT}")
