"""
W2Checks - Configuration Settings

Supports two modes:
  - Dev mode:  Reads .env from the working directory, writes runs locally
  - Installed:  Reads ~/.config/w2checks/config.env
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load config: installed path first, then fall back to local .env
_INSTALLED_CONFIG = Path.home() / ".config" / "w2checks" / "config.env"
if _INSTALLED_CONFIG.exists():
    load_dotenv(_INSTALLED_CONFIG)
else:
    load_dotenv()  # loads .env from cwd


class Config:
    """Application configuration and numerical defaults"""

    # Base paths
    BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    OUTPUT_DIR = os.getenv("W2C_OUTPUT_DIR", os.path.join(os.getcwd(), "runs"))
    ACCEPTANCE_DIR = os.path.join(BASE_DIR, "experiment-configs", "acceptance")

    # Runner
    MAX_CONCURRENT_RUNS = int(os.getenv("W2C_MAX_CONCURRENT_RUNS", "3"))
    LOG_LEVEL = os.getenv("W2C_LOG_LEVEL", "INFO").upper()
    PRNG_NAME = "numpy.random.PCG64"

    # Measures
    MERGE_DECIMALS = 12              # atoms merge when equal after rounding to 1e-12
    RENORMALIZE_WINDOW = 1e-9

    # Transport
    PLAN_MARGINAL_ATOL = 1e-9
    SUPPORT_MASS_EPS = 1e-12
    DUAL_FEASIBILITY_ATOL = 1e-9
    SLACKNESS_ATOL = 1e-7
    DUALITY_GAP_RTOL = 1e-7
    CYCLE_SUM_ATOL = 1e-9
    MAX_CYCLE_DEFAULT = 5
    EMD_MAX_ITER = 1_000_000

    # Geodesics and functionals
    S_GRID_DEFAULT = (0.0, 0.25, 0.5, 0.75, 1.0)
    CONSTANT_SPEED_RTOL = 1e-7
    CONVEXITY_ATOL = 1e-9
    GENERALIZED_CONVEXITY_ATOL = 1e-7

    # Convergence diagnostics
    CONVERGENCE_TOL = 1e-3
    MOMENT_CAP = 1e6
    OPIAL_ATOL = 1e-7
    TEST_FAMILY_SIZE = 20
    TEST_FAMILY_RADIUS = 100.0
    TEST_FAMILY_SEED = 0

    # Schemes
    LAGRANGIAN_EPSILON = 1e-6
    EULERIAN_EPSILON = 1e-4
    FW_GAP = 1e-6
    FW_MAX_ITER = 10_000
    MONOTONE_ATOL = 1e-7
    CHARACTERISTIC_TIME = float(os.getenv("W2C_CHARACTERISTIC_TIME", "1.0"))
    ODE_RTOL = 1e-10
    ODE_ATOL = 1e-12
    ASYMPTOTIC_REGULARITY_TOL = 1e-3
    FIXED_POINT_TOL = 1e-4
    NONEXPANSIVE_ATOL = 1e-9
    NONEXPANSIVE_SAMPLES = 8
