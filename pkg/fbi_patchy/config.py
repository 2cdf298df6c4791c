# ## path: fbi_patchy/config.py
import os
from dotenv import load_dotenv

# Load environment variables from a .env file
load_dotenv()

class Settings:
    """Solver configuration settings."""
    THETA_MESH: int = int(os.getenv("FBI_THETA_MESH", 256))
    BVP_TOL: float = float(os.getenv("FBI_BVP_TOL", 1e-9))
    PERIODICITY_TOL: float = float(os.getenv("FBI_PERIODICITY_TOL", 1e-7))
    INTEGRATOR_TOL: float = float(os.getenv("FBI_INTEGRATOR_TOL", 1e-10))
    NEWTON_MAX_ITER: int = int(os.getenv("FBI_NEWTON_MAX_ITER", 25))
    SHOOTING_SEGMENTS: int = int(os.getenv("FBI_SHOOTING_SEGMENTS", 16))
    HYPERBOLICITY_TOL: float = float(os.getenv("FBI_HYPERBOLICITY_TOL", 1e-6))
    RATE_FLOOR: float = float(os.getenv("FBI_RATE_FLOOR", 0.1))
    RESIDUAL_STEP: float = float(os.getenv("FBI_RESIDUAL_STEP", 1e-4))
    SIM_TOL: float = float(os.getenv("FBI_SIM_TOL", 1e-9))
    GRID_WORKERS: int = int(os.getenv("FBI_GRID_WORKERS", 4))
    LOG_LEVEL: str = os.getenv("FBI_LOG_LEVEL", "INFO")

# Create a single settings instance to be imported by other modules
settings = Settings()
