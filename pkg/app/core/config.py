from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Base directory of the project (parent of 'app')
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Data Directories
DATA_DIR = BASE_DIR / "data"
GRAPHS_DIR = DATA_DIR / "graphs"
CONFIGS_DIR = DATA_DIR / "configs"

# File Paths
# The dolphin social network is not redistributed; drop the Konect/Newman
# edge list here to run the dolphin experiments on the real graph.
DOLPHINS_FILE = GRAPHS_DIR / "dolphins.edges"
TWO_COMMUNITIES_FILE = GRAPHS_DIR / "two_communities.edges"


class Settings(BaseSettings):
    """
    Runtime knobs, read from FIEDWALK_* environment variables or a .env file.

    Example:
        FIEDWALK_LOG_LEVEL=DEBUG FIEDWALK_JOBS=4 python -m app simulate --config cfg.json
    """

    model_config = SettingsConfigDict(env_prefix="FIEDWALK_", env_file=".env", extra="ignore")

    log_level: str = Field(default="INFO", description="Root log level")
    log_json: bool = Field(default=False, description="Render log events as JSON lines")
    jobs: int = Field(default=1, ge=1, description="Default worker processes for multi-run experiments")

    # Linear algebra caps
    dense_limit: int = Field(default=4096, ge=1, description="Largest N for dense matrix views")
    brute_force_limit: int = Field(default=16, ge=2, description="Largest N for exhaustive RCut search")
    jacobi_max_sweeps: int = Field(default=100, ge=1)

    # Simulation
    removal_attempts: int = Field(default=10_000, ge=1, description="Rejection cap for removable node sets")
    resync_interval: int = Field(default=1_000_000, ge=1, description="Events between rate-table resyncs")
    resync_tolerance: float = Field(default=1e-9, gt=0)

    # ODE
    ode_dt_max: float = Field(default=0.01, gt=0)
    ode_max_records: int = Field(default=20_000, ge=2, description="Upper bound on stored ODE samples")


@lru_cache
def get_settings() -> Settings:
    return Settings()
