from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load .env from project root (parent of carpetq/)
_PROJECT_ROOT = Path(__file__).resolve().parent.parent


class CarpetSettings(BaseSettings):
    """Runtime knobs shared by the services and the CLI.

    Every field can be set from the environment as ``CARPETQ_<NAME>`` or from
    a ``.env`` file at the project root; CLI flags win over both.
    """

    model_config = SettingsConfigDict(
        env_prefix="CARPETQ_",
        env_file=str(_PROJECT_ROOT / ".env"),
        extra="ignore",
    )

    budget: int = Field(50_000_000, ge=1, description="node cap for tree enumeration")
    tol: float = Field(1e-9, gt=0, description="condition flag tolerance")
    solver_tol: float = Field(1e-13, gt=0)
    seed: int = 0
    restarts: int = Field(8, ge=1)
    lloyd_tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(200, ge=1)
    workers: int = Field(1, ge=1)
    separation_gap: int = Field(1, ge=1)
    grid_res: int = Field(64, ge=1, le=64)
    diff_step: float = Field(1e-4, gt=0)
    log_level: str = "INFO"


@lru_cache(maxsize=1)
def get_settings() -> CarpetSettings:
    return CarpetSettings()
