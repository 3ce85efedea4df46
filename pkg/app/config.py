"""
Runtime limits read from the environment (.env supported)
"""
import os
from functools import lru_cache

from pydantic import BaseModel, Field


class Settings(BaseModel):
    max_exhaustive_neurons: int = Field(20, ge=1)
    max_leaves: int = Field(4096, ge=2)
    max_shap_features: int = Field(20, ge=1)
    feasibility_eps: float = Field(1e-7, gt=0)
    local_check_samples: int = Field(2048, ge=1)
    log_level: str = "INFO"


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Build settings once from UNWRAP_* environment variables"""
    return Settings(
        max_exhaustive_neurons=int(os.getenv("UNWRAP_MAX_EXHAUSTIVE_NEURONS", 20)),
        max_leaves=int(os.getenv("UNWRAP_MAX_LEAVES", 4096)),
        max_shap_features=int(os.getenv("UNWRAP_MAX_SHAP_FEATURES", 20)),
        feasibility_eps=float(os.getenv("UNWRAP_FEASIBILITY_EPS", 1e-7)),
        local_check_samples=int(os.getenv("UNWRAP_LOCAL_CHECK_SAMPLES", 2048)),
        log_level=os.getenv("UNWRAP_LOG_LEVEL", "INFO").upper(),
    )
