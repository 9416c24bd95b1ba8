from __future__ import annotations
import os
from dataclasses import dataclass

# Optional: load .env if python-dotenv is installed (safe no-op otherwise)
try:
    from dotenv import load_dotenv  # type: ignore
    load_dotenv()
except Exception:
    pass

def _env_int(name: str, default: str) -> int:
    return max(1, int(os.getenv(name, default)))

def _env_float(name: str, default: str) -> float:
    return float(os.getenv(name, default))

@dataclass(frozen=True)
class Settings:
    # Parallelism (sweep points, columns)
    THREADS: int           = _env_int("NLEVEL_THREADS", "1")

    # Integration knobs
    ODE_TOL: float         = _env_float("NLEVEL_ODE_TOL", "1e-10")   # per unit length
    MAX_WINDOW: float      = _env_float("NLEVEL_MAX_WINDOW", "60")
    TABLE_STEP: float      = _env_float("NLEVEL_TABLE_STEP", "0.02")
    PHASE_FACTOR: float    = _env_float("NLEVEL_PHASE_FACTOR", "1.0")

    # Superasymptotic grid density (points per unit length)
    GRID_DENSITY: int      = _env_int("NLEVEL_GRID_DENSITY", "200")

SETTINGS = Settings()

__all__ = ["SETTINGS", "Settings"]
