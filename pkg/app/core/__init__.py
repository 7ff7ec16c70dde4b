from app.core.config import Settings, get_settings
from app.core.exceptions import (
    LabError,
    GridMismatchError,
    ConstraintViolationError,
    BandLimitError,
    FamilyError,
    SpectralError,
    ConfigError,
)
from app.core.parallel import map_cells

__all__ = [
    "Settings",
    "get_settings",
    "LabError",
    "GridMismatchError",
    "ConstraintViolationError",
    "BandLimitError",
    "FamilyError",
    "SpectralError",
    "ConfigError",
    "map_cells",
]
