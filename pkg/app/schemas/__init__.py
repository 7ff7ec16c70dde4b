from app.schemas.weights import SequenceWeights
from app.schemas.family import FamilyDescriptor, FamilyRecipe
from app.schemas.record import ExperimentRecord, FitSummary, SeriesPoint
from app.schemas.config import RunConfig, URecipe, parse_config, validate_config

__all__ = [
    "SequenceWeights",
    "FamilyDescriptor",
    "FamilyRecipe",
    "ExperimentRecord",
    "FitSummary",
    "SeriesPoint",
    "RunConfig",
    "URecipe",
    "parse_config",
    "validate_config",
]
