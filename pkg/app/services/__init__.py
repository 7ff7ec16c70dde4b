from app.services.field_service import FieldService
from app.services.calculus_service import CalculusService
from app.services.norm_service import NormService
from app.services.family_service import FamilyService
from app.services.spectral_service import SpectralService
from app.services.identity_service import IdentityService
from app.services.scaling_service import ScalingService
from app.services.schatten_service import SchattenService
from app.services.extremizer_service import ExtremizerService

__all__ = [
    "FieldService",
    "CalculusService",
    "NormService",
    "FamilyService",
    "SpectralService",
    "IdentityService",
    "ScalingService",
    "SchattenService",
    "ExtremizerService",
]
