"""fluxvol: volumes enclosed by flux surfaces of integrable 3D
divergence-free fields, by return-time, contour, and symmetry-reduced
formulas, cross-validated on two analytic magnetic-field models."""

from . import coords, fields, surfaces, tracer, volume
from .fields import AxisymmetricField, HelicalField, AxisymParams, HelicalParams
from .surfaces import Region

__version__ = "0.1.0"

__all__ = [
    "coords", "fields", "surfaces", "tracer", "volume",
    "AxisymmetricField", "HelicalField", "AxisymParams", "HelicalParams",
    "Region", "__version__",
]
