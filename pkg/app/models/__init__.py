from app.models.grid import Grid
from app.models.base import GridFunction
from app.models.field import ScalarField, VectorField, TwoFormField, form_pairs
from app.models.family import OrthonormalFamily, gram_matrix
from app.models.operator import CliffordAlgebra, DenseOperator

__all__ = [
    "Grid",
    "GridFunction",
    "ScalarField",
    "VectorField",
    "TwoFormField",
    "form_pairs",
    "OrthonormalFamily",
    "gram_matrix",
    "CliffordAlgebra",
    "DenseOperator",
]
