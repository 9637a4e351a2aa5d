"""Angle-based diversity regularization of component matrices, with model trainers and bound evaluators."""

from marlvm.errors import (
    CapacityError,
    DegenerateRowError,
    DependentRowsError,
    InvalidArgumentError,
    MarError,
    NumericalFailureError,
    ParseError,
)
from marlvm.linalg import (
    OrthDecomposition,
    gram_det,
    non_obtuse_angle,
    orth_decompose,
    pairwise_angles,
    project_rows_unit,
    row_gram,
    signed_angle,
    signed_angles_rowwise,
)
from marlvm.regularizer import (
    MarBreakdown,
    SurrogateConfig,
    ascent_step,
    mar_breakdown,
    surrogate,
    surrogate_g,
    surrogate_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "DegenerateRowError",
    "DependentRowsError",
    "InvalidArgumentError",
    "MarBreakdown",
    "MarError",
    "NumericalFailureError",
    "OrthDecomposition",
    "ParseError",
    "SurrogateConfig",
    "ascent_step",
    "gram_det",
    "mar_breakdown",
    "non_obtuse_angle",
    "orth_decompose",
    "pairwise_angles",
    "project_rows_unit",
    "row_gram",
    "signed_angle",
    "signed_angles_rowwise",
    "surrogate",
    "surrogate_g",
    "surrogate_gradient",
]
