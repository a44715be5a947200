"""Framework-selection advisor over a shipped feature matrix."""

from .matrix import FLAG_VALUES, FeatureMatrix, load_matrix, matrix_from_dict, save_matrix
from .select import (
    Recommendation, Requirement, format_recommendations, load_requirement, requirement_from_dict, select,
)

__all__ = [
    "FLAG_VALUES", "FeatureMatrix", "Recommendation", "Requirement", "format_recommendations",
    "load_matrix", "load_requirement", "matrix_from_dict", "requirement_from_dict", "save_matrix", "select",
]
