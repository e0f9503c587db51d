from qsdopt.templates.minimax import build_inconclusive_minimax, build_minimax_bayes, build_plural_sets
from qsdopt.templates.primal import (
    build_bayes,
    build_bounded_inconclusive,
    build_error_margin,
    build_minimum_error,
    optimal_inconclusive_value,
)

PRIMAL_TEMPLATES = ("bayes", "min-error", "error-margin", "bounded-inconclusive")
MINIMAX_TEMPLATES = ("minimax-bayes", "inconclusive-minimax", "plural-minimax")
TEMPLATE_NAMES = (*PRIMAL_TEMPLATES, *MINIMAX_TEMPLATES)

__all__ = [
    "build_bayes",
    "build_minimum_error",
    "build_error_margin",
    "build_bounded_inconclusive",
    "optimal_inconclusive_value",
    "build_minimax_bayes",
    "build_inconclusive_minimax",
    "build_plural_sets",
    "PRIMAL_TEMPLATES",
    "MINIMAX_TEMPLATES",
    "TEMPLATE_NAMES",
]
