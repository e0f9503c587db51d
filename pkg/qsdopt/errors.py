from __future__ import annotations

from typing import Any


class AsymmetryTooLarge(ValueError):
    def __init__(self, asymmetry: float, tolerance: float) -> None:
        super().__init__(f"Matrix is not Hermitian: ||A - A^H||_F = {asymmetry:.3e} exceeds {tolerance:.1e}")
        self.asymmetry = asymmetry
        self.tolerance = tolerance


class DimMismatch(ValueError):
    pass


class OutcomeCountMismatch(ValueError):
    pass


class CountMismatch(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class EigDecompositionFailed(ArithmeticError):
    pass


class NumericalFailure(ArithmeticError):
    pass


class CovarianceViolation(ValueError):
    def __init__(self, message: str, report: Any = None) -> None:
        super().__init__(message)
        self.report = report


class ProblemFileError(ValueError):
    def __init__(self, message: str, field_path: str = "") -> None:
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field_path = field_path


class InfeasibleProblem(ValueError):
    def __init__(self, message: str, result: Any = None) -> None:
        super().__init__(message)
        self.result = result
