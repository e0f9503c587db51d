from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from qsdopt.operators import HermitianOperator, Povm

SolverStatus = Literal["Optimal", "Infeasible", "IterationLimit", "NumericalFailure"]
LAMBDA_CLAMP = 1e-10


@dataclass(slots=True)
class FeasibilityReport:
    feasible: bool
    psd_violation: float
    completeness_residual: float
    constraint_values: list[float]
    slacks: list[float]
    violated_rows: list[str] = field(default_factory=list)


@dataclass(slots=True)
class DualCertificate:
    X: HermitianOperator
    lambdas: tuple[float, ...] = ()
    clamped: bool = field(default=False, init=False)

    def __post_init__(self) -> None:
        values = tuple(float(value) for value in self.lambdas)
        worst = min(values, default=0.0)
        if worst < -LAMBDA_CLAMP:
            raise ValueError(f"Dual multipliers must be nonnegative, got {worst:.3e}")
        self.clamped = worst < 0.0
        self.lambdas = tuple(max(value, 0.0) for value in values)


@dataclass(slots=True)
class IterationRecord:
    iteration: int
    primal_value: float
    dual_value: float
    primal_residual: float
    dual_residual: float
    mu: float
    step_primal: float
    step_dual: float
    structure_residual: float


@dataclass(slots=True)
class SolverResiduals:
    primal_residual: float
    dual_residual: float
    gap: float
    complementarity: float


@dataclass(slots=True)
class InfeasibilityReport:
    phase_one_value: float
    ray: DualCertificate | None
    ray_value: float


@dataclass(frozen=True, slots=True, eq=False)
class Face:
    """Each Pi_m lives in the span of the first ranks[m] columns of the unitary frames[m].

    Rows in tight hold with equality on the face and lose their slack.
    """

    frames: np.ndarray
    ranks: tuple[int, ...]
    tight: frozenset[int] = frozenset()

    @property
    def trivial(self) -> bool:
        return not self.tight and all(rank == self.frames.shape[-1] for rank in self.ranks)


@dataclass(slots=True)
class SolverResult:
    status: SolverStatus
    povm: Povm | None
    dual: DualCertificate | None
    primal_value: float
    dual_value: float
    iterations: int
    residuals: SolverResiduals
    history: list[IterationRecord] = field(default_factory=list)
    infeasibility: InfeasibilityReport | None = None
    weights: tuple[float, ...] | None = None
    face: Face | None = None

    @property
    def gap(self) -> float:
        return abs(self.dual_value - self.primal_value)


@dataclass(slots=True)
class CertificateReport:
    dual_feas_residual: float
    comp_slack_operator: float
    comp_slack_scalar: float
    gap: float
    primal_value: float
    dual_value: float
    tolerance: float
    primal_feasible: bool
    lambdas_clamped: bool = False
    verdicts: dict[str, bool] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.primal_feasible and all(self.verdicts.values())


@dataclass(slots=True)
class MinimaxSolution:
    mu: tuple[float, ...]
    povm: Povm
    value: float
    per_criterion: tuple[float, ...]
    support: tuple[int, ...]
    result: SolverResult | None = None


@dataclass(slots=True)
class MinimaxCheckReport:
    f_star: float
    weighted_value: float
    per_criterion: list[float]
    statement2_residual: float
    statement3_residual: float
    tolerance: float
    support: list[int]
    violated: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violated


@dataclass(slots=True)
class CovarianceReport:
    max_residual: float
    tolerance: float
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance and not self.violations


@dataclass(slots=True)
class SaddleReport:
    left_residual: float
    right_residual: float
    samples: int
    tolerance: float
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.left_residual <= self.tolerance and self.right_residual <= self.tolerance


@dataclass(slots=True)
class CovariantResult:
    result: SolverResult | None
    covariance: CovarianceReport
    certificate: CertificateReport | None
    value_before: float
    value_after: float
    povm_residual: float
    povm: Povm | None = None
    dual: DualCertificate | None = None
    objective_tolerance: float = 1e-8

    @property
    def objective_preserved(self) -> bool:
        return abs(self.value_after - self.value_before) <= self.objective_tolerance * (1.0 + abs(self.value_before))

    @property
    def passed(self) -> bool:
        certified = self.certificate is not None and self.certificate.passed
        return self.covariance.passed and certified and self.objective_preserved


@dataclass(slots=True)
class RunReport:
    command: str
    status: str
    exit_code: int
    input_path: str | None = None
    input_sha256: str | None = None
    config: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    payload: dict[str, Any] = field(default_factory=dict)
