from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any
try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


DEFAULT_CONFIG_NAME = "qsdopt.toml"
REPORT_FORMATS = {"json", "pretty"}


@dataclass(slots=True)
class SolverConfig:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.98
    infeasibility_threshold: float = 1e8
    slack_tol: float = 1e-7


@dataclass(slots=True)
class CertificateConfig:
    tolerance: float = 1e-6


@dataclass(slots=True)
class MinimaxConfig:
    support_tol: float = 1e-6
    check_tolerance: float = 1e-5


@dataclass(slots=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1


@dataclass(slots=True)
class ReportConfig:
    output_format: str = "json"
    out: str | None = None


@dataclass(slots=True)
class Config:
    solver: SolverConfig = field(default_factory=SolverConfig)
    certificate: CertificateConfig = field(default_factory=CertificateConfig)
    minimax: MinimaxConfig = field(default_factory=MinimaxConfig)
    run: RunConfig = field(default_factory=RunConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def load_config(path: str | None) -> Config:
    if path is None:
        default = Path(DEFAULT_CONFIG_NAME)
        if not default.exists():
            return Config()
        path = str(default)

    cfg_path = Path(path)
    if not cfg_path.exists():
        raise FileNotFoundError(f"Config file not found: {cfg_path}")

    with cfg_path.open("rb") as fh:
        try:
            payload = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValueError(f"Invalid TOML in {cfg_path}: {exc}") from exc

    solver = payload.get("solver", {})
    certificate = payload.get("certificate", {})
    minimax = payload.get("minimax", {})
    run = payload.get("run", {})
    report = payload.get("report", {})

    config = Config()
    config.solver.gap_tol = float(solver.get("gap_tol", config.solver.gap_tol))
    config.solver.feas_tol = float(solver.get("feas_tol", config.solver.feas_tol))
    config.solver.max_iters = int(solver.get("max_iters", config.solver.max_iters))
    config.solver.step_fraction = float(solver.get("step_fraction", config.solver.step_fraction))
    config.solver.infeasibility_threshold = float(
        solver.get("infeasibility_threshold", config.solver.infeasibility_threshold)
    )
    config.solver.slack_tol = float(solver.get("slack_tol", config.solver.slack_tol))
    config.certificate.tolerance = float(certificate.get("tolerance", config.certificate.tolerance))
    config.minimax.support_tol = float(minimax.get("support_tol", config.minimax.support_tol))
    config.minimax.check_tolerance = float(minimax.get("check_tolerance", config.minimax.check_tolerance))
    config.run.seed = int(run.get("seed", config.run.seed))
    config.run.jobs = int(run.get("jobs", config.run.jobs))
    config.report.output_format = str(report.get("format", config.report.output_format)).lower()
    config.report.out = report.get("out")
    return config


def validate_config(config: Config) -> list[str]:
    errors: list[str] = []
    positive_values: list[tuple[str, float]] = [
        ("solver.gap_tol", config.solver.gap_tol),
        ("solver.feas_tol", config.solver.feas_tol),
        ("solver.infeasibility_threshold", config.solver.infeasibility_threshold),
        ("solver.slack_tol", config.solver.slack_tol),
        ("certificate.tolerance", config.certificate.tolerance),
        ("minimax.support_tol", config.minimax.support_tol),
        ("minimax.check_tolerance", config.minimax.check_tolerance),
    ]
    for name, value in positive_values:
        if not value > 0:
            errors.append(f"{name} must be > 0")
    if config.solver.max_iters < 1:
        errors.append("solver.max_iters must be >= 1")
    if not 0.0 < config.solver.step_fraction < 1.0:
        errors.append("solver.step_fraction must be in (0, 1)")
    if config.run.jobs < 1:
        errors.append("run.jobs must be >= 1")
    if config.report.output_format not in REPORT_FORMATS:
        errors.append("report.format must be one of: json, pretty")
    return errors
