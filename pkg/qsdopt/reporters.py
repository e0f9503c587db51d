from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from qsdopt.models import (
    CertificateReport,
    CovarianceReport,
    InfeasibilityReport,
    MinimaxCheckReport,
    MinimaxSolution,
    RunReport,
    SaddleReport,
    SolverResult,
)
from qsdopt.problem_file import matrix_to_json


def number(value: float | None) -> float | None:
    """JSON has no NaN or infinity; those become null."""
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def solver_result_to_dict(result: SolverResult) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "status": result.status,
        "primal_value": number(result.primal_value),
        "dual_value": number(result.dual_value),
        "gap": number(result.gap),
        "iterations": result.iterations,
        "residuals": {
            "primal": number(result.residuals.primal_residual),
            "dual": number(result.residuals.dual_residual),
            "gap": number(result.residuals.gap),
            "complementarity": number(result.residuals.complementarity),
        },
    }
    if result.dual is not None:
        payload["lambdas"] = list(result.dual.lambdas)
    if result.weights is not None:
        payload["weights"] = list(result.weights)
    if result.infeasibility is not None:
        payload["infeasibility"] = infeasibility_to_dict(result.infeasibility)
    if result.face is not None:
        payload["face"] = {"ranks": list(result.face.ranks), "tight_rows": sorted(result.face.tight)}
    return payload


def infeasibility_to_dict(report: InfeasibilityReport) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "phase_one_value": number(report.phase_one_value),
        "ray_value": number(report.ray_value),
    }
    if report.ray is not None:
        payload["ray"] = {"X": matrix_to_json(report.ray.X.matrix), "lambdas": list(report.ray.lambdas)}
    return payload


def certificate_to_dict(report: CertificateReport) -> dict[str, Any]:
    return {
        "passed": report.passed,
        "tolerance": report.tolerance,
        "primal_feasible": report.primal_feasible,
        "primal_value": number(report.primal_value),
        "dual_value": number(report.dual_value),
        "gap": number(report.gap),
        "dual_feasibility": number(report.dual_feas_residual),
        "operator_slackness": number(report.comp_slack_operator),
        "scalar_slackness": number(report.comp_slack_scalar),
        "lambdas_clamped": report.lambdas_clamped,
        "verdicts": dict(report.verdicts),
        "violations": list(report.violations),
    }


def minimax_to_dict(solution: MinimaxSolution) -> dict[str, Any]:
    return {
        "mu": list(solution.mu),
        "value": number(solution.value),
        "per_criterion": list(solution.per_criterion),
        "support": list(solution.support),
    }


def minimax_check_to_dict(report: MinimaxCheckReport) -> dict[str, Any]:
    return {
        "passed": report.passed,
        "tolerance": report.tolerance,
        "f_star": number(report.f_star),
        "weighted_value": number(report.weighted_value),
        "per_criterion": list(report.per_criterion),
        "statement2_residual": number(report.statement2_residual),
        "statement3_residual": number(report.statement3_residual),
        "support": list(report.support),
        "violations": list(report.violated),
    }


def saddle_to_dict(report: SaddleReport) -> dict[str, Any]:
    return {
        "passed": report.passed,
        "left_residual": number(report.left_residual),
        "right_residual": number(report.right_residual),
        "samples": report.samples,
        "skipped": report.skipped,
        "tolerance": report.tolerance,
    }


def covariance_to_dict(report: CovarianceReport) -> dict[str, Any]:
    return {
        "passed": report.passed,
        "max_residual": number(report.max_residual),
        "tolerance": report.tolerance,
        "violations": list(report.violations),
    }


def summary_line(run: RunReport) -> str:
    parts = [f"command={run.command}", f"status={run.status}", f"exit={run.exit_code}"]
    value = run.payload.get("value")
    if isinstance(value, float):
        parts.append(f"value={value:.10g}")
    if run.input_path:
        parts.append(f"input={run.input_path}")
    return " ".join(parts)


def to_json_report(run: RunReport) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "summary": f"QSDOPT REPORT {summary_line(run)}",
        "command": run.command,
        "status": run.status,
        "exit_code": run.exit_code,
        "input": {"path": run.input_path, "sha256": run.input_sha256},
        "config": run.config,
        "timings": {name: round(seconds, 6) for name, seconds in run.timings.items()},
    }
    payload.update(run.payload)
    return payload


def to_pretty_report(run: RunReport) -> str:
    lines: list[str] = ["QSDOPT REPORT", f"Summary: {summary_line(run)}"]
    if run.input_sha256:
        lines.append(f"Input: {run.input_path} sha256={run.input_sha256}")
    for key in ("value", "value_before", "value_after"):
        if key in run.payload:
            lines.append(f"{key}: {_fmt(run.payload[key])}")

    result = run.payload.get("result")
    if isinstance(result, dict):
        lines.append(
            f"Solver: status={result['status']} iterations={result['iterations']} "
            f"primal={_fmt(result['primal_value'])} dual={_fmt(result['dual_value'])} gap={_fmt(result['gap'])}"
        )
        if "infeasibility" in result:
            lines.append(f"Infeasibility: ray_value={_fmt(result['infeasibility']['ray_value'])}")

    minimax = run.payload.get("minimax")
    if isinstance(minimax, dict):
        lines.append(f"Minimax: mu={_fmt_list(minimax['mu'])} support={minimax['support']}")
        lines.append(f"  per_criterion={_fmt_list(minimax['per_criterion'])}")

    for section in ("certificate", "minimax_check", "saddle", "covariance"):
        block = run.payload.get(section)
        if not isinstance(block, dict):
            continue
        verdict = "PASS" if block.get("passed") else "FAIL"
        lines.append(f"\n{section.upper()} {verdict}")
        for key, value in block.items():
            if key in ("passed", "violations"):
                continue
            if isinstance(value, float):
                lines.append(f"  {key}: {_fmt(value)}")
            elif isinstance(value, list) and all(isinstance(v, float) for v in value):
                lines.append(f"  {key}: {_fmt_list(value)}")
            else:
                lines.append(f"  {key}: {value}")
        for violation in block.get("violations", []):
            lines.append(f"  - {violation}")

    for name, seconds in run.timings.items():
        lines.append(f"timing.{name}: {seconds:.3f}s")
    return "\n".join(lines)


def render_report(run: RunReport, output_format: str) -> dict[str, Any] | str:
    if output_format == "json":
        return to_json_report(run)
    if output_format == "pretty":
        return to_pretty_report(run)
    raise ValueError(f"Unsupported report format: {output_format}")


def write_report(payload: dict[str, Any] | list[Any] | str, out: str | None) -> None:
    rendered = payload if isinstance(payload, str) else json.dumps(payload, indent=2, allow_nan=False)
    if out is None:
        print(rendered)
        return
    output_path = Path(out)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(rendered, encoding="utf-8")


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return "n/a" if value is None else str(value)


def _fmt_list(values: list[Any]) -> str:
    return "[" + ", ".join(_fmt(v) for v in values) + "]"
