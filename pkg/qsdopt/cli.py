from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
import hashlib
import logging
from pathlib import Path
import sys
import time
from typing import Any, Callable, TextIO

from qsdopt import __version__
from qsdopt.certificate import build_statement3_certificate, check_statement2
from qsdopt.config import Config, load_config, validate_config
from qsdopt.errors import CovarianceViolation, InfeasibleProblem, NumericalFailure, ProblemFileError
from qsdopt.minimax import check_minimax, sample_saddle, solve_minimax
from qsdopt.models import MinimaxSolution, RunReport
from qsdopt.operators import helstrom_success
from qsdopt.problem import DiscriminationProblem, MinimaxProblem, criterion_values
from qsdopt.problem_file import (
    ProblemFile,
    SolutionFile,
    build_from_template,
    ensemble_from_json,
    ensemble_to_json,
    parse_random_spec,
    read_ensembles,
    read_problem_file,
    read_solution_file,
    serialize_problem,
    serialize_solution,
)
from qsdopt.reporters import (
    certificate_to_dict,
    covariance_to_dict,
    minimax_check_to_dict,
    minimax_to_dict,
    number,
    render_report,
    saddle_to_dict,
    solver_result_to_dict,
    write_report,
)
from qsdopt.solver import solve_problem
from qsdopt.symmetry import (
    FiniteGroup,
    check_povm_covariance,
    covariant_solve,
    symmetrize_minimax,
    symmetrize_solution,
    weight_covariance,
)
from qsdopt.templates import TEMPLATE_NAMES, build_plural_sets, optimal_inconclusive_value

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_CERTIFICATE = 3
EXIT_NUMERICAL = 4
EXIT_COVARIANCE = 5

TOP_LEVEL_MANUAL = """\
Quick start:
  qsdopt template min-error --random 2:2 --seed 7 --output helstrom.json
  qsdopt solve helstrom.json --format pretty
  qsdopt solve problems/ --jobs 4 --output reports/batch.json

Templates:
  qsdopt template error-margin --ensemble states.json --epsilon 0.1
  qsdopt template bounded-inconclusive --ensemble states.json --p 0.2 --q 0.0 --diagnose
  qsdopt template plural-minimax --ensemble sets.json

Minimax and certificates:
  qsdopt minimax bayes-minimax.json --saddle-samples 50
  qsdopt solve helstrom.json --output report.json
  qsdopt certify helstrom.json report.json

Symmetry:
  qsdopt symmetrize trine.json
  qsdopt symmetrize trine.json solution.json

Exit codes:
  0 solved and certified, 1 input or usage error, 2 infeasible,
  3 certificate or check failed, 4 numerical failure or iteration limit,
  5 problem is not covariant under its group
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="qsdopt",
        description="Optimal quantum measurements for generalized state discrimination problems.",
        epilog=TOP_LEVEL_MANUAL,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    solve = subparsers.add_parser("solve", help="Solve a primal problem file (or every *.json in a directory).")
    solve.add_argument("path", help="Problem file or directory of problem files.")
    _add_common(solve)
    _add_progress(solve)
    solve.set_defaults(handler=run_solve)

    minimax = subparsers.add_parser("minimax", help="Solve a minimax problem file and check its saddle point.")
    minimax.add_argument("path", help="Problem file or directory of problem files.")
    minimax.add_argument("--saddle-samples", type=int, default=50, help="Random (mu, Pi) pairs for the saddle check.")
    _add_common(minimax)
    _add_progress(minimax)
    minimax.set_defaults(handler=run_minimax)

    certify = subparsers.add_parser("certify", help="Check a given solution against a problem without solving.")
    certify.add_argument("problem", help="Problem file.")
    certify.add_argument("solution", help="Solution file or a previous solve report.")
    certify.add_argument("--tolerance", type=float, help="Certificate tolerance.")
    _add_common(certify)
    certify.set_defaults(handler=run_certify)

    template = subparsers.add_parser("template", help="Write a canonical problem file from a named template.")
    template.add_argument("name", choices=TEMPLATE_NAMES, help="Template name.")
    source = template.add_mutually_exclusive_group(required=True)
    source.add_argument("--ensemble", help="Ensemble file (or a file with a 'sets' array).")
    source.add_argument("--random", help="Random ensemble DIM:COUNT[:pure|mixed], seeded by --seed.")
    template.add_argument("--sets", type=int, default=2, help="Random state sets for plural-minimax.")
    template.add_argument("--epsilon", type=float, help="Error margin (error-margin).")
    template.add_argument("--p", type=float, help="Failure bound (bounded-inconclusive, inconclusive-minimax).")
    template.add_argument("--q", type=float, default=0.0, help="Per-state success floor (bounded-inconclusive).")
    template.add_argument("--diagnose", action="store_true", help="Report the largest feasible q for bounded-inconclusive.")
    _add_common(template)
    template.set_defaults(handler=run_template)

    symmetrize = subparsers.add_parser("symmetrize", help="Average a solution over the problem's symmetry group.")
    symmetrize.add_argument("problem", help="Problem file with a group block.")
    symmetrize.add_argument("solution", nargs="?", help="Solution file; solved first when omitted.")
    _add_common(symmetrize)
    symmetrize.set_defaults(handler=run_symmetrize)
    return parser


def _add_common(command: argparse.ArgumentParser) -> None:
    command.add_argument("--config", help="Path to qsdopt TOML config.")
    command.add_argument("--tol-gap", type=float, help="Relative duality gap tolerance.")
    command.add_argument("--tol-feas", type=float, help="Feasibility tolerance.")
    command.add_argument("--max-iters", type=int, help="Interior-point iteration limit.")
    command.add_argument("--seed", type=int, help="Seed for every random draw.")
    command.add_argument("--jobs", type=int, help="Worker threads for directory batches.")
    command.add_argument("--output", help="Write the report to this file. Defaults to stdout.")
    command.add_argument("--format", choices=["json", "pretty"], help="Report format.")
    command.add_argument("--verbose", action="store_true", help="Log solver iterations on stderr.")


def _add_progress(command: argparse.ArgumentParser) -> None:
    group = command.add_mutually_exclusive_group()
    group.add_argument("--progress", dest="progress", action="store_true", help="Show batch progress on stderr.")
    group.add_argument("--no-progress", dest="progress", action="store_false", help="Disable batch progress output.")
    command.set_defaults(progress=None)


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    raise SystemExit(args.handler(args))


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="[%(name)s] %(message)s",
        stream=sys.stderr,
    )


def load_effective_config(args: argparse.Namespace) -> Config | None:
    try:
        config = load_config(args.config)
    except (FileNotFoundError, OSError, ValueError) as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return None
    merged = merge_cli_with_config(args, config)
    errors = validate_config(merged)
    for error in errors:
        print(f"[config] {error}", file=sys.stderr)
    return None if errors else merged


def merge_cli_with_config(args: argparse.Namespace, config: Config) -> Config:
    merged = config
    if args.tol_gap is not None:
        merged.solver.gap_tol = args.tol_gap
    if args.tol_feas is not None:
        merged.solver.feas_tol = args.tol_feas
    if args.max_iters is not None:
        merged.solver.max_iters = args.max_iters
    if args.seed is not None:
        merged.run.seed = args.seed
    if args.jobs is not None:
        merged.run.jobs = args.jobs
    if args.output:
        merged.report.out = args.output
    if args.format:
        merged.report.output_format = args.format
    if getattr(args, "tolerance", None) is not None:
        merged.certificate.tolerance = args.tolerance
    return merged


def run_solve(args: argparse.Namespace) -> int:
    return _run_files(args, "solve", solve_file)


def run_minimax(args: argparse.Namespace) -> int:
    samples = args.saddle_samples
    return _run_files(args, "minimax", lambda path, config: minimax_file(path, config, samples))


def solve_file(path: Path, config: Config) -> RunReport:
    timings: dict[str, float] = {}
    started = time.perf_counter()
    problem_file = read_problem_file(path)
    problem = _require_kind(problem_file, "primal", "solve")
    timings["parse"] = time.perf_counter() - started

    started = time.perf_counter()
    result = solve_problem(problem, config.solver)
    timings["solve"] = time.perf_counter() - started
    payload: dict[str, Any] = {"problem": _shape(problem), "result": solver_result_to_dict(result)}
    if result.status == "Infeasible":
        return _report("solve", result.status, EXIT_INFEASIBLE, path, config, timings, payload)
    if result.povm is None or result.dual is None:
        return _report("solve", result.status, EXIT_NUMERICAL, path, config, timings, payload)

    started = time.perf_counter()
    certificate = check_statement2(problem, result.povm, result.dual, config.certificate.tolerance)
    timings["certify"] = time.perf_counter() - started
    payload["value"] = result.primal_value + problem.value_offset
    payload["certificate"] = certificate_to_dict(certificate)
    payload["solution"] = serialize_solution(result.povm, result.dual)
    diagnostics = _diagnostics(problem_file)
    if diagnostics:
        payload["diagnostics"] = diagnostics
    if result.status != "Optimal":
        code = EXIT_NUMERICAL
    else:
        code = EXIT_OK if certificate.passed else EXIT_CERTIFICATE
    return _report("solve", result.status, code, path, config, timings, payload)


def minimax_file(path: Path, config: Config, samples: int = 50) -> RunReport:
    timings: dict[str, float] = {}
    started = time.perf_counter()
    problem = _require_kind(read_problem_file(path), "minimax", "minimax")
    timings["parse"] = time.perf_counter() - started

    started = time.perf_counter()
    try:
        solution = solve_minimax(problem, config.solver, config.minimax.support_tol)
        timings["solve"] = time.perf_counter() - started
        started = time.perf_counter()
        check = check_minimax(
            problem,
            solution.mu,
            solution.povm,
            config.minimax.check_tolerance,
            config.minimax.support_tol,
            config.solver,
        )
    except InfeasibleProblem as exc:
        timings["solve"] = time.perf_counter() - started
        payload = {"problem": _shape(problem), "result": solver_result_to_dict(exc.result)}
        return _report("minimax", "Infeasible", EXIT_INFEASIBLE, path, config, timings, payload)
    except NumericalFailure as exc:
        timings.setdefault("solve", time.perf_counter() - started)
        return _report("minimax", "NumericalFailure", EXIT_NUMERICAL, path, config, timings, {"error": str(exc)})
    saddle = sample_saddle(problem, solution, samples, config.run.seed, config.minimax.check_tolerance)
    timings["check"] = time.perf_counter() - started
    payload = {
        "problem": _shape(problem),
        "value": solution.value,
        "result": solver_result_to_dict(solution.result) if solution.result is not None else None,
        "minimax": minimax_to_dict(solution),
        "minimax_check": minimax_check_to_dict(check),
        "saddle": saddle_to_dict(saddle),
        "solution": serialize_solution(solution.povm, mu=solution.mu),
    }
    code = EXIT_OK if check.passed and saddle.passed else EXIT_CERTIFICATE
    return _report("minimax", "Optimal", code, path, config, timings, payload)


def run_certify(args: argparse.Namespace) -> int:
    config = load_effective_config(args)
    if config is None:
        return EXIT_INPUT
    path = Path(args.problem)
    try:
        started = time.perf_counter()
        problem_file = read_problem_file(path)
        problem = problem_file.problem
        solution = read_solution_file(args.solution, problem)
        timings = {"parse": time.perf_counter() - started}
        started = time.perf_counter()
        if isinstance(problem, MinimaxProblem):
            if solution.mu is None:
                raise ProblemFileError("minimax solutions need 'mu'", "mu")
            check = check_minimax(problem, solution.mu, solution.povm, config.minimax.check_tolerance, config.minimax.support_tol, config.solver)
            passed = check.passed
            payload: dict[str, Any] = {"value": min(criterion_values(problem, solution.povm)), "minimax_check": minimax_check_to_dict(check)}
        else:
            dual = solution.dual
            if dual is None:
                if solution.lambdas is None:
                    raise ProblemFileError("solution needs 'dual' (X and lambdas) or 'lambdas'", "dual")
                dual = build_statement3_certificate(problem, solution.povm, solution.lambdas)
            certificate = check_statement2(problem, solution.povm, dual, config.certificate.tolerance)
            passed = certificate.passed
            payload = {"value": certificate.primal_value + problem.value_offset, "certificate": certificate_to_dict(certificate)}
        timings["certify"] = time.perf_counter() - started
    except (FileNotFoundError, OSError, ValueError) as exc:
        print(f"[input] {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"[certify] {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    run = _report("certify", "passed" if passed else "failed", EXIT_OK if passed else EXIT_CERTIFICATE, path, config, timings, payload)
    return _emit(run, config)


def run_template(args: argparse.Namespace) -> int:
    config = load_effective_config(args)
    if config is None:
        return EXIT_INPUT
    seed = config.run.seed
    params: dict[str, Any] = {
        key: value
        for key, value in (("epsilon", args.epsilon), ("p", args.p), ("q", args.q))
        if value is not None and (key != "q" or args.name == "bounded-inconclusive")
    }
    try:
        if args.random:
            count = args.sets if args.name == "plural-minimax" else 1
            ensembles = [parse_random_spec(args.random, seed + k) for k in range(count)]
        else:
            ensembles = read_ensembles(args.ensemble)
        if args.name == "plural-minimax":
            problem: DiscriminationProblem | MinimaxProblem = build_plural_sets(ensembles)
        else:
            problem = build_from_template(args.name, ensembles[0], params)
        generated_by: dict[str, Any] = {"template": args.name, "params": params, "seed": seed}
        if args.name == "plural-minimax":
            generated_by["sets"] = [ensemble_to_json(ensemble) for ensemble in ensembles]
        else:
            generated_by["ensemble"] = ensemble_to_json(ensembles[0])
        if args.diagnose:
            if args.name != "bounded-inconclusive":
                raise ProblemFileError("--diagnose applies to bounded-inconclusive only", "--diagnose")
            q_prime = optimal_inconclusive_value(ensembles[0], params.get("p", 0.0), config.solver)
            generated_by["diagnostics"] = {"q_prime": q_prime}
            print(f"[template] q_prime={q_prime:.10g} (q above this is infeasible)", file=sys.stderr)
    except (FileNotFoundError, OSError, ValueError, NumericalFailure) as exc:
        print(f"[input] {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        write_report(serialize_problem(problem, generated_by=generated_by), config.report.out)
    except (OSError, ValueError) as exc:
        print(f"[report] {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"[summary] command=template name={args.name} dim={problem.dim} M={problem.M} J={problem.J}", file=sys.stderr)
    return EXIT_OK


def run_symmetrize(args: argparse.Namespace) -> int:
    config = load_effective_config(args)
    if config is None:
        return EXIT_INPUT
    path = Path(args.problem)
    timings: dict[str, float] = {}
    try:
        started = time.perf_counter()
        problem_file = read_problem_file(path)
        if problem_file.group is None:
            raise ProblemFileError("symmetrize needs a group block", "group")
        solution = read_solution_file(args.solution, problem_file.problem) if args.solution else None
        timings["parse"] = time.perf_counter() - started
    except (FileNotFoundError, OSError, ValueError) as exc:
        print(f"[input] {exc}", file=sys.stderr)
        return EXIT_INPUT

    group = problem_file.group
    started = time.perf_counter()
    try:
        if isinstance(problem_file.problem, MinimaxProblem):
            run = _symmetrize_minimax(problem_file.problem, group, solution, path, config, timings, started)
        else:
            run = _symmetrize_primal(problem_file.problem, group, solution, path, config, timings, started)
    except CovarianceViolation as exc:
        print(f"[symmetry] {exc}", file=sys.stderr)
        payload = {"covariance": covariance_to_dict(exc.report)} if exc.report is not None else {}
        run = _report("symmetrize", "not-covariant", EXIT_COVARIANCE, path, config, timings, payload)
    except (InfeasibleProblem, NumericalFailure) as exc:
        print(f"[solve] {exc}", file=sys.stderr)
        code = EXIT_INFEASIBLE if isinstance(exc, InfeasibleProblem) else EXIT_NUMERICAL
        run = _report("symmetrize", type(exc).__name__, code, path, config, timings, {"error": str(exc)})
    except ValueError as exc:
        print(f"[input] {exc}", file=sys.stderr)
        return EXIT_INPUT
    return _emit(run, config)


def _symmetrize_primal(
    problem: DiscriminationProblem,
    group: FiniteGroup,
    solution: SolutionFile | None,
    path: Path,
    config: Config,
    timings: dict[str, float],
    started: float,
) -> RunReport:
    if solution is None:
        outcome = covariant_solve(problem, group, config.solver, certificate_tolerance=config.certificate.tolerance)
        if outcome.certificate is None:
            timings["symmetrize"] = time.perf_counter() - started
            code = EXIT_INFEASIBLE if outcome.result.status == "Infeasible" else EXIT_NUMERICAL
            payload = {"covariance": covariance_to_dict(outcome.covariance), "result": solver_result_to_dict(outcome.result)}
            return _report("symmetrize", outcome.result.status, code, path, config, timings, payload)
    else:
        dual = solution.dual
        if dual is None:
            if solution.lambdas is None:
                raise ProblemFileError("solution needs 'dual' (X and lambdas) or 'lambdas'", "dual")
            dual = build_statement3_certificate(problem, solution.povm, solution.lambdas)
        outcome = symmetrize_solution(problem, group, solution.povm, dual, certificate_tolerance=config.certificate.tolerance)
    timings["symmetrize"] = time.perf_counter() - started
    payload: dict[str, Any] = {
        "value_before": outcome.value_before + problem.value_offset,
        "value_after": outcome.value_after + problem.value_offset,
        "value": outcome.value_after + problem.value_offset,
        "objective_preserved": outcome.objective_preserved,
        "povm_covariance_residual": number(outcome.povm_residual),
        "covariance": covariance_to_dict(outcome.covariance),
        "certificate": certificate_to_dict(outcome.certificate),
        "solution": serialize_solution(outcome.povm, outcome.dual),
    }
    if outcome.result is not None:
        payload["result"] = solver_result_to_dict(outcome.result)
    status = "passed" if outcome.passed else "failed"
    return _report("symmetrize", status, EXIT_OK if outcome.passed else EXIT_CERTIFICATE, path, config, timings, payload)


def _symmetrize_minimax(
    problem: MinimaxProblem,
    group: FiniteGroup,
    solution: SolutionFile | None,
    path: Path,
    config: Config,
    timings: dict[str, float],
    started: float,
) -> RunReport:
    if solution is None:
        base = solve_minimax(problem, config.solver, config.minimax.support_tol)
    else:
        if solution.mu is None:
            raise ProblemFileError("minimax solutions need 'mu'", "mu")
        values = tuple(criterion_values(problem, solution.povm))
        base = MinimaxSolution(mu=solution.mu, povm=solution.povm, value=min(values), per_criterion=values, support=())
    symmetric = symmetrize_minimax(problem, group, base, config.minimax.support_tol)
    check = check_minimax(problem, symmetric.mu, symmetric.povm, config.minimax.check_tolerance, config.minimax.support_tol, config.solver)
    timings["symmetrize"] = time.perf_counter() - started
    payload = {
        "value_before": base.value,
        "value_after": symmetric.value,
        "value": symmetric.value,
        "povm_covariance_residual": check_povm_covariance(group, symmetric.povm),
        "mu_covariance_residual": weight_covariance(group, symmetric.mu),
        "minimax": minimax_to_dict(symmetric),
        "minimax_check": minimax_check_to_dict(check),
        "solution": serialize_solution(symmetric.povm, mu=symmetric.mu),
    }
    status = "passed" if check.passed else "failed"
    return _report("symmetrize", status, EXIT_OK if check.passed else EXIT_CERTIFICATE, path, config, timings, payload)


def _run_files(args: argparse.Namespace, command: str, run_one: Callable[[Path, Config], RunReport]) -> int:
    config = load_effective_config(args)
    if config is None:
        return EXIT_INPUT
    target = Path(args.path)
    if not target.exists():
        print(f"[input] Path not found: {target}", file=sys.stderr)
        return EXIT_INPUT
    if target.is_file():
        try:
            run = run_one(target, config)
        except (FileNotFoundError, OSError, ValueError) as exc:
            print(f"[input] {exc}", file=sys.stderr)
            return EXIT_INPUT
        except NumericalFailure as exc:
            print(f"[solve] {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        return _emit(run, config)

    files = sorted(target.glob("*.json"))
    if not files:
        print(f"[input] No *.json problem files in {target}", file=sys.stderr)
        return EXIT_INPUT
    progress = BatchProgress(sys.stderr, len(files), args.progress)

    def guarded(path: Path) -> RunReport:
        try:
            return run_one(path, config)
        except (FileNotFoundError, OSError, ValueError) as exc:
            print(f"[input] {path}: {exc}", file=sys.stderr)
            return _report(command, "InputError", EXIT_INPUT, path, config, {}, {"error": str(exc)})
        except NumericalFailure as exc:
            print(f"[solve] {path}: {exc}", file=sys.stderr)
            return _report(command, "NumericalFailure", EXIT_NUMERICAL, path, config, {}, {"error": str(exc)})

    runs: list[RunReport] = []
    with ThreadPoolExecutor(max_workers=config.run.jobs) as pool:
        for run in pool.map(guarded, files):
            runs.append(run)
            progress.record(run)
    progress.close()

    exit_code = max(run.exit_code for run in runs)
    try:
        if config.report.output_format == "json":
            payload: Any = {
                "summary": f"QSDOPT BATCH command={command} files={len(runs)} exit={exit_code}",
                "command": command,
                "exit_code": exit_code,
                "runs": [render_report(run, "json") for run in runs],
            }
        else:
            payload = "\n\n".join(str(render_report(run, "pretty")) for run in runs)
        write_report(payload, config.report.out)
    except (OSError, ValueError) as exc:
        print(f"[report] {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"[summary] command={command} files={len(runs)} failed={progress.failed} exit={exit_code}", file=sys.stderr)
    return exit_code


def _emit(run: RunReport, config: Config) -> int:
    try:
        write_report(render_report(run, config.report.output_format), config.report.out)
    except (OSError, ValueError) as exc:
        print(f"[report] {exc}", file=sys.stderr)
        return EXIT_INPUT
    print_summary(run)
    return run.exit_code


def print_summary(run: RunReport) -> None:
    line = f"[summary] command={run.command} status={run.status} exit={run.exit_code}"
    value = run.payload.get("value")
    if isinstance(value, float):
        line += f" value={value:.10g}"
    print(line, file=sys.stderr)


def _report(
    command: str,
    status: str,
    exit_code: int,
    path: Path,
    config: Config,
    timings: dict[str, float],
    payload: dict[str, Any],
) -> RunReport:
    return RunReport(
        command=command,
        status=status,
        exit_code=exit_code,
        input_path=str(path),
        input_sha256=_digest(path),
        config=config.to_dict(),
        timings=timings,
        payload=payload,
    )


def _digest(path: Path) -> str | None:
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError:
        return None


def _require_kind(problem_file: ProblemFile, kind: str, command: str) -> Any:
    if problem_file.kind != kind:
        other = "minimax" if kind == "primal" else "solve"
        raise ProblemFileError(f"'{command}' needs a {kind} problem; use 'qsdopt {other}'", "kind")
    return problem_file.problem


def _shape(problem: DiscriminationProblem | MinimaxProblem) -> dict[str, int]:
    shape = {"dim": problem.dim, "M": problem.M, "J": problem.J}
    if isinstance(problem, MinimaxProblem):
        shape["K"] = problem.K
    return shape


def _diagnostics(problem_file: ProblemFile) -> dict[str, float]:
    if problem_file.template is not None:
        name, block, where = problem_file.template.get("name"), problem_file.template, "template"
    elif problem_file.generated_by is not None:
        name, block, where = problem_file.generated_by.get("template"), problem_file.generated_by, "generated_by"
    else:
        return {}
    if name != "min-error" or "ensemble" not in block:
        return {}
    ensemble = ensemble_from_json(block["ensemble"], f"{where}.ensemble")
    return {"helstrom": helstrom_success(ensemble)} if len(ensemble) == 2 else {}


class BatchProgress:
    """One status line per finished file, redrawn in place on a terminal."""

    def __init__(self, stream: TextIO, total: int, enabled: bool | None = None) -> None:
        self.stream = stream
        self.total = total
        self.enabled = (_is_terminal(stream) if enabled is None else enabled) and total > 0
        self.redraw = self.enabled and _is_terminal(stream)
        self.done = 0
        self.failed = 0
        self._width = 0

    def record(self, run: RunReport) -> None:
        self.done += 1
        if run.exit_code != EXIT_OK:
            self.failed += 1
        if not self.enabled:
            return
        name = Path(run.input_path).name if run.input_path else "-"
        line = f"[batch] {self.done}/{self.total} {name}: {run.status} exit={run.exit_code} failed={self.failed}"
        if self.redraw:
            self.stream.write("\r" + line.ljust(self._width))
            self._width = max(self._width, len(line))
        else:
            self.stream.write(line + "\n")
        self.stream.flush()

    def close(self) -> None:
        if self.redraw and self.done:
            self.stream.write("\n")
            self.stream.flush()


def _is_terminal(stream: TextIO) -> bool:
    try:
        return bool(stream.isatty())
    except (AttributeError, OSError, ValueError):
        return False


if __name__ == "__main__":
    main()
