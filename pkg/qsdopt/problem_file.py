"""JSON codec for problem, ensemble, group and solution documents.

Complex matrices are row-major nested arrays of [re, im] pairs. Floats are
written with their shortest round-trip repr, so serialize/parse is exact.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass
import json
from pathlib import Path
from typing import Any, Literal, TypeVar

import numpy as np

from qsdopt.errors import ProblemFileError
from qsdopt.models import DualCertificate
from qsdopt.operators import (
    DensityOperator,
    HermitianOperator,
    Povm,
    StateEnsemble,
    density_operator,
    ket_state,
    random_ensemble,
    validate_hermitian,
)
from qsdopt.problem import BayesCost, ConstraintRow, DiscriminationProblem, MinimaxProblem, canonicalize_equalities, expand_rows
from qsdopt.symmetry import FiniteGroup, GroupElement, cyclic_group
from qsdopt.templates import (
    MINIMAX_TEMPLATES,
    TEMPLATE_NAMES,
    build_bayes,
    build_bounded_inconclusive,
    build_error_margin,
    build_inconclusive_minimax,
    build_minimax_bayes,
    build_minimum_error,
    build_plural_sets,
)

FORMAT_VERSION = "qsdopt/1"
ProblemKind = Literal["primal", "minimax"]
T = TypeVar("T")


@dataclass(slots=True)
class ProblemFile:
    kind: ProblemKind
    problem: DiscriminationProblem | MinimaxProblem
    group: FiniteGroup | None = None
    template: dict[str, Any] | None = None
    generated_by: dict[str, Any] | None = None


@dataclass(slots=True)
class SolutionFile:
    povm: Povm
    dual: DualCertificate | None = None
    lambdas: tuple[float, ...] | None = None
    mu: tuple[float, ...] | None = None


def read_document(path: str | Path) -> dict[str, Any]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", str(path)) from exc
    if not isinstance(payload, dict):
        raise ProblemFileError("document must be a JSON object", str(path))
    return payload


def read_problem_file(path: str | Path) -> ProblemFile:
    return parse_problem(read_document(path))


def parse_problem(payload: dict[str, Any]) -> ProblemFile:
    _require_version(payload)
    kind = payload.get("kind")
    if kind not in ("primal", "minimax"):
        raise ProblemFileError("must be 'primal' or 'minimax'", "kind")
    template = payload.get("template")
    if template is not None:
        problem = _problem_from_template(_require(template, dict, "template"), kind)
    elif kind == "primal":
        problem = _primal_from_json(payload)
    else:
        problem = _minimax_from_json(payload)
    group = group_from_json(payload["group"], "group") if payload.get("group") is not None else None
    generated_by = payload.get("generated_by")
    if generated_by is not None:
        generated_by = _require(generated_by, dict, "generated_by")
    return ProblemFile(kind=kind, problem=problem, group=group, template=template, generated_by=generated_by)


def serialize_problem(
    problem: DiscriminationProblem | MinimaxProblem,
    group: FiniteGroup | None = None,
    generated_by: dict[str, Any] | None = None,
) -> dict[str, Any]:
    """Canonical document: raw matrices, every row written as '<='."""
    payload: dict[str, Any] = {"version": FORMAT_VERSION}
    if isinstance(problem, MinimaxProblem):
        payload["kind"] = "minimax"
        payload["dim"] = problem.dim
        payload["criteria"] = [[matrix_to_json(op.matrix) for op in row] for row in problem.criterion_ops]
        payload["offsets"] = list(problem.offsets)
        if problem.criterion_labels:
            payload["criterion_labels"] = list(problem.criterion_labels)
    else:
        payload["kind"] = "primal"
        payload["dim"] = problem.dim
        payload["objective"] = [matrix_to_json(op.matrix) for op in problem.objective_ops]
        payload["value_offset"] = problem.value_offset
    payload["constraints"] = [
        {
            "ops": [matrix_to_json(op.matrix) for op in row],
            "bound": bound,
            "relation": "<=",
            "label": problem.constraint_label(j),
        }
        for j, (row, bound) in enumerate(zip(problem.constraint_ops, problem.constraint_bounds))
    ]
    if problem.outcome_labels:
        payload["outcome_labels"] = list(problem.outcome_labels)
    if group is not None:
        payload["group"] = group_to_json(group)
    if generated_by is not None:
        payload["generated_by"] = generated_by
    return payload


def matrix_to_json(matrix: np.ndarray) -> list[list[list[float]]]:
    return [[[float(entry.real), float(entry.imag)] for entry in row] for row in np.asarray(matrix, dtype=complex)]


def matrix_from_json(payload: Any, field_path: str, dim: int | None = None) -> np.ndarray:
    rows = _require(payload, list, field_path)
    size = len(rows)
    if size == 0 or (dim is not None and size != dim):
        raise ProblemFileError(f"expected {dim or 'a non-empty'} x {dim or 'n'} matrix, got {size} rows", field_path)
    matrix = np.zeros((size, size), dtype=complex)
    for i, row in enumerate(rows):
        entries = _require(row, list, f"{field_path}[{i}]")
        if len(entries) != size:
            raise ProblemFileError(f"row has {len(entries)} entries, expected {size}", f"{field_path}[{i}]")
        for j, entry in enumerate(entries):
            matrix[i, j] = _complex(entry, f"{field_path}[{i}][{j}]")
    return matrix


def operator_from_json(payload: Any, field_path: str, dim: int | None = None) -> HermitianOperator:
    return _guard(lambda: validate_hermitian(matrix_from_json(payload, field_path, dim)), field_path)


def ensemble_to_json(ensemble: StateEnsemble) -> dict[str, Any]:
    return {
        "states": [{"matrix": matrix_to_json(state.op.matrix)} for state in ensemble.states],
        "priors": list(ensemble.priors),
    }


def ensemble_from_json(payload: Any, field_path: str = "ensemble") -> StateEnsemble:
    block = _require(payload, dict, field_path)
    entries = _require(block.get("states"), list, f"{field_path}.states")
    states = [_state_from_json(entry, f"{field_path}.states[{r}]") for r, entry in enumerate(entries)]
    priors = block.get("priors")
    if priors is None:
        priors = [1.0 / len(states)] * len(states)
    values = [_real(p, f"{field_path}.priors[{r}]") for r, p in enumerate(_require(priors, list, f"{field_path}.priors"))]
    return _guard(lambda: StateEnsemble(tuple(states), tuple(values)), field_path)


def read_ensembles(path: str | Path) -> list[StateEnsemble]:
    """An ensemble document, or a document with a 'sets' array of ensembles."""
    payload = read_document(path)
    if "sets" in payload:
        sets = _require(payload["sets"], list, "sets")
        return [ensemble_from_json(entry, f"sets[{k}]") for k, entry in enumerate(sets)]
    return [ensemble_from_json(payload, "ensemble")]


def parse_random_spec(spec: str, seed: int) -> StateEnsemble:
    """'DIM:COUNT[:pure|mixed]' -> seeded random ensemble."""
    parts = spec.split(":")
    if len(parts) not in (2, 3):
        raise ProblemFileError("expected DIM:COUNT[:pure|mixed]", "--random")
    try:
        dim, count = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ProblemFileError("DIM and COUNT must be integers", "--random") from exc
    kind = parts[2] if len(parts) == 3 else "pure"
    return _guard(lambda: random_ensemble(dim, count, kind, seed), "--random")


def group_to_json(group: FiniteGroup) -> dict[str, Any]:
    elements = []
    for g in group:
        entry: dict[str, Any] = {
            "label": g.label,
            "op": matrix_to_json(g.op),
            "antiunitary": g.antiunitary,
            "perm_M": list(g.perm_M),
            "perm_J": list(g.perm_J),
        }
        if g.perm_K is not None:
            entry["perm_K"] = list(g.perm_K)
        elements.append(entry)
    return {"elements": elements}


def group_from_json(payload: Any, field_path: str = "group") -> FiniteGroup:
    block = _require(payload, dict, field_path)
    if "cyclic" in block:
        generator = _element_from_json(block["cyclic"], f"{field_path}.cyclic")
        return _guard(lambda: cyclic_group(generator), f"{field_path}.cyclic")
    entries = _require(block.get("elements"), list, f"{field_path}.elements")
    elements = tuple(_element_from_json(entry, f"{field_path}.elements[{i}]") for i, entry in enumerate(entries))
    return _guard(lambda: FiniteGroup(elements), field_path)


def serialize_solution(
    povm: Povm,
    dual: DualCertificate | None = None,
    mu: Sequence[float] | None = None,
) -> dict[str, Any]:
    payload: dict[str, Any] = {"version": FORMAT_VERSION, "povm": [matrix_to_json(op.matrix) for op in povm.outcomes]}
    if dual is not None:
        payload["dual"] = {"X": matrix_to_json(dual.X.matrix), "lambdas": list(dual.lambdas)}
    if mu is not None:
        payload["mu"] = [float(w) for w in mu]
    return payload


def read_solution_file(path: str | Path, problem: DiscriminationProblem | MinimaxProblem) -> SolutionFile:
    return parse_solution(read_document(path), problem)


def parse_solution(payload: dict[str, Any], problem: DiscriminationProblem | MinimaxProblem) -> SolutionFile:
    """A solution document, or a run report that embeds one under 'solution'."""
    if "solution" in payload and "povm" not in payload:
        payload = _require(payload["solution"], dict, "solution")
    outcomes = _require(payload.get("povm"), list, "povm")
    if len(outcomes) != problem.M:
        raise ProblemFileError(f"expected {problem.M} outcomes, got {len(outcomes)}", "povm")
    ops = tuple(operator_from_json(entry, f"povm[{m}]", problem.dim) for m, entry in enumerate(outcomes))
    povm = Povm(ops, validate=False)
    solution = SolutionFile(povm=povm)
    dual = payload.get("dual")
    if dual is not None:
        block = _require(dual, dict, "dual")
        lambdas = _reals(block.get("lambdas", []), "dual.lambdas", problem.J)
        if "X" in block:
            X = operator_from_json(block["X"], "dual.X", problem.dim)
            solution.dual = _guard(lambda: DualCertificate(X=X, lambdas=lambdas), "dual.lambdas")
        else:
            solution.lambdas = lambdas
    if payload.get("lambdas") is not None:
        solution.lambdas = _reals(payload["lambdas"], "lambdas", problem.J)
    if payload.get("mu") is not None:
        count = problem.K if isinstance(problem, MinimaxProblem) else None
        solution.mu = _reals(payload["mu"], "mu", count)
    return solution


def _primal_from_json(payload: dict[str, Any]) -> DiscriminationProblem:
    dim = _dim(payload)
    objective = _require(payload.get("objective"), list, "objective")
    ops = [operator_from_json(entry, f"objective[{m}]", dim) for m, entry in enumerate(objective)]
    rows = _constraint_rows(payload, dim)
    labels = _labels(payload, "outcome_labels")
    offset = _real(payload.get("value_offset", 0.0), "value_offset")
    return _guard(lambda: canonicalize_equalities(dim, ops, rows, labels, offset), "constraints")


def _minimax_from_json(payload: dict[str, Any]) -> MinimaxProblem:
    dim = _dim(payload)
    criteria = _require(payload.get("criteria"), list, "criteria")
    grid = [
        tuple(operator_from_json(entry, f"criteria[{k}][{m}]", dim) for m, entry in enumerate(_require(row, list, f"criteria[{k}]")))
        for k, row in enumerate(criteria)
    ]
    offsets = _reals(payload.get("offsets", [0.0] * len(grid)), "offsets", len(grid))
    ops, bounds, labels = _guard(lambda: expand_rows(_constraint_rows(payload, dim)), "constraints")
    return _guard(
        lambda: MinimaxProblem(
            dim=dim,
            criterion_ops=tuple(grid),
            offsets=offsets,
            constraint_ops=ops,
            constraint_bounds=bounds,
            outcome_labels=_labels(payload, "outcome_labels"),
            constraint_labels=labels,
            criterion_labels=_labels(payload, "criterion_labels"),
        ),
        "criteria",
    )


def _constraint_rows(payload: dict[str, Any], dim: int) -> list[ConstraintRow]:
    rows = []
    for j, entry in enumerate(_require(payload.get("constraints", []), list, "constraints")):
        path = f"constraints[{j}]"
        block = _require(entry, dict, path)
        ops = _require(block.get("ops"), list, f"{path}.ops")
        relation = block.get("relation", "<=")
        if relation not in ("<=", "=="):
            raise ProblemFileError("relation must be '<=' or '=='", f"{path}.relation")
        rows.append(
            ConstraintRow(
                ops=tuple(operator_from_json(op, f"{path}.ops[{m}]", dim) for m, op in enumerate(ops)),
                bound=_real(block.get("bound"), f"{path}.bound"),
                relation=relation,
                label=str(block.get("label", "")),
            )
        )
    return rows


def _problem_from_template(block: dict[str, Any], kind: ProblemKind) -> DiscriminationProblem | MinimaxProblem:
    name = block.get("name")
    if name not in TEMPLATE_NAMES:
        raise ProblemFileError(f"unknown template {name!r}; expected one of {', '.join(TEMPLATE_NAMES)}", "template.name")
    expected: ProblemKind = "minimax" if name in MINIMAX_TEMPLATES else "primal"
    if kind != expected:
        raise ProblemFileError(f"template {name!r} produces a {expected} problem", "kind")
    params = _require(block.get("params", {}), dict, "template.params")
    if name == "plural-minimax":
        sets = _require(block.get("sets"), list, "template.sets")
        ensembles = [ensemble_from_json(entry, f"template.sets[{k}]") for k, entry in enumerate(sets)]
        return _guard(lambda: build_plural_sets(ensembles), "template.sets")
    ensemble = ensemble_from_json(block.get("ensemble"), "template.ensemble")
    return _guard(lambda: build_from_template(name, ensemble, params), "template.params")


def build_from_template(name: str, ensemble: StateEnsemble, params: dict[str, Any]) -> DiscriminationProblem | MinimaxProblem:
    def number(key: str, default: float | None = None) -> float:
        value = params.get(key, default)
        if value is None:
            raise ProblemFileError(f"template {name!r} needs parameter {key!r}", f"template.params.{key}")
        return _real(value, f"template.params.{key}")

    cost = None
    if params.get("cost") is not None:
        cost = BayesCost(np.array(params["cost"], dtype=float))
    if name == "bayes":
        if cost is None:
            raise ProblemFileError("template 'bayes' needs a 'cost' matrix", "template.params.cost")
        return build_bayes(ensemble, cost)
    if name == "min-error":
        return build_minimum_error(ensemble)
    if name == "error-margin":
        return build_error_margin(ensemble, number("epsilon"))
    if name == "bounded-inconclusive":
        return build_bounded_inconclusive(ensemble, number("p"), number("q", 0.0))
    if name == "minimax-bayes":
        return build_minimax_bayes(ensemble.states, cost)
    if name == "inconclusive-minimax":
        return build_inconclusive_minimax(ensemble.states, number("p"))
    raise ProblemFileError(f"template {name!r} needs state sets, not a single ensemble", "template.name")


def _element_from_json(payload: Any, field_path: str) -> GroupElement:
    block = _require(payload, dict, field_path)
    op = matrix_from_json(block.get("op"), f"{field_path}.op")
    perm_K = block.get("perm_K")
    return _guard(
        lambda: GroupElement(
            label=str(block.get("label", field_path)),
            op=op,
            perm_M=tuple(_require(block.get("perm_M"), list, f"{field_path}.perm_M")),
            perm_J=tuple(_require(block.get("perm_J", []), list, f"{field_path}.perm_J")),
            perm_K=None if perm_K is None else tuple(_require(perm_K, list, f"{field_path}.perm_K")),
            antiunitary=bool(block.get("antiunitary", False)),
        ),
        field_path,
    )


def _state_from_json(payload: Any, field_path: str) -> DensityOperator:
    block = _require(payload, dict, field_path)
    if "ket" in block:
        vector = [_complex(entry, f"{field_path}.ket[{i}]") for i, entry in enumerate(_require(block["ket"], list, f"{field_path}.ket"))]
        return _guard(lambda: ket_state(vector), f"{field_path}.ket")
    matrix = matrix_from_json(block.get("matrix"), f"{field_path}.matrix")
    return _guard(lambda: density_operator(matrix), f"{field_path}.matrix")


def _require_version(payload: dict[str, Any]) -> None:
    version = payload.get("version")
    if version != FORMAT_VERSION:
        raise ProblemFileError(f"unsupported version {version!r}; expected {FORMAT_VERSION!r}", "version")


def _dim(payload: dict[str, Any]) -> int:
    dim = payload.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise ProblemFileError("must be a positive integer", "dim")
    return dim


def _labels(payload: dict[str, Any], key: str) -> tuple[str, ...]:
    return tuple(str(label) for label in _require(payload.get(key, []), list, key))


def _reals(payload: Any, field_path: str, count: int | None = None) -> tuple[float, ...]:
    values = _require(payload, list, field_path)
    if count is not None and len(values) != count:
        raise ProblemFileError(f"expected {count} entries, got {len(values)}", field_path)
    return tuple(_real(value, f"{field_path}[{i}]") for i, value in enumerate(values))


def _real(value: Any, field_path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemFileError(f"expected a number, got {value!r}", field_path)
    return float(value)


def _complex(value: Any, field_path: str) -> complex:
    pair = _require(value, list, field_path)
    if len(pair) != 2:
        raise ProblemFileError(f"expected an [re, im] pair, got {value!r}", field_path)
    return complex(_real(pair[0], f"{field_path}[0]"), _real(pair[1], f"{field_path}[1]"))


def _require(value: Any, expected: type[T], field_path: str) -> T:
    if not isinstance(value, expected):
        raise ProblemFileError(f"expected {expected.__name__}, got {type(value).__name__}", field_path)
    return value


def _guard(build: Callable[[], T], field_path: str) -> T:
    try:
        return build()
    except ProblemFileError:
        raise
    except ValueError as exc:
        raise ProblemFileError(str(exc), field_path) from exc
