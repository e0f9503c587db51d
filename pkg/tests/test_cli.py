from __future__ import annotations

from contextlib import redirect_stderr, redirect_stdout
import io
import json
from pathlib import Path
import tempfile
import unittest

from builders import trine, trine_group
from qsdopt.cli import (
    EXIT_CERTIFICATE,
    EXIT_COVARIANCE,
    EXIT_INFEASIBLE,
    EXIT_INPUT,
    EXIT_OK,
    BatchProgress,
    build_parser,
    merge_cli_with_config,
    run_certify,
    run_minimax,
    run_solve,
    run_symmetrize,
    run_template,
)
from qsdopt.config import Config
from qsdopt.models import RunReport
from qsdopt.problem_file import serialize_problem
from qsdopt.templates import build_minimum_error

PLUS_ENSEMBLE = {"states": [{"ket": [[1, 0], [0, 0]]}, {"ket": [[1, 0], [1, 0]]}], "priors": [0.5, 0.5]}


def _run(handler, argv: list[str]) -> tuple[int, str]:
    args = build_parser().parse_args(argv)
    stderr = io.StringIO()
    with redirect_stderr(stderr), redirect_stdout(io.StringIO()):
        code = handler(args)
    return code, stderr.getvalue()


class CLITests(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self.ensemble = self.root / "plus.json"
        self.ensemble.write_text(json.dumps(PLUS_ENSEMBLE), encoding="utf-8")

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def _template(self, name: str, out: Path, *extra: str) -> int:
        code, _ = _run(run_template, ["template", name, "--ensemble", str(self.ensemble), "--output", str(out), *extra])
        return code

    def test_version_flag(self) -> None:
        with self.assertRaises(SystemExit) as exc, redirect_stdout(io.StringIO()):
            build_parser().parse_args(["--version"])
        self.assertEqual(exc.exception.code, 0)

    def test_usage_error_exits_with_input_code(self) -> None:
        with self.assertRaises(SystemExit) as exc, redirect_stderr(io.StringIO()):
            build_parser().parse_args(["solve"])
        self.assertEqual(exc.exception.code, EXIT_INPUT)

    def test_flags_merge_into_config(self) -> None:
        args = build_parser().parse_args(
            ["solve", "p.json", "--tol-gap", "1e-9", "--max-iters", "50", "--jobs", "3", "--format", "pretty", "--seed", "11"]
        )
        merged = merge_cli_with_config(args, Config())
        self.assertEqual(merged.solver.gap_tol, 1e-9)
        self.assertEqual(merged.solver.max_iters, 50)
        self.assertEqual(merged.run.jobs, 3)
        self.assertEqual(merged.run.seed, 11)
        self.assertEqual(merged.report.output_format, "pretty")

    def test_template_solve_certify(self) -> None:
        problem = self.root / "helstrom.json"
        report = self.root / "report.json"
        code, stderr = _run(run_template, ["template", "min-error", "--random", "2:2", "--seed", "7", "--output", str(problem)])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("[summary] command=template name=min-error", stderr)

        code, stderr = _run(run_solve, ["solve", str(problem), "--output", str(report)])
        self.assertEqual(code, EXIT_OK, stderr)
        payload = json.loads(report.read_text(encoding="utf-8"))
        self.assertEqual(payload["status"], "Optimal")
        self.assertTrue(payload["certificate"]["passed"])
        self.assertAlmostEqual(payload["value"], payload["diagnostics"]["helstrom"], delta=1e-6)

        certified = self.root / "certified.json"
        code, _ = _run(run_certify, ["certify", str(problem), str(report), "--output", str(certified)])
        self.assertEqual(code, EXIT_OK)

        first, second = payload["solution"]["povm"]
        payload["solution"]["povm"] = [second, first]
        tampered = self.root / "tampered.json"
        tampered.write_text(json.dumps(payload), encoding="utf-8")
        code, _ = _run(run_certify, ["certify", str(problem), str(tampered), "--output", str(certified)])
        self.assertEqual(code, EXIT_CERTIFICATE)

    def test_unreachable_success_floor_is_infeasible(self) -> None:
        problem = self.root / "floor.json"
        self.assertEqual(self._template("bounded-inconclusive", problem, "--p", "0.05", "--q", "0.9"), EXIT_OK)
        code, _ = _run(run_solve, ["solve", str(problem), "--output", str(self.root / "floor-report.json")])
        self.assertEqual(code, EXIT_INFEASIBLE)

    def test_diagnose_reports_largest_floor(self) -> None:
        problem = self.root / "diagnosed.json"
        code, stderr = _run(
            run_template,
            ["template", "bounded-inconclusive", "--ensemble", str(self.ensemble), "--p", "0.1", "--diagnose", "--output", str(problem)],
        )
        self.assertEqual(code, EXIT_OK)
        self.assertIn("q_prime=", stderr)
        document = json.loads(problem.read_text(encoding="utf-8"))
        self.assertIn("q_prime", document["generated_by"]["diagnostics"])

    def test_diagnose_needs_bounded_inconclusive(self) -> None:
        self.assertEqual(self._template("min-error", self.root / "x.json", "--diagnose"), EXIT_INPUT)

    def test_minimax_command(self) -> None:
        problem = self.root / "minimax.json"
        report = self.root / "minimax-report.json"
        self.assertEqual(self._template("minimax-bayes", problem), EXIT_OK)
        code, stderr = _run(run_minimax, ["minimax", str(problem), "--saddle-samples", "10", "--output", str(report)])
        self.assertEqual(code, EXIT_OK, stderr)
        payload = json.loads(report.read_text(encoding="utf-8"))
        self.assertTrue(payload["minimax_check"]["passed"])
        self.assertAlmostEqual(payload["value"], -(1.0 - 0.8535534), delta=1e-6)

    def test_minimax_command_refuses_primal_problem(self) -> None:
        problem = self.root / "primal.json"
        self.assertEqual(self._template("min-error", problem), EXIT_OK)
        code, stderr = _run(run_minimax, ["minimax", str(problem), "--output", str(self.root / "r.json")])
        self.assertEqual(code, EXIT_INPUT)
        self.assertIn("qsdopt solve", stderr)

    def test_symmetrize_trine(self) -> None:
        problem = self.root / "trine.json"
        report = self.root / "trine-report.json"
        problem.write_text(json.dumps(serialize_problem(build_minimum_error(trine()), trine_group())), encoding="utf-8")
        code, stderr = _run(run_symmetrize, ["symmetrize", str(problem), "--output", str(report)])
        self.assertEqual(code, EXIT_OK, stderr)
        payload = json.loads(report.read_text(encoding="utf-8"))
        self.assertAlmostEqual(payload["value"], 2.0 / 3.0, delta=1e-6)
        self.assertTrue(payload["objective_preserved"])

    def test_symmetrize_refuses_wrong_group(self) -> None:
        problem = self.root / "broken.json"
        document = serialize_problem(build_minimum_error(trine()), trine_group(perm_M=(0, 2, 1)))
        problem.write_text(json.dumps(document), encoding="utf-8")
        code, _ = _run(run_symmetrize, ["symmetrize", str(problem), "--output", str(self.root / "r.json")])
        self.assertEqual(code, EXIT_COVARIANCE)

    def test_symmetrize_needs_group(self) -> None:
        problem = self.root / "plain.json"
        self.assertEqual(self._template("min-error", problem), EXIT_OK)
        code, _ = _run(run_symmetrize, ["symmetrize", str(problem)])
        self.assertEqual(code, EXIT_INPUT)

    def test_batch_directory_reports_worst_exit(self) -> None:
        batch = self.root / "batch"
        batch.mkdir()
        self.assertEqual(self._template("min-error", batch / "a.json"), EXIT_OK)
        self.assertEqual(self._template("bounded-inconclusive", batch / "b.json", "--p", "0.05", "--q", "0.9"), EXIT_OK)
        out = self.root / "batch-report.json"
        code, stderr = _run(run_solve, ["solve", str(batch), "--jobs", "2", "--no-progress", "--output", str(out)])
        self.assertEqual(code, EXIT_INFEASIBLE)
        payload = json.loads(out.read_text(encoding="utf-8"))
        self.assertEqual(len(payload["runs"]), 2)
        self.assertEqual(payload["exit_code"], EXIT_INFEASIBLE)
        self.assertEqual([run["exit_code"] for run in payload["runs"]], [EXIT_OK, EXIT_INFEASIBLE])
        self.assertIn("files=2 failed=1", stderr)

    def test_batch_progress_lists_each_file_status(self) -> None:
        batch = self.root / "batch"
        batch.mkdir()
        self.assertEqual(self._template("min-error", batch / "a.json"), EXIT_OK)
        self.assertEqual(self._template("bounded-inconclusive", batch / "b.json", "--p", "0.05", "--q", "0.9"), EXIT_OK)
        code, stderr = _run(run_solve, ["solve", str(batch), "--progress", "--output", str(self.root / "r.json")])
        self.assertEqual(code, EXIT_INFEASIBLE)
        self.assertIn("[batch] 1/2 a.json: Optimal exit=0 failed=0", stderr)
        self.assertIn(f"[batch] 2/2 b.json: Infeasible exit={EXIT_INFEASIBLE} failed=1", stderr)

    def test_missing_path(self) -> None:
        code, stderr = _run(run_solve, ["solve", str(self.root / "absent.json")])
        self.assertEqual(code, EXIT_INPUT)
        self.assertIn("Path not found", stderr)

    def test_invalid_config_is_rejected(self) -> None:
        config = self.root / "bad.toml"
        config.write_text("[run]\njobs = 0\n", encoding="utf-8")
        problem = self.root / "p.json"
        self.assertEqual(self._template("min-error", problem), EXIT_OK)
        code, stderr = _run(run_solve, ["solve", str(problem), "--config", str(config)])
        self.assertEqual(code, EXIT_INPUT)
        self.assertIn("run.jobs must be >= 1", stderr)


class _Terminal(io.StringIO):
    def isatty(self) -> bool:
        return True


class BatchProgressTests(unittest.TestCase):
    def _runs(self) -> list[RunReport]:
        return [
            RunReport(command="solve", status="Optimal", exit_code=EXIT_OK, input_path="/tmp/long/a.json"),
            RunReport(command="solve", status="Infeasible", exit_code=EXIT_INFEASIBLE, input_path="/tmp/b.json"),
        ]

    def test_plain_stream_gets_one_line_per_file(self) -> None:
        stream = io.StringIO()
        progress = BatchProgress(stream, 2, enabled=True)
        for run in self._runs():
            progress.record(run)
        progress.close()
        self.assertEqual(
            stream.getvalue().splitlines(),
            ["[batch] 1/2 a.json: Optimal exit=0 failed=0", f"[batch] 2/2 b.json: Infeasible exit={EXIT_INFEASIBLE} failed=1"],
        )
        self.assertEqual(progress.failed, 1)

    def test_terminal_line_is_redrawn_in_place(self) -> None:
        stream = _Terminal()
        progress = BatchProgress(stream, 2)
        for run in self._runs():
            progress.record(run)
        progress.close()
        output = stream.getvalue()
        self.assertEqual(output.count("\r"), 2)
        self.assertTrue(output.endswith("\n"))
        self.assertEqual(output.count("\n"), 1)

    def test_disabled_progress_still_counts_failures(self) -> None:
        stream = io.StringIO()
        progress = BatchProgress(stream, 2)
        for run in self._runs():
            progress.record(run)
        progress.close()
        self.assertEqual(stream.getvalue(), "")
        self.assertEqual((progress.done, progress.failed), (2, 1))



if __name__ == "__main__":
    unittest.main()
