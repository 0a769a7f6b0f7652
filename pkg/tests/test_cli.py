"""Command-line interface: exit codes, stream separation, report formats."""

import re
import subprocess
import sys

import pytest

from effwasm import corpus as corpus_mod
from effwasm import interp
from effwasm.cli import main

CASES = {c.name: c for c in corpus_mod.iter_cases(corpus_mod.default_root())}


def wat(name: str) -> str:
    return str(CASES[name].wat_path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# run


def test_run_prints_program_output_only(capsys):
    code, out, err = run_cli(capsys, "run", wat("basics/range"))
    assert code == 0
    assert out == "10 11 12 13\n"
    assert err == ""


def test_run_trap_diagnostics_go_to_stderr(capsys):
    code, out, err = run_cli(capsys, "run", wat("coroutines/unhandled_yield"))
    assert code == 1
    assert out == "10\n"
    assert "unhandled tag $yield" in err


def test_run_invoke_with_arguments(capsys):
    code, out, err = run_cli(
        capsys, "run", wat("basics/sum_until"), "--invoke", "sum_until", "--arg", "11"
    )
    assert code == 0
    assert out == "55\n"


def test_run_invoke_unknown_function(capsys):
    code, out, err = run_cli(capsys, "run", wat("basics/range"), "--invoke", "nosuch")
    assert code == 4
    assert out == ""
    assert "no function named $nosuch" in err


def test_run_invoke_bad_argument(capsys):
    code, _, err = run_cli(
        capsys, "run", wat("basics/sum_until"), "--invoke", "sum_until", "--arg", "x"
    )
    assert code == 4
    assert "not an integer" in err


def test_run_missing_file(capsys):
    code, out, err = run_cli(capsys, "run", "/nonexistent/p.wat")
    assert code == 4
    assert "cannot read /nonexistent/p.wat" in err


def test_run_parse_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.wat"
    bad.write_text("(module (func $f (frobnicate)))")
    code, out, err = run_cli(capsys, "run", str(bad))
    assert code == 3
    assert out == ""
    assert "parse error" in err


def test_run_validation_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.wat"
    bad.write_text("(module (func $f (result i32)) (start $f))")
    code, out, err = run_cli(capsys, "run", str(bad))
    assert code == 2
    assert "validation error" in err


def test_run_fuel_exhaustion_exit_code(capsys):
    code, out, err = run_cli(capsys, "run", wat("basics/range"), "--fuel", "3")
    assert code == 4
    assert "fuel" in err


def test_run_trace_and_stats_on_stderr(capsys):
    code, out, err = run_cli(capsys, "run", wat("basics/range"), "--trace")
    assert code == 0
    assert out == "10 11 12 13\n"
    lines = err.splitlines()
    trace = [l for l in lines if l.startswith("#")]
    assert trace[0].startswith("#1 ")
    assert re.fullmatch(r"#\d+ [a-z0-9-]+( .*)?", trace[0])
    assert [int(l.split()[0][1:]) for l in trace] == list(range(1, len(trace) + 1))
    stats = [l for l in lines if l.startswith("stats[")]
    assert len(stats) == 1
    assert re.fullmatch(
        r"stats\[0\]: steps=\d+ resumes=\d+ suspends=\d+ cont_allocs=\d+", stats[0]
    )


def test_run_check_soundness_clean(capsys):
    code, out, err = run_cli(
        capsys, "run", wat("coroutines/two_tasks"), "--check-soundness"
    )
    assert code == 0
    assert out == "10 11 12 13 20 21 22 23\n"
    assert err == ""


def test_run_small_step_audit(capsys):
    code, out, err = run_cli(
        capsys, "run", wat("coroutines/scheduler_static"), "--small-step-audit"
    )
    assert code == 0
    assert out == "10 20 11 21 12 22 13 23\n"


def test_run_modes_are_mutually_exclusive(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", wat("basics/range"), "--check-soundness", "--small-step-audit"])
    assert exc.value.code == 2


def test_run_compiled_core_flag(capsys):
    if not interp.kernel_is_compiled():
        pytest.skip("compiled core not built")
    code, out, _ = run_cli(
        capsys, "run", wat("coroutines/fork"), "--core", "compiled"
    )
    assert code == 0
    assert out == CASES["coroutines/fork"].expected_stdout


# ---------------------------------------------------------------------------
# bench


def test_bench_report_lines_exact(capsys):
    code, out, err = run_cli(
        capsys,
        "bench",
        "--coroutines", "7",
        "--requests", "23",
        "--work", "5",
        "--core", "pure",
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "core: pure"
    assert lines[1] == "coroutines: 7"
    assert lines[2] == "requests: 23"
    assert lines[3] == "work: 5"
    assert re.fullmatch(r"wall_ms: \d+\.\d", lines[4])
    assert re.fullmatch(r"steps: \d+", lines[5])
    assert lines[6] == "resumes: 46"
    assert lines[7] == "suspends: 23"
    assert lines[8] == "continuation_allocations: 46"
    assert len(lines) == 9


def test_bench_compare_cores(capsys):
    if not interp.kernel_is_compiled():
        pytest.skip("compiled core not built")
    code, out, _ = run_cli(
        capsys,
        "bench",
        "--coroutines", "5",
        "--requests", "40",
        "--work", "10",
        "--compare-cores",
    )
    assert code == 0
    blocks = out.strip().split("\n\n")
    assert len(blocks) == 3
    assert blocks[0].splitlines()[0] == "core: pure"
    assert blocks[1].splitlines()[0] == "core: compiled"
    # both cores execute the identical instruction stream
    steps = [b.splitlines()[5] for b in blocks[:2]]
    assert steps[0] == steps[1]
    assert re.fullmatch(r"speedup: \d+\.\d\dx \(compiled vs pure\)", blocks[2])


def test_bench_rejects_nonpositive_sizes(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--coroutines", "0"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# corpus


def test_corpus_listing(capsys):
    code, out, err = run_cli(capsys, "corpus")
    assert code == 0
    lines = out.splitlines()
    assert lines[-1] == f"{len(CASES)}/{len(CASES)} cases passed"
    for name in CASES:
        assert f"PASS {name}" in lines


def test_corpus_audit_mode(capsys):
    code, out, _ = run_cli(capsys, "corpus", "--audit")
    assert code == 0
    assert out.splitlines()[-1].endswith("cases passed")


def test_corpus_missing_directory(capsys):
    code, _, err = run_cli(capsys, "corpus", "/nonexistent")
    assert code == 4
    assert "no corpus directory" in err


# ---------------------------------------------------------------------------
# module entry point


def test_python_dash_m_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "effwasm", "run", wat("basics/values")],
        capture_output=True,
        text=True,
        env={"PYTHONPATH": "src", "PATH": "/usr/bin:/bin"},
        cwd=str(CASES["basics/values"].wat_path.parents[2]),
    )
    assert proc.returncode == CASES["basics/values"].expect_exit
    assert proc.stdout == CASES["basics/values"].expected_stdout
