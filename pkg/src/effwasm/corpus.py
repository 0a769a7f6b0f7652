"""Golden-output corpus: discovery, execution, and comparison.

A corpus case is a ``<section>/<name>.wat`` source file next to a
``.expected`` file holding the exact stdout bytes the program must
produce.  The source carries two comment headers:

* ``;; expect-exit: N`` — the exit code the run must end with;
* ``;; note: ...`` — a one-line description.

Execution semantics match the ``run`` CLI subcommand: each ``(invoke ...)``
form runs against a fresh instance; a script with no invocations runs the
module's start function.  Per invocation, stdout gets one line of host
print output (when non-empty) and one line of invocation results (when
non-empty); diagnostics for traps go to the caller as strings, never into
stdout.  The same runner backs the ``corpus`` CLI subcommand and the test
suite, which additionally runs every case in audit mode (both engines must
agree) — so the goldens pin down both implementations at once.
"""

from __future__ import annotations

import pathlib
from dataclasses import dataclass, field

from . import interp
from .runtime import (
    DEFAULT_FUEL,
    I32V,
    I64V,
    TRAP_FUEL,
    Trap,
    Values,
    describe_result,
    render_value,
    value_of_const,
)
from .syntax import I32, I64
from .text import ParseError, parse_script
from .validate import validate_module

EXIT_OK = 0
EXIT_FAULT = 1  # trap, unhandled suspension, uncaught exception
EXIT_INVALID = 2
EXIT_PARSE = 3
EXIT_INTERNAL = 4  # fuel exhaustion, missing entry point, engine errors


@dataclass(frozen=True)
class CorpusCase:
    name: str  # "coroutines/fork"
    wat_path: pathlib.Path
    expected_path: pathlib.Path
    expect_exit: int
    note: str

    @property
    def expected_stdout(self) -> str:
        return self.expected_path.read_text()


@dataclass
class CaseRun:
    stdout: str
    exit_code: int
    diagnostics: list[str] = field(default_factory=list)
    stats: list = field(default_factory=list)  # one Stats per completed invocation


def default_root() -> pathlib.Path:
    """The corpus directory of a source checkout (two levels above the
    package: ``<repo>/corpus``)."""
    return pathlib.Path(__file__).resolve().parents[2] / "corpus"


def parse_headers(text: str) -> tuple[int | None, str]:
    """Extract ``;; expect-exit:`` and ``;; note:`` from leading comments."""
    expect_exit = None
    note = ""
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped.startswith(";;"):
            if stripped:
                break
            continue
        comment = stripped[2:].strip()
        if comment.startswith("expect-exit:"):
            expect_exit = int(comment.split(":", 1)[1].strip())
        elif comment.startswith("note:"):
            note = comment.split(":", 1)[1].strip()
    return expect_exit, note


def iter_cases(root: pathlib.Path | None = None) -> list[CorpusCase]:
    root = pathlib.Path(root) if root is not None else default_root()
    cases = []
    for wat in sorted(root.rglob("*.wat")):
        text = wat.read_text()
        expect_exit, note = parse_headers(text)
        if expect_exit is None:
            raise ValueError(f"{wat}: missing ';; expect-exit:' header")
        cases.append(
            CorpusCase(
                name=wat.relative_to(root).with_suffix("").as_posix(),
                wat_path=wat,
                expected_path=wat.with_suffix(".expected"),
                expect_exit=expect_exit,
                note=note,
            )
        )
    return cases


def _parse_cli_args(module, func_idx: int, raw: tuple[str, ...]) -> list:
    """Convert ``--arg`` strings to values typed by the target signature."""
    params = module.funcs[func_idx].type.params
    if len(raw) != len(params):
        raise ValueError(
            f"function takes {len(params)} argument(s), {len(raw)} given"
        )
    values = []
    for text, t in zip(raw, params):
        if t == I32:
            bits = 32
        elif t == I64:
            bits = 64
        else:
            raise ValueError(f"cannot pass a {t} argument on the command line")
        try:
            v = int(text, 0)
        except ValueError:
            raise ValueError(f"not an integer: {text!r}") from None
        v &= (1 << bits) - 1
        values.append(I32V(v) if bits == 32 else I64V(v))
    return values


def run_script_text(
    text: str,
    *,
    core: str = "auto",
    audit: bool = False,
    check_soundness: bool = False,
    fuel: int = DEFAULT_FUEL,
    invoke: str | None = None,
    invoke_args: tuple[str, ...] = (),
    trace_cb=None,
) -> CaseRun:
    """Parse, validate, and run a script; build its stdout and exit code.

    ``invoke`` overrides the script's own invocations with a single call of
    the named (or indexed) function, passing ``invoke_args`` converted to
    the function's parameter types.
    """
    try:
        module, invocations = parse_script(text)
    except ParseError as e:
        return CaseRun("", EXIT_PARSE, [f"parse error: {e}"])
    errors = validate_module(module)
    if errors:
        return CaseRun("", EXIT_INVALID, [f"validation error: {e}" for e in errors])
    if invoke is not None:
        try:
            func_idx = interp.resolve_entry(module, invoke)
            runs = [(func_idx, _parse_cli_args(module, func_idx, tuple(invoke_args)))]
        except (LookupError, ValueError) as e:
            return CaseRun("", EXIT_INTERNAL, [str(e)])
    else:
        runs = [
            (inv.func, [value_of_const(c) for c in inv.args]) for inv in invocations
        ]
        if not runs:
            if module.start is None:
                return CaseRun(
                    "",
                    EXIT_INTERNAL,
                    ["no entry point: no start function and no invocations"],
                )
            runs = [(module.start, [])]
    execute = interp.run_audit if audit else interp.run
    lines: list[str] = []
    all_stats: list = []

    def finish(code: int, diags: list[str]) -> CaseRun:
        return CaseRun("".join(line + "\n" for line in lines), code, diags, all_stats)

    for func_idx, args in runs:
        if check_soundness:
            report = run_soundness(module, func_idx, args, fuel=fuel, trace_cb=trace_cb)
            all_stats.append(report.stats)
            if report.violations:
                return finish(
                    EXIT_INTERNAL,
                    [f"soundness violation: {v}" for v in report.violations],
                )
            result, output = report.result, report.output
        else:
            try:
                result, output, stats = execute(
                    module, func_idx, args, fuel=fuel, core=core, trace_cb=trace_cb
                )
            except interp.AuditError as e:
                return finish(EXIT_INTERNAL, [f"audit failure: {e}"])
            all_stats.append(stats)
        if output:
            lines.append(output)
        if isinstance(result, Values):
            if result.values:
                lines.append(" ".join(render_value(v) for v in result.values))
            continue
        diag = describe_result(result, module)
        if isinstance(result, Trap) and result.reason == TRAP_FUEL:
            return finish(EXIT_INTERNAL, [diag])
        return finish(EXIT_FAULT, [diag])
    return finish(EXIT_OK, [])


def run_soundness(module, entry: int, args: list, *, fuel: int, trace_cb=None):
    """Late import indirection: meta depends on the engines, not vice versa."""
    from .meta import run_checked

    return run_checked(module, entry, args, fuel=fuel, trace_cb=trace_cb)


def run_case(case: CorpusCase, *, core: str = "auto", audit: bool = False) -> CaseRun:
    return run_script_text(case.wat_path.read_text(), core=core, audit=audit)


def check_case(
    case: CorpusCase, *, core: str = "auto", audit: bool = False
) -> tuple[bool, CaseRun, str]:
    """Run one case against its golden output.  Returns (ok, run, message)."""
    run = run_case(case, core=core, audit=audit)
    problems = []
    expected = case.expected_stdout
    if run.stdout != expected:
        problems.append(f"stdout {run.stdout!r} != expected {expected!r}")
    if run.exit_code != case.expect_exit:
        problems.append(f"exit {run.exit_code} != expected {case.expect_exit}")
    return (not problems, run, "; ".join(problems))
