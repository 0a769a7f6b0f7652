"""Dynamic soundness checker: preservation and progress over live runs.

The literal engine's configurations are administrative instruction trees;
this module types them.  :func:`run_checked` drives a
:class:`~effwasm.smallstep.LiteralRun` and, between steps, demands:

* **preservation** — the whole configuration still types against the entry
  point's result types, and the store is well-typed: every live
  continuation's context, plugged with a typed hole standing for the
  resumption values, produces its recorded result types; and a context
  captured for tag ``x`` contains no inner handler with a clause for ``x``
  (capture must have stopped at the nearest matching handler);
* **progress** — every non-terminal configuration steps, and a terminal
  state is legitimate: final values carry the expected types, an unhandled
  suspension really has no matching handler left in the configuration, and
  an uncaught exception really has no frame left to unwind.

Typing rules for administrative nodes mirror the source rules:

* a label's body is typed with the label's target types pushed onto the
  label stack, against the node's exit types;
* a frame's body is typed in a fresh context — the frame's own locals, no
  labels, the frame's results as the return target;
* a handler's body is a resumed continuation, so it is typed under the
  bare module context (no locals, labels, or return target leak across a
  handler boundary); its clauses are typed against the position of the
  node itself, in the full surrounding context.

The checker never mutates what it checks: plugging copies structure, and
typing only reads.  Injected faults (see :class:`~effwasm.smallstep.Faults`)
are diagnosed here: a skipped dispatch is caught at the first faulty
capture (store check) or at a false unhandled-suspension terminal
(progress check).  Disabled consumption (``keep_live``) must pass
preservation — one-shot-ness is enforced by the dead-marking at run time,
not by types — which makes it the checker's negative control.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .runtime import (
    AdminFrame,
    AdminHandler,
    AdminLabel,
    CallRefDirect,
    ContRefV,
    DEFAULT_FUEL,
    FuncRefV,
    I32V,
    I64V,
    NullV,
    RunResult,
    Stats,
    Store,
    TrapItem,
    UncaughtThrow,
    UnhandledSuspend,
    Value,
    Values,
    context_handlers,
    plug,
)
from .smallstep import Faults, LiteralRun, NO_FAULTS, StuckError, find_clause
from .syntax import (
    ContHeap,
    FuncHeap,
    I32,
    I64,
    ModuleDef,
    RefType,
    ValType,
)
from .validate import (
    StackShape,
    TypingContext,
    _finish,
    _Invalid,
    check_handler_clause,
    check_instr,
    context_for_module,
    validate_module,
)


@dataclass(frozen=True, slots=True)
class TypedHole:
    """Stands in for the resumption values when typing a stored context."""

    types: tuple[ValType, ...]


class _Violation(Exception):
    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


def value_type(store: Store, v: Value) -> ValType:
    if isinstance(v, I32V):
        return I32
    if isinstance(v, I64V):
        return I64
    if isinstance(v, NullV):
        return RefType(v.heap)
    if isinstance(v, FuncRefV):
        return RefType(FuncHeap(store.module.funcs[v.x].type))
    if isinstance(v, ContRefV):
        return RefType(ContHeap(store.conts[v.a].cont_type()))
    raise _Violation(f"value of unknown kind: {v!r}")


# ---------------------------------------------------------------------------
# Configuration typing (checking mode)


def _type_items(store: Store, C: TypingContext, items, shape: StackShape, path: str) -> None:
    for n, item in enumerate(items):
        here = f"{path}/{n}"
        if isinstance(item, Value):
            shape.push(value_type(store, item))
        elif isinstance(item, TypedHole):
            shape.push(*item.types)
        elif isinstance(item, AdminLabel):
            _type_region(
                store,
                C.with_label(item.types),
                item.body,
                item.exit_types(),
                f"{here}/label",
            )
            shape.push(*item.exit_types())
        elif isinstance(item, AdminFrame):
            local_types = tuple(value_type(store, v) for v in item.frame.locals)
            inner = replace(C.stripped(), locals=local_types, results=item.results)
            _type_region(store, inner, item.body, item.results, f"{here}/frame")
            shape.push(*item.results)
        elif isinstance(item, AdminHandler):
            for h in item.clauses:
                try:
                    check_handler_clause(C, h, item.results)
                except _Invalid as e:
                    raise _Violation(f"{here}/handler: {e.message}") from None
            _type_region(store, C.stripped(), item.body, item.results, f"{here}/handler")
            shape.push(*item.results)
        elif isinstance(item, TrapItem):
            shape.make_polymorphic()
        elif isinstance(item, CallRefDirect):
            try:
                shape.pop(RefType(FuncHeap(item.ft)))
                shape.pop_many(item.ft.params)
            except _Invalid as e:
                raise _Violation(f"{here}: {e.message}") from None
            shape.push(*item.ft.results)
        else:
            try:
                check_instr(C, item, shape, here)
            except _Invalid as e:
                raise _Violation(f"{here}: {e.message}") from None


def _type_region(
    store: Store,
    C: TypingContext,
    items,
    expected: tuple[ValType, ...],
    path: str,
) -> None:
    shape = StackShape([])
    _type_items(store, C, items, shape, path)
    try:
        _finish(shape, tuple(expected), "region")
    except _Invalid as e:
        raise _Violation(f"{path}: {e.message}") from None


def type_config(
    store: Store, code: list, expected: tuple[ValType, ...], path: str = "config"
) -> list[str]:
    """Type a root configuration; return violations (empty = well-typed)."""
    if any(isinstance(item, TrapItem) for item in code):
        return []  # a trapped configuration is terminally sound
    try:
        _type_region(store, context_for_module(store.module), code, expected, path)
    except _Violation as e:
        return [e.message]
    return []


# ---------------------------------------------------------------------------
# Store typing


def check_store(store: Store) -> list[str]:
    """Type every live continuation and check the capture invariant."""
    violations = []
    for a, entry in enumerate(store.conts):
        if entry.ctx is None:
            continue  # consumed: the reference types via its metadata alone
        if entry.capture_tag is not None:
            for wrapper in context_handlers(entry.ctx):
                if find_clause(wrapper.clauses, entry.capture_tag, False) is not None:
                    violations.append(
                        f"cont {a}: context captured for tag {entry.capture_tag} "
                        f"contains an inner handler for that tag — capture must "
                        f"stop at the nearest matching handler"
                    )
        plugged = plug(entry.ctx, [TypedHole(tuple(entry.arg_types))])
        try:
            _type_region(
                store,
                context_for_module(store.module),
                plugged,
                tuple(entry.result_types),
                f"cont {a}",
            )
        except _Violation as e:
            violations.append(e.message)
    return violations


# ---------------------------------------------------------------------------
# Progress-side scans


def _iter_admin_nodes(items):
    for item in items:
        if isinstance(item, (AdminLabel, AdminFrame, AdminHandler)):
            yield item
            yield from _iter_admin_nodes(item.body)


def config_has_matching_handler(code: list, tag: int) -> bool:
    return any(
        isinstance(node, AdminHandler)
        and find_clause(node.clauses, tag, False) is not None
        for node in _iter_admin_nodes(code)
    )


def config_has_frame(code: list) -> bool:
    return any(isinstance(node, AdminFrame) for node in _iter_admin_nodes(code))


# ---------------------------------------------------------------------------
# Checked execution


@dataclass
class SoundnessReport:
    ok: bool
    violations: list[str]
    result: RunResult | None
    output: str
    stats: Stats
    checks: int = 0


def run_checked(
    module: ModuleDef,
    entry: int,
    args: list[Value],
    fuel: int = DEFAULT_FUEL,
    faults: Faults = NO_FAULTS,
    check_every: int = 1,
    trace_cb=None,
) -> SoundnessReport:
    """Run on the literal engine, checking soundness invariants as it goes.

    Stops at the first violation (the faulty state is the interesting one)
    or at the terminal result.  ``check_every`` thins the per-step checks
    for long runs; the initial and terminal states are always checked.
    """
    static_errors = validate_module(module)
    if static_errors:
        return SoundnessReport(
            False,
            [f"static: {e}" for e in static_errors],
            None,
            "",
            Stats(),
        )
    expected = module.funcs[entry].type.results
    run = LiteralRun(module, entry, list(args), fuel=fuel, trace_cb=trace_cb, faults=faults)
    report = SoundnessReport(True, [], None, "", run.stats)

    def check_state(when: str) -> bool:
        found = type_config(run.store, run.code, expected)
        found += check_store(run.store)
        if found:
            report.violations.extend(f"{when}: {v}" for v in found)
        report.checks += 1
        return not found

    if not check_state("initial state"):
        report.ok = False
        report.stats.cont_allocs = len(run.store.conts)
        return report
    while True:
        try:
            result = run.step()
        except StuckError as e:
            report.ok = False
            report.violations.append(
                f"progress: stuck after step {run.stats.steps}: {e}"
            )
            break
        if result is None:
            n = run.stats.steps
            if n % check_every == 0 and not check_state(f"after step {n}"):
                report.ok = False
                break
            continue
        report.result = result
        report.output = run.store.host.output()
        if not check_state("terminal state"):
            report.ok = False
        if isinstance(result, Values):
            got = tuple(value_type(run.store, v) for v in result.values)
            if got != tuple(expected):
                report.ok = False
                report.violations.append(
                    f"terminal state: final values typed {list(map(str, got))}, "
                    f"expected {list(map(str, expected))}"
                )
        elif isinstance(result, UnhandledSuspend):
            if config_has_matching_handler(run.code, result.tag):
                report.ok = False
                report.violations.append(
                    f"progress: run ended with unhandled tag {result.tag} while a "
                    f"matching handler is still present in the configuration"
                )
        elif isinstance(result, UncaughtThrow):
            if config_has_frame(run.code):
                report.ok = False
                report.violations.append(
                    f"progress: run ended with uncaught tag {result.tag} while a "
                    f"frame remains to unwind"
                )
        break
    report.stats.cont_allocs = len(run.store.conts)
    return report
