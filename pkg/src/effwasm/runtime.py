"""Runtime state: values, frames, the store, and reified execution contexts.

A captured continuation is an :data:`ExecContext` — an explicit list of
context *layers*, outermost first.  The encoding alternates region markers
and wrappers::

    [ValuesThen, Wrapper, ValuesThen, Wrapper, ..., Wrapper, ValuesThen]

Each :class:`ValuesThen` is one sequence position: the values already
evaluated to its left, and the instructions remaining to its right.  The
final ``ValuesThen`` surrounds the context's hole.  Wrappers are
:class:`LabelLayer`, :class:`FrameLayer` and :class:`HandlerLayer` — the
three administrative delimiters.  Collapsing the list around a plugged hole
(see :func:`plug`) rebuilds the administrative instruction sequence the
context denotes, which is how the literal small-step engine consumes it;
the abstract machine instead splices the layers directly onto its stack.

The store's continuation table is append-only and addresses are never
reused.  Consuming an entry (``resume``, ``cont.bind``, ``resume_throw``)
frees its context immediately and irrevocably — a second consumption traps.
Each entry keeps its argument/result types (and the tag it was captured on,
if any) after death: stale references still need types, and the soundness
checker uses the capture tag to re-verify the no-inner-handler condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .host import HostState
from .syntax import (
    ContHeap,
    FuncType,
    HandlerClause,
    HeapType,
    I32,
    I64,
    Instr,
    ModuleDef,
    NumType,
    RefType,
    ValType,
)


# ---------------------------------------------------------------------------
# Values


class Value:
    __slots__ = ()


@dataclass(slots=True)
class I32V(Value):
    v: int  # canonical unsigned, 0 .. 2**32 - 1

    def __hash__(self):
        return hash(("i32", self.v))


@dataclass(slots=True)
class I64V(Value):
    v: int  # canonical unsigned, 0 .. 2**64 - 1

    def __hash__(self):
        return hash(("i64", self.v))


@dataclass(slots=True)
class NullV(Value):
    heap: HeapType


@dataclass(slots=True)
class FuncRefV(Value):
    x: int


@dataclass(slots=True)
class ContRefV(Value):
    a: int


def signed(value: int, bits: int) -> int:
    return value - (1 << bits) if value >= 1 << (bits - 1) else value


def render_value(v: Value) -> str:
    if isinstance(v, I32V):
        return str(signed(v.v, 32))
    if isinstance(v, I64V):
        return str(signed(v.v, 64))
    if isinstance(v, NullV):
        return "null"
    if isinstance(v, FuncRefV):
        return f"funcref:{v.x}"
    assert isinstance(v, ContRefV)
    return f"contref:{v.a}"


def value_of_const(const) -> Value:
    """Convert a Const AST node (e.g. an invoke argument) to a Value."""
    return I32V(const.value) if const.type == I32 else I64V(const.value)


def default_value(t: ValType) -> Value:
    """Zero-initialization for declared locals."""
    if t == I32:
        return I32V(0)
    if t == I64:
        return I64V(0)
    assert isinstance(t, RefType)
    return NullV(t.heap)


# ---------------------------------------------------------------------------
# Frames and context layers


@dataclass(slots=True)
class Frame:
    locals: list[Value]


@dataclass(slots=True)
class ValuesThen:
    """One sequence position inside a context: values left of it, code right."""

    values: list[Value]
    rest: tuple  # tuple of code items (instructions, values, admin nodes)


@dataclass(slots=True)
class LabelLayer:
    """A label delimiter.  ``types`` is what a branch to it delivers (block
    results / loop params); ``cont`` is the replay code of a loop (empty for
    blocks), from which the label's exit types are also derived."""

    types: tuple[ValType, ...]
    cont: tuple[Instr, ...]

    @property
    def arity(self) -> int:
        return len(self.types)

    def exit_types(self) -> tuple[ValType, ...]:
        if self.cont:
            return self.cont[0].bt.results  # type: ignore[union-attr]
        return self.types


@dataclass(slots=True)
class FrameLayer:
    frame: Frame
    results: tuple[ValType, ...]


@dataclass(slots=True)
class HandlerLayer:
    clauses: tuple[HandlerClause, ...]
    results: tuple[ValType, ...]


Wrapper = Union[LabelLayer, FrameLayer, HandlerLayer]

# Alternating [ValuesThen, Wrapper, ..., Wrapper, ValuesThen]; see module doc.
ExecContext = list


def single_region(values: list[Value], rest: tuple) -> ExecContext:
    return [ValuesThen(values, rest)]


# ---------------------------------------------------------------------------
# Administrative code items (literal-engine configurations)


@dataclass(slots=True)
class AdminLabel:
    types: tuple[ValType, ...]
    cont: tuple[Instr, ...]
    body: list

    def exit_types(self) -> tuple[ValType, ...]:
        if self.cont:
            return self.cont[0].bt.results  # type: ignore[union-attr]
        return self.types


@dataclass(slots=True)
class AdminFrame:
    frame: Frame
    results: tuple[ValType, ...]
    body: list


@dataclass(slots=True)
class AdminHandler:
    clauses: tuple[HandlerClause, ...]
    results: tuple[ValType, ...]
    body: list


@dataclass(slots=True)
class TrapItem:
    reason: str


@dataclass(frozen=True, slots=True)
class CallRefDirect(Instr):
    """Administrative ``call_ref`` carrying its function type directly; it
    appears only inside contexts built by ``cont.new`` (the continuation's
    pristine body), never in source programs."""

    ft: FuncType


def plug(ctx: ExecContext, hole_items: list) -> list:
    """Collapse a context around ``hole_items`` into an administrative
    instruction sequence (fresh mutable lists throughout)."""
    assert len(ctx) % 2 == 1
    inner: ValuesThen = ctx[-1]
    items: list = [*inner.values, *hole_items, *inner.rest]
    for k in range(len(ctx) - 2, 0, -2):
        wrapper = ctx[k]
        vt: ValuesThen = ctx[k - 1]
        if isinstance(wrapper, LabelLayer):
            node: object = AdminLabel(wrapper.types, wrapper.cont, items)
        elif isinstance(wrapper, FrameLayer):
            node = AdminFrame(wrapper.frame, wrapper.results, items)
        else:
            assert isinstance(wrapper, HandlerLayer)
            node = AdminHandler(wrapper.clauses, wrapper.results, items)
        items = [*vt.values, node, *vt.rest]
    return items


def context_handlers(ctx: ExecContext):
    """Iterate all HandlerLayer wrappers in a context (soundness checks)."""
    for k in range(1, len(ctx), 2):
        if isinstance(ctx[k], HandlerLayer):
            yield ctx[k]


# ---------------------------------------------------------------------------
# The store


@dataclass(slots=True)
class ContEntry:
    arg_types: tuple[ValType, ...]
    result_types: tuple[ValType, ...]
    ctx: Optional[ExecContext]  # None once consumed
    capture_tag: Optional[int] = None  # tag index if captured by suspend

    @property
    def alive(self) -> bool:
        return self.ctx is not None

    def cont_type(self) -> FuncType:
        return FuncType(self.arg_types, self.result_types)


class LinearityViolation(Exception):
    pass


@dataclass(slots=True)
class Store:
    module: ModuleDef
    conts: list[ContEntry] = field(default_factory=list)
    host: HostState = field(default_factory=HostState)

    def alloc_cont(
        self,
        ctx: ExecContext,
        args: tuple[ValType, ...],
        results: tuple[ValType, ...],
        capture_tag: Optional[int] = None,
    ) -> int:
        self.conts.append(ContEntry(args, results, ctx, capture_tag))
        return len(self.conts) - 1

    def consume_cont(self, a: int) -> ExecContext:
        entry = self.conts[a]
        if entry.ctx is None:
            raise LinearityViolation(f"continuation {a} already consumed")
        ctx, entry.ctx = entry.ctx, None
        return ctx


# ---------------------------------------------------------------------------
# Run results, statistics, trace events


@dataclass(frozen=True, slots=True)
class StepEvent:
    rule: str
    detail: str = ""


class RunResult:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Values(RunResult):
    values: tuple[Value, ...]


@dataclass(frozen=True, slots=True)
class Trap(RunResult):
    reason: str


@dataclass(frozen=True, slots=True)
class UncaughtThrow(RunResult):
    tag: int
    payload: tuple[Value, ...]


@dataclass(frozen=True, slots=True)
class UnhandledSuspend(RunResult):
    tag: int
    payload: tuple[Value, ...]


@dataclass(slots=True)
class Stats:
    steps: int = 0
    resumes: int = 0
    suspends: int = 0
    cont_allocs: int = 0


DEFAULT_FUEL = 50_000_000

TRAP_CONSUMED = "continuation already consumed"
TRAP_NULL_FUNC = "null function reference"
TRAP_NULL_CONT = "null continuation reference"
TRAP_UNREACHABLE = "unreachable"
TRAP_FUEL = "fuel exhausted"


def describe_result(r: RunResult, module: ModuleDef) -> str:
    """One-line diagnostic for non-value results (CLI stderr)."""
    if isinstance(r, Trap):
        return f"trap: {r.reason}"
    if isinstance(r, UnhandledSuspend):
        return f"trap: unhandled tag {tag_name(module, r.tag)}"
    if isinstance(r, UncaughtThrow):
        return f"uncaught exception: {tag_name(module, r.tag)}"
    assert isinstance(r, Values)
    return "values"


def tag_name(module: ModuleDef, x: int) -> str:
    if 0 <= x < len(module.tags) and module.tags[x].name:
        return module.tags[x].name  # includes the leading '$'
    return str(x)
