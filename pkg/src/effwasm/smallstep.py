"""Literal small-step engine: one reduction rule per step.

This engine executes configurations exactly as the reduction relation
defines them: the code is a mutable administrative instruction sequence,
and each step decomposes it from the root to find the innermost-leftmost
redex, then applies a single rule by rewriting in place.  It exists for
fidelity — the audit mode replays programs on it and compares against the
abstract machine (:mod:`effwasm._kernel`), and the soundness checker types
its intermediate configurations — so clarity beats speed throughout.

Key rule shapes (each one application):

* ``(label_n{i1*} v* v^n (br 0) i2*)  ->  v^n i1*`` — branch hits its
  target label: keep the top ``n`` values, run the label's replay code.
* ``(label_n{i1*} v* (br l+1) i2*)    ->  v* (br l)`` — an intermediate
  label is peeled off; the values accumulated inside travel outward.
* ``(handler{h*} v* (br l) i2*)       ->  v* (br l)`` — a handler never
  shifts label indices.
* ``(frame{f} E[v^n (throw x)])       ->  v^n (throw x)`` — throw unwinds
  one whole frame per step; labels and handlers inside are absorbed.
* ``(handler{h*} E^x[v^n (suspend x)]) -> v^n (ref.cont a) (br l)`` with
  the context ``E^x`` (no inner handler for ``x``) captured into a fresh
  continuation ``a``; the clause ``(on x l)`` is the first match.
* ``resume`` / ``cont.bind`` / ``resume_throw`` consume their continuation
  atomically — a consumed entry traps with "continuation already consumed".

Value instructions (``*.const``, ``ref.null``, ``ref.func``) are values
already and cost no step; they are normalized to Value objects while
scanning.

Fault injection (for the soundness checker's acceptance tests) is wired
here and only here: ``skip_clause`` makes dispatch ignore the first
matching handler clause; ``keep_live`` skips Dead-marking on consumption.
"""

from __future__ import annotations

from dataclasses import dataclass

from .host import HostTrap, call_builtin
from .runtime import (
    AdminFrame,
    AdminHandler,
    AdminLabel,
    CallRefDirect,
    ContEntry,
    ContRefV,
    DEFAULT_FUEL,
    Frame,
    FrameLayer,
    FuncRefV,
    HandlerLayer,
    I32V,
    I64V,
    LabelLayer,
    NullV,
    RunResult,
    Stats,
    StepEvent,
    Store,
    TRAP_CONSUMED,
    TRAP_FUEL,
    TRAP_NULL_CONT,
    TRAP_NULL_FUNC,
    TRAP_UNREACHABLE,
    Trap,
    TrapItem,
    UncaughtThrow,
    UnhandledSuspend,
    Value,
    Values,
    ValuesThen,
    default_value,
    plug,
    signed,
)
from .syntax import (
    Block,
    Br,
    BrIf,
    Builtin,
    Call,
    CallRef,
    Const,
    ContBind,
    ContHeap,
    ContNew,
    Drop,
    FuncType,
    I32,
    If,
    Instr,
    IntBinOp,
    IntCmpOp,
    IntEqz,
    LocalGet,
    LocalSet,
    LocalTee,
    Loop,
    ModuleDef,
    RefFunc,
    RefIsNull,
    RefNull,
    Resume,
    ResumeThrow,
    Return,
    ReturnCall,
    Suspend,
    Throw,
    Unreachable,
)


class StuckError(Exception):
    """A non-terminal configuration with no applicable rule.  Unreachable
    from validated modules; the progress checker reports it as a failure."""


# ---------------------------------------------------------------------------
# Signals returned by one decomposition pass


@dataclass(slots=True)
class Stepped:
    event: StepEvent


@dataclass(slots=True)
class AllValues:
    values: list


@dataclass(slots=True)
class BrSig:
    l: int
    values: list


@dataclass(slots=True)
class ThrowSig:
    tag: int
    payload: list


@dataclass(slots=True)
class ReturnSig:
    values: list


@dataclass(slots=True)
class ReturnCallSig:
    func: int
    args: list


@dataclass(slots=True)
class SuspendSig:
    tag: int
    payload: list
    ctx: list  # ExecContext accumulated so far (outermost first)


@dataclass(slots=True)
class TrapSig:
    reason: str
    event: str


@dataclass(slots=True)
class TrapStop:
    reason: str


@dataclass(frozen=True, slots=True)
class Faults:
    skip_clause: bool = False
    keep_live: bool = False


def find_clause(clauses, tag: int, skip_first: bool) -> int | None:
    """First-match dispatch: label of the first clause for ``tag``."""
    skipping = skip_first
    for h in clauses:
        if h.tag == tag:
            if skipping:
                skipping = False
                continue
            return h.label
    return None


NO_FAULTS = Faults()


class LiteralRun:
    """One program execution under the literal small-step rules."""

    def __init__(
        self,
        module: ModuleDef,
        entry: int,
        args: list[Value],
        fuel: int = DEFAULT_FUEL,
        trace_cb=None,
        faults: Faults = NO_FAULTS,
    ):
        self.module = module
        self.store = Store(module)
        self.fuel = fuel
        self.trace_cb = trace_cb
        self.faults = faults
        self.stats = Stats()
        self.root_frame = Frame([])
        self.code: list = [*args, Call(entry)]

    # -- driver -------------------------------------------------------------

    def step(self) -> RunResult | None:
        """Apply one rule; return the terminal result when there is none.

        Terminal detection for a root trap or an all-values root is free —
        a finished configuration never reports fuel exhaustion.  The other
        terminals (unhandled suspend, uncaught throw) are discovered by a
        decomposition attempt and are fuel-gated like any step attempt.
        """
        code = self.code
        if len(code) == 1 and isinstance(code[0], TrapItem):
            return Trap(code[0].reason)
        if self._normalize_values(code) == len(code):
            return Values(tuple(code))
        if self.stats.steps >= self.fuel:
            return Trap(TRAP_FUEL)
        sig = self._reduce_seq(self.code, self.root_frame)
        if isinstance(sig, Stepped):
            self._count(sig.event)
            return None
        if isinstance(sig, TrapSig):
            self.code[:] = [TrapItem(sig.reason)]
            self._count(StepEvent(sig.event, sig.reason))
            return None
        if isinstance(sig, AllValues):
            return Values(tuple(sig.values))
        if isinstance(sig, TrapStop):
            return Trap(sig.reason)
        if isinstance(sig, SuspendSig):
            return UnhandledSuspend(sig.tag, tuple(sig.payload))
        if isinstance(sig, ThrowSig):
            return UncaughtThrow(sig.tag, tuple(sig.payload))
        raise StuckError(f"no rule applies: top-level {type(sig).__name__}")

    def run(self) -> tuple[RunResult, str, Stats]:
        while True:
            result = self.step()
            if result is not None:
                self.stats.cont_allocs = len(self.store.conts)
                return result, self.store.host.output(), self.stats

    def _count(self, event: StepEvent) -> None:
        self.stats.steps += 1
        if event.rule == "resume":
            self.stats.resumes += 1
        elif event.rule == "suspend":
            self.stats.suspends += 1
        if self.trace_cb is not None:
            self.trace_cb(self.stats.steps, event)

    # -- decomposition ------------------------------------------------------

    def _normalize_values(self, seq: list) -> int:
        """Normalize the leading run of value instructions in place (free:
        they are values already) and return the first non-value index."""
        i = 0
        while i < len(seq):
            item = seq[i]
            t = item.__class__
            if isinstance(item, Value):
                i += 1
                continue
            if t is Const:
                seq[i] = I32V(item.value) if item.type == I32 else I64V(item.value)
                i += 1
                continue
            if t is RefFunc:
                seq[i] = FuncRefV(item.x)
                i += 1
                continue
            if t is RefNull:
                seq[i] = NullV(self.module.types[item.ft].heap)
                i += 1
                continue
            break
        return i

    def _reduce_seq(self, seq: list, frame: Frame):
        i = self._normalize_values(seq)
        if i == len(seq):
            return AllValues(seq)
        item = seq[i]
        t = item.__class__
        if t is AdminLabel:
            return self._reduce_label(seq, i, item, frame)
        if t is AdminFrame:
            return self._reduce_frame(seq, i, item)
        if t is AdminHandler:
            return self._reduce_handler(seq, i, item, frame)
        if t is TrapItem:
            return TrapStop(item.reason)
        return self._execute(seq, i, item, frame)

    # -- administrative nodes -------------------------------------------------

    def _reduce_label(self, seq: list, i: int, node: AdminLabel, frame: Frame):
        sig = self._reduce_seq(node.body, frame)
        if isinstance(sig, (Stepped, TrapSig)):
            return sig
        if isinstance(sig, AllValues):
            seq[i : i + 1] = sig.values
            return Stepped(StepEvent("label-exit"))
        if isinstance(sig, BrSig):
            if sig.l == 0:
                n = len(node.types)
                kept = sig.values[len(sig.values) - n :] if n else []
                seq[i : i + 1] = [*kept, *node.cont]
                return Stepped(StepEvent("br", f"label arity {n}"))
            sig.l -= 1
            seq[i : i + 1] = [*sig.values, Br(sig.l)]
            return Stepped(StepEvent("br-skip-label", f"{sig.l + 1} remaining"))
        if isinstance(sig, SuspendSig):
            self._absorb(sig, seq, i, LabelLayer(node.types, node.cont))
        return sig

    def _reduce_frame(self, seq: list, i: int, node: AdminFrame):
        sig = self._reduce_seq(node.body, node.frame)
        if isinstance(sig, (Stepped, TrapSig)):
            return sig
        if isinstance(sig, AllValues):
            seq[i : i + 1] = sig.values
            return Stepped(StepEvent("frame-exit"))
        if isinstance(sig, ThrowSig):
            seq[i : i + 1] = [*sig.payload, Throw(sig.tag)]
            return Stepped(StepEvent("throw-unwind", f"tag {sig.tag}"))
        if isinstance(sig, ReturnSig):
            m = len(node.results)
            seq[i : i + 1] = sig.values[len(sig.values) - m :] if m else []
            return Stepped(StepEvent("return"))
        if isinstance(sig, ReturnCallSig):
            f = self.module.funcs[sig.func]
            if isinstance(f.body, Builtin):
                try:
                    results = call_builtin(self.store.host, f.body.name, sig.args, f.type)
                except HostTrap as e:
                    return TrapSig(e.reason, "trap-host")
                seq[i : i + 1] = results
            else:
                locals_ = [*sig.args] + [default_value(t) for t in f.locals]
                seq[i : i + 1] = [AdminFrame(Frame(locals_), f.type.results, list(f.body))]
            return Stepped(StepEvent("return-call", f"func {sig.func}"))
        if isinstance(sig, BrSig):
            raise StuckError("branch escaping a frame")
        if isinstance(sig, SuspendSig):
            self._absorb(sig, seq, i, FrameLayer(node.frame, node.results))
        return sig

    def _reduce_handler(self, seq: list, i: int, node: AdminHandler, frame: Frame):
        sig = self._reduce_seq(node.body, frame)
        if isinstance(sig, (Stepped, TrapSig)):
            return sig
        if isinstance(sig, AllValues):
            seq[i : i + 1] = sig.values
            return Stepped(StepEvent("handler-exit"))
        if isinstance(sig, BrSig):
            seq[i : i + 1] = [*sig.values, Br(sig.l)]
            return Stepped(StepEvent("br-skip-handler", f"label {sig.l}"))
        if isinstance(sig, SuspendSig):
            label = find_clause(node.clauses, sig.tag, self.faults.skip_clause)
            if label is None:
                self._absorb(sig, seq, i, HandlerLayer(node.clauses, node.results))
                return sig
            tag_ft = self.module.tags[sig.tag].type
            a = self.store.alloc_cont(
                sig.ctx, tag_ft.results, node.results, capture_tag=sig.tag
            )
            seq[i : i + 1] = [*sig.payload, ContRefV(a), Br(label)]
            return Stepped(StepEvent("suspend", f"tag {sig.tag} -> cont {a}"))
        return sig

    @staticmethod
    def _absorb(sig: SuspendSig, seq: list, i: int, wrapper) -> None:
        """Extend a propagating capture with the crossed node's position."""
        sig.ctx[:0] = [ValuesThen(list(seq[:i]), tuple(seq[i + 1 :])), wrapper]

    # -- source instructions ---------------------------------------------------

    def _execute(self, seq: list, i: int, instr: Instr, frame: Frame):
        t = instr.__class__
        m = self.module

        if t is LocalGet:
            seq[i] = frame.locals[instr.x]
            return Stepped(StepEvent("local-get", f"local {instr.x}"))
        if t is LocalSet:
            frame.locals[instr.x] = seq[i - 1]
            del seq[i - 1 : i + 1]
            return Stepped(StepEvent("local-set", f"local {instr.x}"))
        if t is LocalTee:
            frame.locals[instr.x] = seq[i - 1]
            del seq[i]
            return Stepped(StepEvent("local-tee", f"local {instr.x}"))
        if t is IntBinOp:
            b, a = seq[i - 1].v, seq[i - 2].v
            bits = instr.type.bits
            op = instr.op
            if op == "add":
                r = (a + b) & ((1 << bits) - 1)
            elif op == "sub":
                r = (a - b) & ((1 << bits) - 1)
            elif op == "mul":
                r = (a * b) & ((1 << bits) - 1)
            elif op == "and":
                r = a & b
            elif op == "or":
                r = a | b
            else:
                r = a ^ b
            seq[i - 2 : i + 1] = [I32V(r) if bits == 32 else I64V(r)]
            return Stepped(StepEvent("binop", f"{instr.type}.{op}"))
        if t is IntCmpOp:
            b, a = seq[i - 1].v, seq[i - 2].v
            bits = instr.type.bits
            op = instr.op
            if op in ("lt_s", "gt_s"):
                a, b = signed(a, bits), signed(b, bits)
            if op == "eq":
                r = a == b
            elif op == "ne":
                r = a != b
            elif op in ("lt_u", "lt_s"):
                r = a < b
            elif op in ("gt_u", "gt_s"):
                r = a > b
            elif op == "le_u":
                r = a <= b
            else:
                r = a >= b
            seq[i - 2 : i + 1] = [I32V(1 if r else 0)]
            return Stepped(StepEvent("cmpop", f"{instr.type}.{op}"))
        if t is IntEqz:
            seq[i - 1 : i + 1] = [I32V(1 if seq[i - 1].v == 0 else 0)]
            return Stepped(StepEvent("eqz"))
        if t is Drop:
            del seq[i - 1 : i + 1]
            return Stepped(StepEvent("drop"))
        if t is RefIsNull:
            seq[i - 1 : i + 1] = [I32V(1 if isinstance(seq[i - 1], NullV) else 0)]
            return Stepped(StepEvent("ref-is-null"))
        if t is Block:
            n = len(instr.bt.params)
            body = [*seq[i - n : i], *instr.body]
            seq[i - n : i + 1] = [AdminLabel(instr.bt.results, (), body)]
            return Stepped(StepEvent("block-enter"))
        if t is Loop:
            n = len(instr.bt.params)
            body = [*seq[i - n : i], *instr.body]
            seq[i - n : i + 1] = [AdminLabel(instr.bt.params, (instr,), body)]
            return Stepped(StepEvent("loop-enter"))
        if t is If:
            taken = seq[i - 1].v != 0
            chosen = instr.then if taken else instr.orelse
            seq[i - 1 : i + 1] = [Block(instr.bt, chosen)]
            return Stepped(StepEvent("if", "then" if taken else "else"))
        if t is Br:
            return BrSig(instr.l, seq[:i])
        if t is BrIf:
            taken = seq[i - 1].v != 0
            seq[i - 1 : i + 1] = [Br(instr.l)] if taken else []
            return Stepped(StepEvent("br-if", "taken" if taken else "not taken"))
        if t is Return:
            return ReturnSig(seq[:i])
        if t is ReturnCall:
            f = m.funcs[instr.x]
            n = len(f.type.params)
            return ReturnCallSig(instr.x, seq[i - n : i])
        if t is Unreachable:
            return TrapSig(TRAP_UNREACHABLE, "trap-unreachable")
        if t is Call:
            return self._enter_function(seq, i, instr.x, "call")
        if t is CallRef or t is CallRefDirect:
            ref = seq[i - 1]
            if isinstance(ref, NullV):
                return TrapSig(TRAP_NULL_FUNC, "trap-null-call")
            # Consume the funcref so the layout matches a direct call, then
            # enter the function with the arguments ending just below it.
            seq[i - 1 : i + 1] = [instr]
            return self._enter_function(seq, i - 1, ref.x, "call-ref")
        if t is Throw:
            n = len(m.tags[instr.x].type.params)
            return ThrowSig(instr.x, seq[i - n : i])
        if t is Suspend:
            n = len(m.tags[instr.x].type.params)
            return SuspendSig(
                instr.x,
                seq[i - n : i],
                [ValuesThen(list(seq[: i - n]), tuple(seq[i + 1 :]))],
            )
        if t is ContNew:
            ft = m.types[instr.ft].heap.ft
            ref = seq[i - 1]
            if isinstance(ref, NullV):
                return TrapSig(TRAP_NULL_FUNC, "trap-null-cont-new")
            ctx = [ValuesThen([], (FuncRefV(ref.x), CallRefDirect(ft)))]
            a = self.store.alloc_cont(ctx, ft.params, ft.results)
            seq[i - 1 : i + 1] = [ContRefV(a)]
            return Stepped(StepEvent("cont-new", f"cont {a}"))
        if t is Resume:
            ft = m.types[instr.ft].heap.ft
            ref = seq[i - 1]
            if isinstance(ref, NullV):
                return TrapSig(TRAP_NULL_CONT, "trap-null-resume")
            entry = self.store.conts[ref.a]
            if not entry.alive:
                return TrapSig(TRAP_CONSUMED, "trap-dead-resume")
            ctx = self._take(entry)
            n = len(ft.params)
            args = seq[i - 1 - n : i - 1]
            node = AdminHandler(instr.handlers, ft.results, plug(ctx, args))
            seq[i - 1 - n : i + 1] = [node]
            return Stepped(StepEvent("resume", f"cont {ref.a}"))
        if t is ContBind:
            src = m.types[instr.src].heap.ft
            dst = m.types[instr.dst].heap.ft
            ref = seq[i - 1]
            if isinstance(ref, NullV):
                return TrapSig(TRAP_NULL_CONT, "trap-null-bind")
            entry = self.store.conts[ref.a]
            if not entry.alive:
                return TrapSig(TRAP_CONSUMED, "trap-dead-bind")
            ctx = self._take(entry)
            n = len(src.params) - len(dst.params)
            args = seq[i - 1 - n : i - 1]
            inner: ValuesThen = ctx[-1]
            new_ctx = [*ctx[:-1], ValuesThen([*inner.values, *args], inner.rest)]
            a = self.store.alloc_cont(
                new_ctx, dst.params, src.results, capture_tag=entry.capture_tag
            )
            seq[i - 1 - n : i + 1] = [ContRefV(a)]
            return Stepped(StepEvent("cont-bind", f"cont {ref.a} -> cont {a}"))
        if t is ResumeThrow:
            ft = m.types[instr.ft].heap.ft
            ref = seq[i - 1]
            if isinstance(ref, NullV):
                return TrapSig(TRAP_NULL_CONT, "trap-null-resume-throw")
            entry = self.store.conts[ref.a]
            if not entry.alive:
                return TrapSig(TRAP_CONSUMED, "trap-dead-resume-throw")
            ctx = self._take(entry)
            n = len(m.tags[instr.x].type.params)
            payload = seq[i - 1 - n : i - 1]
            node = AdminHandler(
                instr.handlers, ft.results, plug(ctx, [*payload, Throw(instr.x)])
            )
            seq[i - 1 - n : i + 1] = [node]
            return Stepped(StepEvent("resume-throw", f"cont {ref.a} tag {instr.x}"))
        raise StuckError(f"no rule for {instr!r}")

    def _take(self, entry: ContEntry) -> list:
        if self.faults.keep_live:
            return entry.ctx  # deliberately broken: entry stays Live
        ctx, entry.ctx = entry.ctx, None
        return ctx

    def _enter_function(self, seq: list, i: int, x: int, event: str):
        f = self.module.funcs[x]
        n = len(f.type.params)
        if isinstance(f.body, Builtin):
            args = seq[i - n : i]
            try:
                results = call_builtin(self.store.host, f.body.name, args, f.type)
            except HostTrap as e:
                return TrapSig(e.reason, "trap-host")
            seq[i - n : i + 1] = results
            return Stepped(StepEvent("host-call", f.body.name))
        locals_ = [*seq[i - n : i]] + [default_value(t) for t in f.locals]
        node = AdminFrame(Frame(locals_), f.type.results, list(f.body))
        seq[i - n : i + 1] = [node]
        return Stepped(StepEvent(event, f"func {x}"))
