"""Abstract-machine execution kernel (the hot step loop).

This module implements the same reduction relation as
:mod:`effwasm.smallstep`, but as an abstract machine: instead of rewriting
an administrative instruction tree and re-decomposing it every step, it
keeps the decomposition incrementally — a stack of :class:`KLayer` records
(one per administrative label/frame/handler delimiter), a current value
list, and an instruction cursor.  Continuation capture reifies a slice of
that stack into the shared ``ExecContext`` layer-list representation, and
``resume`` splices a context back, so both engines exchange identical
continuation values.

Rule-for-rule equivalence with the literal engine is a hard requirement —
the audit mode compares results, output, and step/suspend/resume counters —
so each counted step here corresponds to exactly one rewrite there:

* value instructions cost nothing;
* a branch costs one step per label/handler peeled plus one for the target;
* ``throw`` costs one step per frame unwound;
* ``suspend`` costs one step plus its dispatch branch;
* everything else costs one step.

The module is plain Python and is also valid Cython: ``setup.py`` compiles
it (same module name, extension wins at import) for a faster loop with no
semantic difference.  Keep it dependency-light and loop-friendly.
"""

from __future__ import annotations

from .host import HostTrap, call_builtin
from .runtime import (
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
    UncaughtThrow,
    UnhandledSuspend,
    Value,
    Values,
    ValuesThen,
    default_value,
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
    ContNew,
    Drop,
    I32,
    If,
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
from .runtime import CallRefDirect

KIND_LABEL = 0
KIND_FRAME = 1
KIND_HANDLER = 2

_KIND_EXIT_EVENT = ("label-exit", "frame-exit", "handler-exit")


class KLayer:
    """One administrative delimiter on the machine stack, together with the
    state of the region that encloses it (restored when the layer pops)."""

    __slots__ = (
        "kind",
        "types",  # label: branch-target types
        "cont",  # label: loop replay code (empty for blocks)
        "own_frame",  # frame: the frame this layer introduced
        "results",  # frame/handler: result types
        "clauses",  # handler: dispatch clauses
        "saved_vals",
        "saved_seq",
        "saved_ip",
        "saved_frame",
    )

    def __init__(self, kind, saved_vals, saved_seq, saved_ip, saved_frame):
        self.kind = kind
        self.types = ()
        self.cont = ()
        self.own_frame = None
        self.results = ()
        self.clauses = ()
        self.saved_vals = saved_vals
        self.saved_seq = saved_seq
        self.saved_ip = saved_ip
        self.saved_frame = saved_frame


def _find_clause(clauses, tag):
    for h in clauses:
        if h.tag == tag:
            return h.label
    return None


class MachineStuck(Exception):
    pass


def run_machine(
    module: ModuleDef,
    entry: int,
    args: list,
    fuel: int = DEFAULT_FUEL,
    trace_cb=None,
) -> tuple[RunResult, str, Stats]:
    """Run one entry-point invocation to a terminal result."""
    store = Store(module)
    stats = Stats()
    result = _loop(store, module, entry, args, fuel, trace_cb, stats)
    stats.cont_allocs = len(store.conts)
    return result, store.host.output(), stats


def _loop(store, module, entry, args, fuel, trace_cb, stats):
    funcs = module.funcs
    types = module.types
    tags = module.tags
    host_state = store.host
    conts = store.conts

    vals: list = list(args)
    seq = (Call(entry),)
    ip = 0
    frame = Frame([])
    layers: list = []
    pend_instr = None
    pend_br = -1
    pend_throw_tag = -1
    pend_throw_payload: list = []

    steps = 0
    resumes = 0
    suspends = 0

    def finish(n):
        stats.steps = n
        stats.resumes = resumes
        stats.suspends = suspends

    while True:
        # ---- pending branch: one layer peeled per counted step ----
        if pend_br >= 0:
            if steps >= fuel:
                finish(steps)
                return Trap(TRAP_FUEL)
            if not layers:
                finish(steps)
                raise MachineStuck("branch with no enclosing label")
            L = layers.pop()
            kind = L.kind
            if kind == KIND_HANDLER:
                sv = L.saved_vals
                sv.extend(vals)
                vals = sv
                seq, ip, frame = L.saved_seq, L.saved_ip, L.saved_frame
                steps += 1
                if trace_cb is not None:
                    trace_cb(steps, StepEvent("br-skip-handler", f"label {pend_br}"))
                continue
            if kind == KIND_LABEL:
                if pend_br == 0:
                    n = len(L.types)
                    kept = vals[len(vals) - n :]
                    sv = L.saved_vals
                    sv.extend(kept)
                    vals = sv
                    seq, ip, frame = L.saved_seq, L.saved_ip, L.saved_frame
                    if L.cont:
                        pend_instr = L.cont[0]
                    pend_br = -1
                    steps += 1
                    if trace_cb is not None:
                        trace_cb(steps, StepEvent("br", f"label arity {n}"))
                    continue
                sv = L.saved_vals
                sv.extend(vals)
                vals = sv
                seq, ip, frame = L.saved_seq, L.saved_ip, L.saved_frame
                pend_br -= 1
                steps += 1
                if trace_cb is not None:
                    trace_cb(steps, StepEvent("br-skip-label", f"{pend_br + 1} remaining"))
                continue
            finish(steps)
            raise MachineStuck("branch escaping a frame")

        # ---- pending throw: one frame unwound per counted step ----
        if pend_throw_tag >= 0:
            if steps >= fuel:
                finish(steps)
                return Trap(TRAP_FUEL)
            idx = len(layers) - 1
            while idx >= 0 and layers[idx].kind != KIND_FRAME:
                idx -= 1
            if idx < 0:
                finish(steps)
                return UncaughtThrow(pend_throw_tag, tuple(pend_throw_payload))
            L = layers[idx]
            del layers[idx:]
            vals = L.saved_vals
            seq, ip, frame = L.saved_seq, L.saved_ip, L.saved_frame
            steps += 1
            if trace_cb is not None:
                trace_cb(steps, StepEvent("throw-unwind", f"tag {pend_throw_tag}"))
            continue

        # ---- fetch the next item ----
        if pend_instr is not None:
            instr = pend_instr
            pend_instr = None
        elif ip < len(seq):
            instr = seq[ip]
            tp = instr.__class__
            if tp is Const:
                vals.append(I32V(instr.value) if instr.type is I32 else I64V(instr.value))
                ip += 1
                continue
            if isinstance(instr, Value):
                vals.append(instr)
                ip += 1
                continue
            if tp is RefFunc:
                vals.append(FuncRefV(instr.x))
                ip += 1
                continue
            if tp is RefNull:
                vals.append(NullV(types[instr.ft].heap))
                ip += 1
                continue
            ip += 1
        else:
            # Region exhausted: all values — apply the matching exit rule.
            if not layers:
                finish(steps)
                return Values(tuple(vals))
            if steps >= fuel:
                finish(steps)
                return Trap(TRAP_FUEL)
            L = layers.pop()
            sv = L.saved_vals
            sv.extend(vals)
            vals = sv
            seq, ip, frame = L.saved_seq, L.saved_ip, L.saved_frame
            steps += 1
            if trace_cb is not None:
                trace_cb(steps, StepEvent(_KIND_EXIT_EVENT[L.kind]))
            continue

        # ---- one source instruction = one counted step ----
        if steps >= fuel:
            finish(steps)
            return Trap(TRAP_FUEL)
        steps += 1
        tp = instr.__class__

        if tp is LocalGet:
            vals.append(frame.locals[instr.x])
            if trace_cb is not None:
                trace_cb(steps, StepEvent("local-get", f"local {instr.x}"))
            continue

        if tp is IntBinOp:
            b = vals.pop().v
            a = vals[-1].v
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
            vals[-1] = I32V(r) if bits == 32 else I64V(r)
            if trace_cb is not None:
                trace_cb(steps, StepEvent("binop", f"{instr.type}.{op}"))
            continue

        if tp is IntCmpOp:
            b = vals.pop().v
            a = vals.pop().v
            bits = instr.type.bits
            op = instr.op
            if op == "lt_s" or op == "gt_s":
                half = 1 << (bits - 1)
                if a >= half:
                    a -= 1 << bits
                if b >= half:
                    b -= 1 << bits
            if op == "eq":
                r = a == b
            elif op == "ne":
                r = a != b
            elif op == "lt_u" or op == "lt_s":
                r = a < b
            elif op == "gt_u" or op == "gt_s":
                r = a > b
            elif op == "le_u":
                r = a <= b
            else:
                r = a >= b
            vals.append(I32V(1 if r else 0))
            if trace_cb is not None:
                trace_cb(steps, StepEvent("cmpop", f"{instr.type}.{op}"))
            continue

        if tp is IntEqz:
            vals[-1] = I32V(1 if vals[-1].v == 0 else 0)
            if trace_cb is not None:
                trace_cb(steps, StepEvent("eqz"))
            continue

        if tp is LocalSet:
            frame.locals[instr.x] = vals.pop()
            if trace_cb is not None:
                trace_cb(steps, StepEvent("local-set", f"local {instr.x}"))
            continue

        if tp is LocalTee:
            frame.locals[instr.x] = vals[-1]
            if trace_cb is not None:
                trace_cb(steps, StepEvent("local-tee", f"local {instr.x}"))
            continue

        if tp is BrIf:
            taken = vals.pop().v != 0
            if taken:
                pend_br = instr.l
            if trace_cb is not None:
                trace_cb(steps, StepEvent("br-if", "taken" if taken else "not taken"))
            continue

        if tp is Br:
            steps -= 1  # the branch itself is free; each peel is counted
            pend_br = instr.l
            continue

        if tp is Block:
            n = len(instr.bt.params)
            if n:
                params_v = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                params_v = []
            L = KLayer(KIND_LABEL, vals, seq, ip, frame)
            L.types = instr.bt.results
            layers.append(L)
            vals = params_v
            seq = instr.body
            ip = 0
            if trace_cb is not None:
                trace_cb(steps, StepEvent("block-enter"))
            continue

        if tp is Loop:
            n = len(instr.bt.params)
            if n:
                params_v = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                params_v = []
            L = KLayer(KIND_LABEL, vals, seq, ip, frame)
            L.types = instr.bt.params
            L.cont = (instr,)
            layers.append(L)
            vals = params_v
            seq = instr.body
            ip = 0
            if trace_cb is not None:
                trace_cb(steps, StepEvent("loop-enter"))
            continue

        if tp is If:
            taken = vals.pop().v != 0
            pend_instr = Block(instr.bt, instr.then if taken else instr.orelse)
            if trace_cb is not None:
                trace_cb(steps, StepEvent("if", "then" if taken else "else"))
            continue

        if tp is Call:
            f = funcs[instr.x]
            ft = f.type
            n = len(ft.params)
            if isinstance(f.body, Builtin):
                if n:
                    bargs = vals[len(vals) - n :]
                    del vals[len(vals) - n :]
                else:
                    bargs = []
                try:
                    vals.extend(call_builtin(host_state, f.body.name, bargs, ft))
                except HostTrap as e:
                    finish(steps)
                    return Trap(e.reason)
                if trace_cb is not None:
                    trace_cb(steps, StepEvent("host-call", f.body.name))
                continue
            if n:
                locals_ = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                locals_ = []
            for t in f.locals:
                locals_.append(default_value(t))
            L = KLayer(KIND_FRAME, vals, seq, ip, frame)
            L.results = ft.results
            frame = Frame(locals_)
            L.own_frame = frame
            layers.append(L)
            vals = []
            seq = f.body
            ip = 0
            if trace_cb is not None:
                trace_cb(steps, StepEvent("call", f"func {instr.x}"))
            continue

        if tp is CallRef or tp is CallRefDirect:
            ref = vals.pop()
            if isinstance(ref, NullV):
                finish(steps)
                return Trap(TRAP_NULL_FUNC)
            f = funcs[ref.x]
            ft = f.type
            n = len(ft.params)
            if isinstance(f.body, Builtin):
                if n:
                    bargs = vals[len(vals) - n :]
                    del vals[len(vals) - n :]
                else:
                    bargs = []
                try:
                    vals.extend(call_builtin(host_state, f.body.name, bargs, ft))
                except HostTrap as e:
                    finish(steps)
                    return Trap(e.reason)
                if trace_cb is not None:
                    trace_cb(steps, StepEvent("host-call", f.body.name))
                continue
            if n:
                locals_ = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                locals_ = []
            for t in f.locals:
                locals_.append(default_value(t))
            L = KLayer(KIND_FRAME, vals, seq, ip, frame)
            L.results = ft.results
            frame = Frame(locals_)
            L.own_frame = frame
            layers.append(L)
            vals = []
            seq = f.body
            ip = 0
            if trace_cb is not None:
                trace_cb(steps, StepEvent("call-ref", f"func {ref.x}"))
            continue

        if tp is Return:
            idx = len(layers) - 1
            while idx >= 0 and layers[idx].kind != KIND_FRAME:
                idx -= 1
            if idx < 0:
                finish(steps)
                raise MachineStuck("return with no enclosing frame")
            L = layers[idx]
            del layers[idx:]
            m = len(L.results)
            kept = vals[len(vals) - m :]
            vals = L.saved_vals
            vals.extend(kept)
            seq, ip, frame = L.saved_seq, L.saved_ip, L.saved_frame
            if trace_cb is not None:
                trace_cb(steps, StepEvent("return"))
            continue

        if tp is ReturnCall:
            idx = len(layers) - 1
            while idx >= 0 and layers[idx].kind != KIND_FRAME:
                idx -= 1
            if idx < 0:
                finish(steps)
                raise MachineStuck("return_call with no enclosing frame")
            f = funcs[instr.x]
            ft = f.type
            n = len(ft.params)
            if n:
                cargs = vals[len(vals) - n :]
            else:
                cargs = []
            L = layers[idx]
            del layers[idx + 1 :]
            if isinstance(f.body, Builtin):
                del layers[idx]
                try:
                    results = call_builtin(host_state, f.body.name, cargs, ft)
                except HostTrap as e:
                    finish(steps)
                    return Trap(e.reason)
                vals = L.saved_vals
                vals.extend(results)
                seq, ip, frame = L.saved_seq, L.saved_ip, L.saved_frame
                if trace_cb is not None:
                    trace_cb(steps, StepEvent("return-call", f"func {instr.x}"))
                continue
            locals_ = list(cargs)
            for t in f.locals:
                locals_.append(default_value(t))
            NL = KLayer(KIND_FRAME, L.saved_vals, L.saved_seq, L.saved_ip, L.saved_frame)
            NL.results = L.results
            frame = Frame(locals_)
            NL.own_frame = frame
            layers[idx] = NL
            vals = []
            seq = f.body
            ip = 0
            if trace_cb is not None:
                trace_cb(steps, StepEvent("return-call", f"func {instr.x}"))
            continue

        if tp is Drop:
            vals.pop()
            if trace_cb is not None:
                trace_cb(steps, StepEvent("drop"))
            continue

        if tp is RefIsNull:
            vals[-1] = I32V(1 if isinstance(vals[-1], NullV) else 0)
            if trace_cb is not None:
                trace_cb(steps, StepEvent("ref-is-null"))
            continue

        if tp is Unreachable:
            finish(steps)
            return Trap(TRAP_UNREACHABLE)

        if tp is Throw:
            steps -= 1  # counted per frame unwound instead
            n = len(tags[instr.x].type.params)
            if n:
                pend_throw_payload = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                pend_throw_payload = []
            pend_throw_tag = instr.x
            continue

        if tp is Suspend:
            x = instr.x
            idx = len(layers) - 1
            label = None
            while idx >= 0:
                L = layers[idx]
                if L.kind == KIND_HANDLER:
                    label = _find_clause(L.clauses, x)
                    if label is not None:
                        break
                idx -= 1
            n = len(tags[x].type.params)
            if n:
                payload = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                payload = []
            if label is None:
                finish(steps - 1)  # the failed search applies no rule
                return UnhandledSuspend(x, tuple(payload))
            Lh = layers[idx]
            ctx: list = []
            j = idx + 1
            cnt = len(layers)
            while j < cnt:
                L2 = layers[j]
                ctx.append(ValuesThen(L2.saved_vals, L2.saved_seq[L2.saved_ip :]))
                k2 = L2.kind
                if k2 == KIND_LABEL:
                    ctx.append(LabelLayer(L2.types, L2.cont))
                elif k2 == KIND_FRAME:
                    ctx.append(FrameLayer(L2.own_frame, L2.results))
                else:
                    ctx.append(HandlerLayer(L2.clauses, L2.results))
                j += 1
            ctx.append(ValuesThen(vals, seq[ip:]))
            a = store.alloc_cont(ctx, tags[x].type.results, Lh.results, capture_tag=x)
            del layers[idx:]
            vals = Lh.saved_vals
            vals.extend(payload)
            vals.append(ContRefV(a))
            seq, ip, frame = Lh.saved_seq, Lh.saved_ip, Lh.saved_frame
            pend_br = label
            suspends += 1
            if trace_cb is not None:
                trace_cb(steps, StepEvent("suspend", f"tag {x} -> cont {a}"))
            continue

        if tp is ContNew:
            ft = types[instr.ft].heap.ft
            ref = vals.pop()
            if isinstance(ref, NullV):
                finish(steps)
                return Trap(TRAP_NULL_FUNC)
            ctx = [ValuesThen([], (FuncRefV(ref.x), CallRefDirect(ft)))]
            a = store.alloc_cont(ctx, ft.params, ft.results)
            vals.append(ContRefV(a))
            if trace_cb is not None:
                trace_cb(steps, StepEvent("cont-new", f"cont {a}"))
            continue

        if tp is Resume:
            ft = types[instr.ft].heap.ft
            ref = vals.pop()
            if isinstance(ref, NullV):
                finish(steps)
                return Trap(TRAP_NULL_CONT)
            entry_ = conts[ref.a]
            if entry_.ctx is None:
                finish(steps)
                return Trap(TRAP_CONSUMED)
            ctx = entry_.ctx
            entry_.ctx = None
            n = len(ft.params)
            if n:
                rargs = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                rargs = []
            L = KLayer(KIND_HANDLER, vals, seq, ip, frame)
            L.clauses = instr.handlers
            L.results = ft.results
            layers.append(L)
            vt = ctx[0]
            cur_frame = frame
            for j in range(1, len(ctx), 2):
                W = ctx[j]
                NL = None
                if isinstance(W, LabelLayer):
                    NL = KLayer(KIND_LABEL, vt.values, vt.rest, 0, cur_frame)
                    NL.types = W.types
                    NL.cont = W.cont
                elif isinstance(W, FrameLayer):
                    NL = KLayer(KIND_FRAME, vt.values, vt.rest, 0, cur_frame)
                    NL.results = W.results
                    NL.own_frame = W.frame
                    cur_frame = W.frame
                else:
                    NL = KLayer(KIND_HANDLER, vt.values, vt.rest, 0, cur_frame)
                    NL.clauses = W.clauses
                    NL.results = W.results
                layers.append(NL)
                vt = ctx[j + 1]
            vals = vt.values
            vals.extend(rargs)
            seq = vt.rest
            ip = 0
            frame = cur_frame
            resumes += 1
            if trace_cb is not None:
                trace_cb(steps, StepEvent("resume", f"cont {ref.a}"))
            continue

        if tp is ContBind:
            src = types[instr.src].heap.ft
            dst = types[instr.dst].heap.ft
            ref = vals.pop()
            if isinstance(ref, NullV):
                finish(steps)
                return Trap(TRAP_NULL_CONT)
            entry_ = conts[ref.a]
            if entry_.ctx is None:
                finish(steps)
                return Trap(TRAP_CONSUMED)
            ctx = entry_.ctx
            entry_.ctx = None
            n = len(src.params) - len(dst.params)
            if n:
                bargs = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                bargs = []
            inner = ctx[-1]
            new_ctx = ctx[:-1]
            new_ctx.append(ValuesThen([*inner.values, *bargs], inner.rest))
            a = store.alloc_cont(new_ctx, dst.params, src.results, capture_tag=entry_.capture_tag)
            vals.append(ContRefV(a))
            if trace_cb is not None:
                trace_cb(steps, StepEvent("cont-bind", f"cont {ref.a} -> cont {a}"))
            continue

        if tp is ResumeThrow:
            ft = types[instr.ft].heap.ft
            ref = vals.pop()
            if isinstance(ref, NullV):
                finish(steps)
                return Trap(TRAP_NULL_CONT)
            entry_ = conts[ref.a]
            if entry_.ctx is None:
                finish(steps)
                return Trap(TRAP_CONSUMED)
            ctx = entry_.ctx
            entry_.ctx = None
            n = len(tags[instr.x].type.params)
            if n:
                payload = vals[len(vals) - n :]
                del vals[len(vals) - n :]
            else:
                payload = []
            L = KLayer(KIND_HANDLER, vals, seq, ip, frame)
            L.clauses = instr.handlers
            L.results = ft.results
            layers.append(L)
            vt = ctx[0]
            cur_frame = frame
            for j in range(1, len(ctx), 2):
                W = ctx[j]
                if isinstance(W, LabelLayer):
                    NL = KLayer(KIND_LABEL, vt.values, vt.rest, 0, cur_frame)
                    NL.types = W.types
                    NL.cont = W.cont
                elif isinstance(W, FrameLayer):
                    NL = KLayer(KIND_FRAME, vt.values, vt.rest, 0, cur_frame)
                    NL.results = W.results
                    NL.own_frame = W.frame
                    cur_frame = W.frame
                else:
                    NL = KLayer(KIND_HANDLER, vt.values, vt.rest, 0, cur_frame)
                    NL.clauses = W.clauses
                    NL.results = W.results
                layers.append(NL)
                vt = ctx[j + 1]
            vals = vt.values
            vals.extend(payload)
            seq = (Throw(instr.x),) + tuple(vt.rest)
            ip = 0
            frame = cur_frame
            if trace_cb is not None:
                trace_cb(steps, StepEvent("resume-throw", f"cont {ref.a} tag {instr.x}"))
            continue

        finish(steps)
        raise MachineStuck(f"no rule for {instr!r}")
