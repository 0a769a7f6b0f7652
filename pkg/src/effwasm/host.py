"""Host builtins: printing, the scheduler queue, mailboxes, and promises.

Modules bind builtins with ``(func $name <signature> (builtin "name"))``.
The registry holds a signature *template* per builtin; slots are either a
concrete numeric type or the ``CONT`` wildcard, which accepts any reference
to a continuation type — the binding module picks the concrete one, and the
validator checks the declared signature against the template structurally.

All host state is deterministic and owned by a single run.  Builtins never
perform real I/O: ``print`` appends to an output buffer rendered at the end
of the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import ContHeap, FuncType, I32, I64, NumType, RefType, ValType


class HostTrap(Exception):
    """A builtin contract violation; the interpreter converts it to a trap."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# ---------------------------------------------------------------------------
# Signature templates

I32_SLOT = "i32"
I64_SLOT = "i64"
CONT = "cont"  # any (ref (cont ...)) type

Slot = str


@dataclass(frozen=True, slots=True)
class SignatureSpec:
    params: tuple[Slot, ...]
    results: tuple[Slot, ...]


SIGNATURES: dict[str, SignatureSpec] = {
    "print": SignatureSpec((I32_SLOT,), ()),
    "print_i64": SignatureSpec((I64_SLOT,), ()),
    "queue_empty": SignatureSpec((), (I32_SLOT,)),
    "enqueue": SignatureSpec((CONT,), ()),
    "dequeue": SignatureSpec((), (CONT,)),
    "mb_new": SignatureSpec((), (I32_SLOT,)),
    "mb_send": SignatureSpec((I64_SLOT, I32_SLOT), ()),
    "mb_recv": SignatureSpec((I32_SLOT,), (I64_SLOT,)),
    "mb_empty": SignatureSpec((I32_SLOT,), (I32_SLOT,)),
    "prom_new": SignatureSpec((), (I32_SLOT,)),
    "prom_fulfill": SignatureSpec((I32_SLOT, I64_SLOT), (CONT,)),
    "prom_fulfilled": SignatureSpec((I32_SLOT,), (I32_SLOT,)),
    "prom_value": SignatureSpec((I32_SLOT,), (I64_SLOT,)),
    "prom_await": SignatureSpec((I32_SLOT, CONT), ()),
}


def builtin_signatures() -> dict[str, SignatureSpec]:
    """The registry of builtin signature templates."""
    return dict(SIGNATURES)


def _slot_matches(slot: Slot, t: ValType) -> bool:
    if slot == I32_SLOT:
        return t == I32
    if slot == I64_SLOT:
        return t == I64
    assert slot == CONT
    return isinstance(t, RefType) and isinstance(t.heap, ContHeap)


def match_signature(spec: SignatureSpec, declared: FuncType) -> str | None:
    """None if the declared type fits the template, else a description."""
    if len(declared.params) != len(spec.params) or len(declared.results) != len(spec.results):
        return (
            f"declared type {declared} does not match the builtin's shape "
            f"({len(spec.params)} parameter(s), {len(spec.results)} result(s))"
        )
    for slot, t in zip(spec.params + spec.results, declared.params + declared.results):
        if not _slot_matches(slot, t):
            want = "a continuation reference" if slot == CONT else slot
            return f"declared type {declared} does not match the builtin's {want} slot"
    return None


# ---------------------------------------------------------------------------
# State


@dataclass(slots=True)
class Promise:
    fulfilled: bool = False
    value: int = 0
    waiter: object | None = None  # a ContRef value, held until fulfilment


@dataclass(slots=True)
class HostState:
    prints: list[str] = field(default_factory=list)
    queue: list = field(default_factory=list)  # FIFO of ContRef/NullRef values
    mailboxes: list[list[int]] = field(default_factory=list)
    promises: list[Promise] = field(default_factory=list)

    def output(self) -> str:
        return " ".join(self.prints)


def _signed(value: int, bits: int) -> int:
    return value - (1 << bits) if value >= 1 << (bits - 1) else value


def call_builtin(state: HostState, name: str, args: list, declared: FuncType) -> list:
    """Execute one builtin.  ``args`` and the return are runtime Values; the
    declared type supplies the concrete heap type for null results."""
    from .runtime import ContRefV, I32V, I64V, NullV  # runtime imports host

    def null_result() -> object:
        rt = declared.results[0]
        assert isinstance(rt, RefType)
        return NullV(rt.heap)

    if name == "print":
        state.prints.append(str(_signed(args[0].v, 32)))
        return []
    if name == "print_i64":
        state.prints.append(str(_signed(args[0].v, 64)))
        return []
    if name == "queue_empty":
        return [I32V(1 if not state.queue else 0)]
    if name == "enqueue":
        state.queue.append(args[0])
        return []
    if name == "dequeue":
        if not state.queue:
            return [null_result()]
        return [state.queue.pop(0)]
    if name == "mb_new":
        state.mailboxes.append([])
        return [I32V(len(state.mailboxes) - 1)]
    if name == "mb_send":
        payload, addr = args[0].v, args[1].v
        if addr >= len(state.mailboxes):
            raise HostTrap("unknown mailbox")
        state.mailboxes[addr].append(payload)
        return []
    if name == "mb_recv":
        addr = args[0].v
        if addr >= len(state.mailboxes):
            raise HostTrap("unknown mailbox")
        box = state.mailboxes[addr]
        if not box:
            raise HostTrap("empty mailbox")
        return [I64V(box.pop(0))]
    if name == "mb_empty":
        addr = args[0].v
        if addr >= len(state.mailboxes):
            raise HostTrap("unknown mailbox")
        return [I32V(1 if not state.mailboxes[addr] else 0)]
    if name == "prom_new":
        state.promises.append(Promise())
        return [I32V(len(state.promises) - 1)]
    if name == "prom_fulfill":
        pid, value = args[0].v, args[1].v
        if pid >= len(state.promises):
            raise HostTrap("unknown promise")
        p = state.promises[pid]
        if p.fulfilled:
            raise HostTrap("promise already fulfilled")
        p.fulfilled = True
        p.value = value
        waiter, p.waiter = p.waiter, None
        return [waiter if waiter is not None else null_result()]
    if name == "prom_fulfilled":
        pid = args[0].v
        if pid >= len(state.promises):
            raise HostTrap("unknown promise")
        return [I32V(1 if state.promises[pid].fulfilled else 0)]
    if name == "prom_value":
        pid = args[0].v
        if pid >= len(state.promises):
            raise HostTrap("unknown promise")
        p = state.promises[pid]
        if not p.fulfilled:
            raise HostTrap("promise not fulfilled")
        return [I64V(p.value)]
    if name == "prom_await":
        pid = args[0].v
        if pid >= len(state.promises):
            raise HostTrap("unknown promise")
        p = state.promises[pid]
        if p.fulfilled:
            raise HostTrap("await on fulfilled promise")
        if p.waiter is not None:
            raise HostTrap("promise already awaited")
        p.waiter = args[1]
        return []
    raise HostTrap(f"unknown builtin {name!r}")
