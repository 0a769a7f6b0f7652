"""Abstract syntax for the effect-handler WebAssembly subset.

The language is a small slice of WebAssembly — i32/i64 numerics, structured
control flow, direct and indirect calls — extended with typed continuations:
``cont.new``, ``resume``, ``suspend``, ``cont.bind`` and ``resume_throw``,
plus exception ``throw`` and declared control ``tag``s.

Every node is an immutable dataclass; equality is structural.  Symbolic
``$names`` never reach the AST: the text-format parser resolves them to
numeric indices (de Bruijn indices for labels).  Debug names are retained
only where diagnostics need them (functions, tags, type definitions) and are
excluded from equality so that printing and re-parsing round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


# ---------------------------------------------------------------------------
# Types


class ValType:
    """Base class of value types.  Instances are interchangeable iff equal."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class NumType(ValType):
    bits: int  # 32 or 64

    def __str__(self) -> str:
        return f"i{self.bits}"


I32 = NumType(32)
I64 = NumType(64)


@dataclass(frozen=True, slots=True)
class RefType(ValType):
    """Reference to a function or continuation.  All references are nullable
    (the single-reference-kind simplification)."""

    heap: "HeapType"

    def __str__(self) -> str:
        return f"(ref {self.heap})"


class HeapType:
    """Base class of heap types: ``func ft`` or ``cont ft``."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class FuncHeap(HeapType):
    ft: "FuncType"

    def __str__(self) -> str:
        return f"(func {self.ft})"


@dataclass(frozen=True, slots=True)
class ContHeap(HeapType):
    ft: "FuncType"

    def __str__(self) -> str:
        return f"(cont {self.ft})"


@dataclass(frozen=True, slots=True)
class FuncType:
    params: tuple[ValType, ...]
    results: tuple[ValType, ...]

    def __str__(self) -> str:
        ps = " ".join(str(t) for t in self.params)
        rs = " ".join(str(t) for t in self.results)
        return f"[{ps}] -> [{rs}]"


@dataclass(frozen=True, slots=True)
class BlockType:
    """Input/output type of a block, loop or if."""

    params: tuple[ValType, ...]
    results: tuple[ValType, ...]


# ---------------------------------------------------------------------------
# Instructions


class Instr:
    """Base class of instructions."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Const(Instr):
    type: NumType
    value: int  # canonical unsigned representation, 0 .. 2**bits - 1


@dataclass(frozen=True, slots=True)
class LocalGet(Instr):
    x: int


@dataclass(frozen=True, slots=True)
class LocalSet(Instr):
    x: int


@dataclass(frozen=True, slots=True)
class LocalTee(Instr):
    x: int


@dataclass(frozen=True, slots=True)
class Block(Instr):
    bt: BlockType
    body: tuple[Instr, ...]


@dataclass(frozen=True, slots=True)
class Loop(Instr):
    bt: BlockType
    body: tuple[Instr, ...]


@dataclass(frozen=True, slots=True)
class If(Instr):
    bt: BlockType
    then: tuple[Instr, ...]
    orelse: tuple[Instr, ...]


@dataclass(frozen=True, slots=True)
class Br(Instr):
    l: int


@dataclass(frozen=True, slots=True)
class BrIf(Instr):
    l: int


@dataclass(frozen=True, slots=True)
class Return(Instr):
    pass


@dataclass(frozen=True, slots=True)
class Unreachable(Instr):
    pass


@dataclass(frozen=True, slots=True)
class Drop(Instr):
    pass


@dataclass(frozen=True, slots=True)
class Call(Instr):
    x: int


@dataclass(frozen=True, slots=True)
class CallRef(Instr):
    ft: int  # index of a func type definition


@dataclass(frozen=True, slots=True)
class ReturnCall(Instr):
    x: int


@dataclass(frozen=True, slots=True)
class RefNull(Instr):
    ft: int  # index of a type definition (func or cont)


@dataclass(frozen=True, slots=True)
class RefFunc(Instr):
    x: int


@dataclass(frozen=True, slots=True)
class RefIsNull(Instr):
    pass


@dataclass(frozen=True, slots=True)
class Throw(Instr):
    x: int  # tag index


@dataclass(frozen=True, slots=True)
class ContNew(Instr):
    ft: int  # index of a cont type definition


@dataclass(frozen=True, slots=True)
class HandlerClause:
    """``(on tag label)``: dispatch suspensions of ``tag`` to ``label``."""

    tag: int
    label: int


@dataclass(frozen=True, slots=True)
class Resume(Instr):
    ft: int  # index of a cont type definition
    handlers: tuple[HandlerClause, ...]


@dataclass(frozen=True, slots=True)
class Suspend(Instr):
    x: int  # tag index


@dataclass(frozen=True, slots=True)
class ContBind(Instr):
    src: int  # cont type index of the operand continuation
    dst: int  # cont type index of the produced continuation


@dataclass(frozen=True, slots=True)
class ResumeThrow(Instr):
    ft: int  # cont type index
    x: int  # tag index
    handlers: tuple[HandlerClause, ...]


BIN_OPS = ("add", "sub", "mul", "and", "or", "xor")
CMP_OPS = ("eq", "ne", "lt_u", "gt_u", "le_u", "ge_u", "lt_s", "gt_s")


@dataclass(frozen=True, slots=True)
class IntBinOp(Instr):
    type: NumType
    op: str  # member of BIN_OPS


@dataclass(frozen=True, slots=True)
class IntCmpOp(Instr):
    type: NumType
    op: str  # member of CMP_OPS


@dataclass(frozen=True, slots=True)
class IntEqz(Instr):
    type: NumType


# ---------------------------------------------------------------------------
# Module structure


@dataclass(frozen=True, slots=True)
class Builtin:
    """Function body provided by the host registry instead of instructions."""

    name: str


@dataclass(frozen=True, slots=True)
class TypeDef:
    heap: HeapType
    name: str | None = field(default=None, compare=False)


@dataclass(frozen=True, slots=True)
class TagDef:
    type: FuncType
    name: str | None = field(default=None, compare=False)


@dataclass(frozen=True, slots=True)
class FuncDef:
    type: FuncType
    locals: tuple[ValType, ...]
    body: Union[tuple[Instr, ...], Builtin]
    name: str | None = field(default=None, compare=False)

    @property
    def is_builtin(self) -> bool:
        return isinstance(self.body, Builtin)


@dataclass(frozen=True, slots=True)
class ModuleDef:
    types: tuple[TypeDef, ...] = ()
    tags: tuple[TagDef, ...] = ()
    funcs: tuple[FuncDef, ...] = ()
    start: int | None = None

    def func_index(self, name: str) -> int | None:
        for i, f in enumerate(self.funcs):
            if f.name == name:
                return i
        return None


def arity_of(ft: FuncType) -> tuple[int, int]:
    """Parameter and result counts of a function type."""
    return len(ft.params), len(ft.results)
