"""Validation: algorithmic typing of modules and instruction sequences.

The declarative typing rules (one per instruction, plus a frame rule for
sequencing and stack polymorphism for non-returning instructions) are
realized with the standard operand-stack algorithm: a :class:`StackShape`
tracks the known suffix of the operand stack plus a polymorphic-base flag
set by ``br``/``throw``/``return``/``return_call``/``unreachable``, which
absorbs any pops that reach below the known portion.

``return`` is typed like a branch to an implicit outermost label carrying
the function's result types.  That label is deliberately *not* addressable
by ``br`` — the reduction rules give a frame no label wrapper, so making it
a branch target would type configurations that cannot step.

Handler clauses ``(on tag label)`` are checked at their ``resume`` /
``resume_throw`` site: with the tag typed ``t1' -> t2'`` and the resumed
continuation producing ``t2*``, the clause's label must expect exactly
``t1' ++ [(ref (cont t2' -> t2*))]`` — the suspension payload followed by
the captured continuation.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import host
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
    FuncHeap,
    FuncType,
    HandlerClause,
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
    RefType,
    Resume,
    ResumeThrow,
    Return,
    ReturnCall,
    Suspend,
    Throw,
    Unreachable,
    ValType,
)


@dataclass(frozen=True, slots=True)
class ValidationError:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class _Invalid(Exception):
    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


@dataclass(slots=True)
class TypingContext:
    """Indexed namespaces for one function body (or administrative region).

    ``labels`` is a de Bruijn stack: index 0 is the innermost enclosing
    label.  ``results`` holds the enclosing function's result types (the
    target of ``return``), or ``None`` where ``return`` is illegal.
    """

    funcs: tuple[FuncType, ...]
    tags: tuple[FuncType, ...]
    types: tuple  # tuple[TypeDef, ...]
    locals: tuple[ValType, ...] = ()
    labels: tuple[tuple[ValType, ...], ...] = ()
    results: tuple[ValType, ...] | None = None

    def with_label(self, label: tuple[ValType, ...]) -> "TypingContext":
        return TypingContext(
            funcs=self.funcs,
            tags=self.tags,
            types=self.types,
            locals=self.locals,
            labels=(label,) + self.labels,
            results=self.results,
        )

    def stripped(self) -> "TypingContext":
        """The context with locals, labels and the return target removed —
        what a stored continuation's body is typed under."""
        return TypingContext(funcs=self.funcs, tags=self.tags, types=self.types)

    # -- namespace accessors (raise _Invalid on out-of-range) --------------

    def func(self, x: int) -> FuncType:
        if not 0 <= x < len(self.funcs):
            raise _Invalid(f"function index {x} out of range")
        return self.funcs[x]

    def tag(self, x: int) -> FuncType:
        if not 0 <= x < len(self.tags):
            raise _Invalid(f"tag index {x} out of range")
        return self.tags[x]

    def label(self, l: int) -> tuple[ValType, ...]:
        if not 0 <= l < len(self.labels):
            raise _Invalid(f"label index {l} out of range")
        return self.labels[l]

    def local(self, x: int) -> ValType:
        if not 0 <= x < len(self.locals):
            raise _Invalid(f"local index {x} out of range")
        return self.locals[x]

    def heap(self, ti: int):
        if not 0 <= ti < len(self.types):
            raise _Invalid(f"type index {ti} out of range")
        return self.types[ti].heap

    def func_heap(self, ti: int) -> FuncType:
        h = self.heap(ti)
        if not isinstance(h, FuncHeap):
            raise _Invalid(f"type {ti} is not a function type")
        return h.ft

    def cont_heap(self, ti: int) -> FuncType:
        h = self.heap(ti)
        if not isinstance(h, ContHeap):
            raise _Invalid(f"type {ti} is not a continuation type")
        return h.ft


def context_for_module(m: ModuleDef) -> TypingContext:
    return TypingContext(
        funcs=tuple(f.type for f in m.funcs),
        tags=tuple(t.type for t in m.tags),
        types=m.types,
    )


@dataclass(slots=True)
class StackShape:
    """Known operand-stack suffix (top last) over an optional polymorphic base."""

    known: list[ValType]
    polymorphic: bool = False

    def push(self, *ts: ValType) -> None:
        self.known.extend(ts)

    def pop(self, expected: ValType | None = None) -> ValType | None:
        if self.known:
            top = self.known.pop()
            if expected is not None and top != expected:
                raise _Invalid(f"expected {expected} on the stack, found {top}")
            return top
        if self.polymorphic:
            return expected
        raise _Invalid(
            f"expected {expected} on the stack, found an empty stack"
            if expected is not None
            else "expected a value on the stack, found an empty stack"
        )

    def pop_many(self, types: tuple[ValType, ...]) -> None:
        for t in reversed(types):
            self.pop(t)

    def make_polymorphic(self) -> None:
        self.known.clear()
        self.polymorphic = True

    def render(self) -> str:
        inner = ", ".join(str(t) for t in self.known)
        return ("[... " if self.polymorphic else "[") + inner + "]"


def _finish(shape: StackShape, expected: tuple[ValType, ...], what: str) -> None:
    """Check that a sequence ends with exactly ``expected`` on the stack."""
    got = list(shape.known)
    if shape.polymorphic:
        # The polymorphic base can supply any missing prefix, but the known
        # suffix must match the tail of the expected types.
        n = len(got)
        if n > len(expected) or (n and tuple(got) != tuple(expected[len(expected) - n :])):
            raise _Invalid(
                f"{what} must leave [{', '.join(map(str, expected))}], "
                f"found {shape.render()}"
            )
        return
    if tuple(got) != tuple(expected):
        raise _Invalid(
            f"{what} must leave [{', '.join(map(str, expected))}], found {shape.render()}"
        )


def check_handler_clause(
    C: TypingContext, h: HandlerClause, t2: tuple[ValType, ...]
) -> None:
    """Check ``(on tag label)`` against a handled computation producing t2*."""
    tag_ft = C.tag(h.tag)
    label_ty = C.label(h.label)
    cont_ty = RefType(ContHeap(FuncType(tag_ft.results, t2)))
    expected = tag_ft.params + (cont_ty,)
    if label_ty != expected:
        raise _Invalid(
            f"handler clause (on {h.tag} {h.label}): label expects "
            f"[{', '.join(map(str, label_ty))}], clause delivers "
            f"[{', '.join(map(str, expected))}]"
        )


def check_instr(C: TypingContext, i: Instr, shape: StackShape, path: str) -> None:
    """Advance ``shape`` across one instruction, or raise :class:`_Invalid`."""
    if isinstance(i, Const):
        shape.push(i.type)
    elif isinstance(i, LocalGet):
        shape.push(C.local(i.x))
    elif isinstance(i, LocalSet):
        shape.pop(C.local(i.x))
    elif isinstance(i, LocalTee):
        t = C.local(i.x)
        shape.pop(t)
        shape.push(t)
    elif isinstance(i, Block):
        shape.pop_many(i.bt.params)
        _check_body(C.with_label(i.bt.results), i.bt, i.body, f"{path}/block")
        shape.push(*i.bt.results)
    elif isinstance(i, Loop):
        shape.pop_many(i.bt.params)
        _check_body(C.with_label(i.bt.params), i.bt, i.body, f"{path}/loop")
        shape.push(*i.bt.results)
    elif isinstance(i, If):
        shape.pop(I32)
        shape.pop_many(i.bt.params)
        inner = C.with_label(i.bt.results)
        _check_body(inner, i.bt, i.then, f"{path}/if/then")
        if i.orelse:
            _check_body(inner, i.bt, i.orelse, f"{path}/if/else")
        elif i.bt.params != i.bt.results:
            raise _Invalid("(if ...) without (else ...) requires matching params and results")
        shape.push(*i.bt.results)
    elif isinstance(i, Br):
        shape.pop_many(C.label(i.l))
        shape.make_polymorphic()
    elif isinstance(i, BrIf):
        shape.pop(I32)
        lt = C.label(i.l)
        shape.pop_many(lt)
        shape.push(*lt)
    elif isinstance(i, Return):
        if C.results is None:
            raise _Invalid("return outside of a function body")
        shape.pop_many(C.results)
        shape.make_polymorphic()
    elif isinstance(i, Unreachable):
        shape.make_polymorphic()
    elif isinstance(i, Drop):
        shape.pop()
    elif isinstance(i, Call):
        ft = C.func(i.x)
        shape.pop_many(ft.params)
        shape.push(*ft.results)
    elif isinstance(i, CallRef):
        ft = C.func_heap(i.ft)
        shape.pop(RefType(FuncHeap(ft)))
        shape.pop_many(ft.params)
        shape.push(*ft.results)
    elif isinstance(i, ReturnCall):
        ft = C.func(i.x)
        if C.results is None:
            raise _Invalid("return_call outside of a function body")
        if ft.results != C.results:
            raise _Invalid(
                f"return_call target results [{', '.join(map(str, ft.results))}] differ "
                f"from the function's results [{', '.join(map(str, C.results))}]"
            )
        shape.pop_many(ft.params)
        shape.make_polymorphic()
    elif isinstance(i, RefNull):
        shape.push(RefType(C.heap(i.ft)))
    elif isinstance(i, RefFunc):
        shape.push(RefType(FuncHeap(C.func(i.x))))
    elif isinstance(i, RefIsNull):
        t = shape.pop()
        if t is not None and not isinstance(t, RefType):
            raise _Invalid(f"ref.is_null expects a reference, found {t}")
        shape.push(I32)
    elif isinstance(i, Throw):
        ft = C.tag(i.x)
        if ft.results:
            raise _Invalid(f"thrown tag {i.x} must have empty results, has "
                           f"[{', '.join(map(str, ft.results))}]")
        shape.pop_many(ft.params)
        shape.make_polymorphic()
    elif isinstance(i, Suspend):
        ft = C.tag(i.x)
        shape.pop_many(ft.params)
        shape.push(*ft.results)
    elif isinstance(i, ContNew):
        ft = C.cont_heap(i.ft)
        shape.pop(RefType(FuncHeap(ft)))
        shape.push(RefType(ContHeap(ft)))
    elif isinstance(i, Resume):
        ft = C.cont_heap(i.ft)
        for h in i.handlers:
            check_handler_clause(C, h, ft.results)
        shape.pop(RefType(ContHeap(ft)))
        shape.pop_many(ft.params)
        shape.push(*ft.results)
    elif isinstance(i, ContBind):
        src = C.cont_heap(i.src)
        dst = C.cont_heap(i.dst)
        n = len(src.params) - len(dst.params)
        if n < 0 or src.params[n:] != dst.params:
            raise _Invalid(
                f"cont.bind: target parameters [{', '.join(map(str, dst.params))}] are not "
                f"a suffix of source parameters [{', '.join(map(str, src.params))}]"
            )
        if src.results != dst.results:
            raise _Invalid("cont.bind: source and target result types differ")
        shape.pop(RefType(ContHeap(src)))
        shape.pop_many(src.params[:n])
        shape.push(RefType(ContHeap(dst)))
    elif isinstance(i, ResumeThrow):
        ft = C.cont_heap(i.ft)
        tag_ft = C.tag(i.x)
        if tag_ft.results:
            raise _Invalid(f"thrown tag {i.x} must have empty results, has "
                           f"[{', '.join(map(str, tag_ft.results))}]")
        for h in i.handlers:
            check_handler_clause(C, h, ft.results)
        shape.pop(RefType(ContHeap(ft)))
        shape.pop_many(tag_ft.params)
        shape.push(*ft.results)
    elif isinstance(i, IntBinOp):
        shape.pop(i.type)
        shape.pop(i.type)
        shape.push(i.type)
    elif isinstance(i, IntCmpOp):
        shape.pop(i.type)
        shape.pop(i.type)
        shape.push(I32)
    elif isinstance(i, IntEqz):
        shape.pop(i.type)
        shape.push(I32)
    else:
        raise _Invalid(f"unknown instruction {i!r}")


def check_seq(
    C: TypingContext, body: tuple[Instr, ...], shape: StackShape, path: str
) -> None:
    for n, i in enumerate(body):
        here = f"{path}/{n}"
        try:
            check_instr(C, i, shape, here)
        except _Invalid as e:
            raise _LocatedInvalid(here, e.message) from None


class _LocatedInvalid(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def _check_body(
    C: TypingContext, bt, body: tuple[Instr, ...], path: str
) -> None:
    shape = StackShape(list(bt.params))
    check_seq(C, body, shape, path)
    try:
        _finish(shape, bt.results, "body")
    except _Invalid as e:
        raise _LocatedInvalid(path, e.message) from None


def _check_builtin(f, path: str, errors: list[ValidationError]) -> None:
    assert isinstance(f.body, Builtin)
    spec = host.SIGNATURES.get(f.body.name)
    if spec is None:
        errors.append(ValidationError(path, f"unknown builtin {f.body.name!r}"))
        return
    problem = host.match_signature(spec, f.type)
    if problem is not None:
        errors.append(ValidationError(path, f"builtin {f.body.name!r}: {problem}"))


def validate_module(m: ModuleDef) -> list[ValidationError]:
    """Validate a module; an empty list means it is well-typed."""
    errors: list[ValidationError] = []
    C = context_for_module(m)

    for x, f in enumerate(m.funcs):
        label = f"func[{x}]" + (f" ({f.name})" if f.name else "")
        if isinstance(f.body, Builtin):
            _check_builtin(f, label, errors)
            continue
        fc = TypingContext(
            funcs=C.funcs,
            tags=C.tags,
            types=C.types,
            locals=f.type.params + f.locals,
            labels=(),
            results=f.type.results,
        )
        shape = StackShape([])
        try:
            check_seq(fc, f.body, shape, label)
            _finish(shape, f.type.results, "function body")
        except _LocatedInvalid as e:
            errors.append(ValidationError(e.path, e.message))
        except _Invalid as e:
            errors.append(ValidationError(label, e.message))

    if m.start is not None:
        if not 0 <= m.start < len(m.funcs):
            errors.append(ValidationError("start", f"function index {m.start} out of range"))
        elif m.funcs[m.start].type != FuncType((), ()):
            errors.append(ValidationError("start", "start function must have type [] -> []"))

    return errors
