"""Text format: s-expression parser and canonical printer.

The input syntax follows the WebAssembly text conventions for the subset
implemented here: folded instruction forms (``(i32.add (i32.const 30)
(i32.const 12))``), flat forms (a bare mnemonic followed by its immediates),
symbolic ``$names`` for types, functions, tags, locals and labels, and
``;;`` / ``(; ... ;)`` comments.

``parse_module`` resolves every symbolic name to its numeric index — labels
become de Bruijn indices — so the AST carries no names except optional debug
names on definitions.  ``print_module`` emits a canonical, fully numeric,
non-folded rendering that re-parses to a structurally equal module.

``parse_script`` accepts a module followed by ``(invoke fn const*)`` forms,
the harness's way of scripting entry-point calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .syntax import (
    BIN_OPS,
    CMP_OPS,
    Block,
    BlockType,
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
    FuncDef,
    FuncHeap,
    FuncType,
    HandlerClause,
    HeapType,
    I32,
    I64,
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
    NumType,
    RefFunc,
    RefIsNull,
    RefNull,
    RefType,
    Resume,
    ResumeThrow,
    Return,
    ReturnCall,
    Suspend,
    TagDef,
    Throw,
    TypeDef,
    Unreachable,
    ValType,
)


# ---------------------------------------------------------------------------
# Source positions and errors


@dataclass(frozen=True, slots=True)
class SourceSpan:
    start: int
    end: int
    line: int
    column: int

    def __str__(self) -> str:
        return f"line {self.line}, column {self.column}"


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{span}: {message}")
        self.message = message
        self.span = span


# ---------------------------------------------------------------------------
# Reader: source text -> s-expression trees


@dataclass(frozen=True, slots=True)
class Atom:
    text: str
    span: SourceSpan


@dataclass(frozen=True, slots=True)
class Str:
    value: str
    span: SourceSpan


@dataclass(frozen=True, slots=True)
class SList:
    items: tuple["Form", ...]
    span: SourceSpan


Form = Union[Atom, Str, SList]

_ATOM_END = set(' \t\r\n();"')


class _Reader:
    def __init__(self, source: str):
        self.src = source
        self.pos = 0
        self.line_starts = [0]
        for i, ch in enumerate(source):
            if ch == "\n":
                self.line_starts.append(i + 1)

    def span(self, start: int, end: int) -> SourceSpan:
        import bisect

        line = bisect.bisect_right(self.line_starts, start)
        col = start - self.line_starts[line - 1] + 1
        return SourceSpan(start, end, line, col)

    def error(self, message: str, start: int) -> ParseError:
        return ParseError(message, self.span(start, start + 1))

    def skip_trivia(self) -> None:
        src, n = self.src, len(self.src)
        while self.pos < n:
            ch = src[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == ";" and self.pos + 1 < n and src[self.pos + 1] == ";":
                nl = src.find("\n", self.pos)
                self.pos = n if nl < 0 else nl + 1
            elif ch == "(" and self.pos + 1 < n and src[self.pos + 1] == ";":
                depth, i, start = 1, self.pos + 2, self.pos
                while i < n and depth:
                    if src.startswith("(;", i):
                        depth += 1
                        i += 2
                    elif src.startswith(";)", i):
                        depth -= 1
                        i += 2
                    else:
                        i += 1
                if depth:
                    raise self.error("unterminated block comment", start)
                self.pos = i
            else:
                return

    def read_all(self) -> list[Form]:
        forms = []
        self.skip_trivia()
        while self.pos < len(self.src):
            forms.append(self.read_form())
            self.skip_trivia()
        return forms

    def read_form(self) -> Form:
        src, start = self.src, self.pos
        ch = src[start]
        if ch == "(":
            self.pos += 1
            items = []
            while True:
                self.skip_trivia()
                if self.pos >= len(src):
                    raise self.error("unbalanced '(': missing ')'", start)
                if src[self.pos] == ")":
                    self.pos += 1
                    return SList(tuple(items), self.span(start, self.pos))
                items.append(self.read_form())
        if ch == ")":
            raise self.error("unbalanced ')'", start)
        if ch == '"':
            i = start + 1
            out = []
            while i < len(src) and src[i] != '"':
                if src[i] == "\\" and i + 1 < len(src):
                    out.append(src[i + 1])
                    i += 2
                else:
                    out.append(src[i])
                    i += 1
            if i >= len(src):
                raise self.error("unterminated string literal", start)
            self.pos = i + 1
            return Str("".join(out), self.span(start, self.pos))
        i = start
        while i < len(src) and src[i] not in _ATOM_END:
            i += 1
        if i == start:
            raise self.error(f"unexpected character {ch!r}", start)
        self.pos = i
        return Atom(src[start:i], self.span(start, i))


# ---------------------------------------------------------------------------
# Helpers over forms


def _is_list(form: Form, head: str) -> bool:
    return (
        isinstance(form, SList)
        and len(form.items) > 0
        and isinstance(form.items[0], Atom)
        and form.items[0].text == head
    )


def _head(form: SList) -> str:
    first = form.items[0]
    assert isinstance(first, Atom)
    return first.text


def _err(message: str, form: Form) -> ParseError:
    return ParseError(message, form.span)


def _parse_int(atom: Form, bits: int | None = None) -> int:
    if not isinstance(atom, Atom):
        raise _err("expected an integer literal", atom)
    text = atom.text.replace("_", "")
    neg = text.startswith("-")
    if text.startswith(("+", "-")):
        text = text[1:]
    try:
        value = int(text, 16) if text.lower().startswith("0x") else int(text, 10)
    except ValueError:
        raise _err(f"malformed integer literal {atom.text!r}", atom) from None
    if neg:
        value = -value
    if bits is not None:
        lo, hi = -(1 << (bits - 1)), (1 << bits) - 1
        if not lo <= value <= hi:
            raise _err(f"literal {atom.text} out of i{bits} range", atom)
        value &= (1 << bits) - 1
    elif value < 0:
        raise _err("index cannot be negative", atom)
    return value


class _SymbolTable:
    """Index space with optional $names (types, funcs, tags, locals)."""

    def __init__(self, kind: str):
        self.kind = kind
        self.names: dict[str, int] = {}
        self.count = 0

    def add(self, name: str | None, form: Form) -> int:
        idx = self.count
        self.count += 1
        if name is not None:
            if name in self.names:
                raise _err(f"duplicate {self.kind} name {name}", form)
            self.names[name] = idx
        return idx

    def resolve(self, ref: Form) -> int:
        if isinstance(ref, Atom) and ref.text.startswith("$"):
            idx = self.names.get(ref.text)
            if idx is None:
                raise _err(f"unbound {self.kind} name {ref.text}", ref)
            return idx
        idx = _parse_int(ref)
        if idx >= self.count:
            raise _err(f"{self.kind} index {idx} out of range", ref)
        return idx


def _opt_name(items: tuple[Form, ...], at: int) -> tuple[str | None, int]:
    if at < len(items) and isinstance(items[at], Atom) and items[at].text.startswith("$"):
        return items[at].text, at + 1
    return None, at


# ---------------------------------------------------------------------------
# Module parsing


class _ModuleParser:
    def __init__(self, form: SList):
        self.form = form
        self.types = _SymbolTable("type")
        self.funcs = _SymbolTable("func")
        self.tags = _SymbolTable("tag")
        self.heaps: list[HeapType | None] = []
        self.type_names: list[str | None] = []

    def parse(self) -> ModuleDef:
        type_forms: list[SList] = []
        tag_forms: list[SList] = []
        func_forms: list[SList] = []
        start_form: SList | None = None
        for item in self.form.items[1:]:
            if not isinstance(item, SList) or not item.items or not isinstance(item.items[0], Atom):
                raise _err("expected a module field", item)
            head = _head(item)
            if head == "type":
                type_forms.append(item)
            elif head == "tag":
                tag_forms.append(item)
            elif head == "func":
                func_forms.append(item)
            elif head == "start":
                if start_form is not None:
                    raise _err("duplicate start field", item)
                start_form = item
            else:
                raise _err(f"unknown module field ({head} ...)", item)

        # Index spaces first so definitions may reference forward.
        for tf in type_forms:
            name, at = _opt_name(tf.items, 1)
            self.types.add(name, tf)
            self.type_names.append(name)
            self.heaps.append(None)
        for gf in tag_forms:
            name, _ = _opt_name(gf.items, 1)
            self.tags.add(name, gf)
        func_names: list[str | None] = []
        for ff in func_forms:
            name, _ = _opt_name(ff.items, 1)
            self.funcs.add(name, ff)
            func_names.append(name)

        # Function-type definitions are self-contained; continuation types
        # then resolve their referenced function type structurally.
        pending: list[tuple[int, SList]] = []
        for i, tf in enumerate(type_forms):
            _, at = _opt_name(tf.items, 1)
            if at >= len(tf.items) or not isinstance(tf.items[at], SList):
                raise _err("type definition needs (func ...) or (cont ...)", tf)
            body = tf.items[at]
            if at + 1 != len(tf.items):
                raise _err("trailing forms in type definition", tf.items[at + 1])
            if _is_list(body, "func"):
                self.heaps[i] = FuncHeap(self._functype(body.items[1:], body))
            elif _is_list(body, "cont"):
                pending.append((i, body))
            else:
                raise _err("type definition needs (func ...) or (cont ...)", body)
        for i, body in pending:
            if len(body.items) != 2:
                raise _err("(cont ...) takes exactly one function-type reference", body)
            j = self.types.resolve(body.items[1])
            target = self.heaps[j]
            if target is None or not isinstance(target, FuncHeap):
                raise _err("(cont ...) must reference a (func ...) type", body.items[1])
            self.heaps[i] = ContHeap(target.ft)

        tags = tuple(self._parse_tag(gf) for gf in tag_forms)
        funcs = tuple(self._parse_func(ff, func_names[i]) for i, ff in enumerate(func_forms))

        start = None
        if start_form is not None:
            if len(start_form.items) != 2:
                raise _err("(start ...) takes exactly one function reference", start_form)
            start = self.funcs.resolve(start_form.items[1])

        types = tuple(
            TypeDef(heap=h, name=n) for h, n in zip(self.heaps, self.type_names)  # type: ignore[arg-type]
        )
        return ModuleDef(types=types, tags=tags, funcs=funcs, start=start)

    # -- types ------------------------------------------------------------

    def _valtype(self, form: Form) -> ValType:
        if isinstance(form, Atom):
            if form.text == "i32":
                return I32
            if form.text == "i64":
                return I64
            raise _err(f"unknown value type {form.text!r}", form)
        if _is_list(form, "ref"):
            items = form.items[1:]
            if items and isinstance(items[0], Atom) and items[0].text == "null":
                items = items[1:]
            if len(items) != 1:
                raise _err("(ref ...) takes one type reference", form)
            idx = self.types.resolve(items[0])
            heap = self.heaps[idx]
            if heap is None:
                raise _err("reference to an unresolved type", items[0])
            return RefType(heap)
        raise _err("expected a value type", form)

    def _functype(self, items: tuple[Form, ...], ctx: Form) -> FuncType:
        params, results = self._params_results(items, ctx, allow_names=False)
        return FuncType(tuple(t for _, t in params), tuple(results))

    def _params_results(
        self, items: tuple[Form, ...], ctx: Form, allow_names: bool
    ) -> tuple[list[tuple[str | None, ValType]], list[ValType]]:
        params: list[tuple[str | None, ValType]] = []
        results: list[ValType] = []
        seen_result = False
        for item in items:
            if _is_list(item, "param"):
                if seen_result:
                    raise _err("(param ...) after (result ...)", item)
                inner = item.items[1:]
                if (
                    allow_names
                    and inner
                    and isinstance(inner[0], Atom)
                    and inner[0].text.startswith("$")
                ):
                    if len(inner) != 2:
                        raise _err("named (param ...) declares exactly one type", item)
                    params.append((inner[0].text, self._valtype(inner[1])))
                else:
                    for t in inner:
                        params.append((None, self._valtype(t)))
            elif _is_list(item, "result"):
                seen_result = True
                for t in item.items[1:]:
                    results.append(self._valtype(t))
            else:
                raise _err("expected (param ...) or (result ...)", item)
        return params, results

    def _parse_tag(self, form: SList) -> TagDef:
        name, at = _opt_name(form.items, 1)
        ft = self._functype(form.items[at:], form)
        return TagDef(type=ft, name=name)

    # -- functions ----------------------------------------------------------

    def _parse_func(self, form: SList, name: str | None) -> FuncDef:
        _, at = _opt_name(form.items, 1)
        items = form.items[at:]

        typeuse: int | None = None
        if items and _is_list(items[0], "type"):
            tu = items[0]
            if len(tu.items) != 2:
                raise _err("(type ...) takes one type reference", tu)
            typeuse = self.types.resolve(tu.items[1])
            heap = self.heaps[typeuse]
            if not isinstance(heap, FuncHeap):
                raise _err("function type-use must reference a (func ...) type", tu)
            items = items[1:]

        sig_forms = []
        while items and (_is_list(items[0], "param") or _is_list(items[0], "result")):
            sig_forms.append(items[0])
            items = items[1:]
        params, results = self._params_results(tuple(sig_forms), form, allow_names=True)

        if typeuse is not None:
            if sig_forms:
                raise _err("function has both a type-use and inline (param)/(result)", form)
            heap = self.heaps[typeuse]
            assert isinstance(heap, FuncHeap)
            ft = heap.ft
            param_names: dict[str, int] = {}
        else:
            ft = FuncType(tuple(t for _, t in params), tuple(results))
            param_names = {n: i for i, (n, _) in enumerate(params) if n is not None}

        local_types: list[ValType] = []
        local_names: dict[str, int] = dict(param_names)
        while items and _is_list(items[0], "local"):
            inner = items[0].items[1:]
            if inner and isinstance(inner[0], Atom) and inner[0].text.startswith("$"):
                if len(inner) != 2:
                    raise _err("named (local ...) declares exactly one type", items[0])
                lname = inner[0].text
                if lname in local_names:
                    raise _err(f"duplicate local name {lname}", items[0])
                local_names[lname] = len(ft.params) + len(local_types)
                local_types.append(self._valtype(inner[1]))
            else:
                for t in inner:
                    local_types.append(self._valtype(t))
            items = items[1:]

        if len(items) == 1 and _is_list(items[0], "builtin"):
            bform = items[0]
            if len(bform.items) != 2 or not isinstance(bform.items[1], Str):
                raise _err('(builtin ...) takes one quoted name, e.g. (builtin "print")', bform)
            if local_types:
                raise _err("builtin functions cannot declare locals", bform)
            return FuncDef(type=ft, locals=(), body=Builtin(bform.items[1].value), name=name)

        env = _FuncEnv(self, local_names)
        body = env.parse_seq(items)
        return FuncDef(type=ft, locals=tuple(local_types), body=tuple(body), name=name)


# ---------------------------------------------------------------------------
# Instruction parsing


_FLAT_IMMEDIATES = {
    "i32.const": 1,
    "i64.const": 1,
    "local.get": 1,
    "local.set": 1,
    "local.tee": 1,
    "br": 1,
    "br_if": 1,
    "call": 1,
    "return_call": 1,
    "ref.func": 1,
    "ref.null": 1,
    "call_ref": 1,
    "cont.new": 1,
    "throw": 1,
    "suspend": 1,
    "resume": 1,
    "resume_throw": 2,
    "cont.bind": 2,
    "return": 0,
    "unreachable": 0,
    "drop": 0,
    "ref.is_null": 0,
}
for _t in ("i32", "i64"):
    for _op in BIN_OPS + CMP_OPS:
        _FLAT_IMMEDIATES[f"{_t}.{_op}"] = 0
    _FLAT_IMMEDIATES[f"{_t}.eqz"] = 0


class _FuncEnv:
    """Per-function-body parsing state: locals and the label stack."""

    def __init__(self, mp: _ModuleParser, local_names: dict[str, int]):
        self.mp = mp
        self.local_names = local_names
        self.labels: list[str | None] = []  # innermost last

    # -- index resolution ---------------------------------------------------

    def local_ref(self, form: Form) -> int:
        if isinstance(form, Atom) and form.text.startswith("$"):
            idx = self.local_names.get(form.text)
            if idx is None:
                raise _err(f"unbound local name {form.text}", form)
            return idx
        return _parse_int(form)

    def label_ref(self, form: Form) -> int:
        if isinstance(form, Atom) and form.text.startswith("$"):
            for depth, lname in enumerate(reversed(self.labels)):
                if lname == form.text:
                    return depth
            raise _err(f"unbound label name {form.text}", form)
        return _parse_int(form)

    # -- sequences ------------------------------------------------------------

    def parse_seq(self, forms: tuple[Form, ...] | list[Form]) -> list[Instr]:
        out: list[Instr] = []
        i = 0
        forms = list(forms)
        while i < len(forms):
            form = forms[i]
            if isinstance(form, SList):
                out.extend(self.parse_folded(form))
                i += 1
            elif isinstance(form, Atom):
                i = self.parse_flat(forms, i, out)
            else:
                raise _err("unexpected string literal in instruction sequence", form)
        return out

    def parse_flat(self, forms: list[Form], i: int, out: list[Instr]) -> int:
        mnem = forms[i]
        assert isinstance(mnem, Atom)
        count = _FLAT_IMMEDIATES.get(mnem.text)
        if count is None:
            raise _err(f"unknown instruction mnemonic {mnem.text!r}", mnem)
        imms = forms[i + 1 : i + 1 + count]
        if len(imms) < count:
            raise _err(f"{mnem.text} expects {count} immediate(s)", mnem)
        i += 1 + count
        clauses: list[HandlerClause] = []
        if mnem.text in ("resume", "resume_throw"):
            while i < len(forms) and _is_list(forms[i], "on"):
                clauses.append(self.parse_clause(forms[i]))  # type: ignore[arg-type]
                i += 1
        out.append(self.build_instr(mnem, imms, clauses))
        return i

    def parse_folded(self, form: SList) -> list[Instr]:
        if not form.items or not isinstance(form.items[0], Atom):
            raise _err("expected an instruction", form)
        head = _head(form)
        if head in ("block", "loop"):
            return [self.parse_block(form, head)]
        if head == "if":
            return self.parse_if(form)
        if head in ("then", "else", "on"):
            raise _err(f"({head} ...) is only valid inside its parent form", form)
        count = _FLAT_IMMEDIATES.get(head)
        if count is None:
            raise _err(f"unknown instruction mnemonic {head!r}", form)
        mnem = form.items[0]
        assert isinstance(mnem, Atom)
        imms = form.items[1 : 1 + count]
        if len(imms) < count:
            raise _err(f"{head} expects {count} immediate(s)", form)
        rest = form.items[1 + count :]
        clauses: list[HandlerClause] = []
        if head in ("resume", "resume_throw"):
            while rest and _is_list(rest[0], "on"):
                clauses.append(self.parse_clause(rest[0]))  # type: ignore[arg-type]
                rest = rest[1:]
            for r in rest:
                if _is_list(r, "on"):
                    raise _err("(on ...) clauses must precede folded operands", r)
        out: list[Instr] = []
        for operand in rest:
            if not isinstance(operand, SList):
                raise _err("folded operands must be parenthesized", operand)
            out.extend(self.parse_folded(operand))
        out.append(self.build_instr(mnem, imms, clauses))
        return out

    def parse_clause(self, form: SList) -> HandlerClause:
        if len(form.items) != 3:
            raise _err("(on ...) takes a tag and a label", form)
        tag = self.mp.tags.resolve(form.items[1])
        label = self.label_ref(form.items[2])
        return HandlerClause(tag=tag, label=label)

    def parse_blocktype(self, items: tuple[Form, ...]) -> tuple[BlockType, tuple[Form, ...]]:
        sig = []
        while items and (_is_list(items[0], "param") or _is_list(items[0], "result")):
            sig.append(items[0])
            items = items[1:]
        if sig:
            params, results = self.mp._params_results(tuple(sig), sig[0], allow_names=False)
            return BlockType(tuple(t for _, t in params), tuple(results)), items
        return BlockType((), ()), items

    def parse_block(self, form: SList, head: str) -> Instr:
        name, at = _opt_name(form.items, 1)
        bt, rest = self.parse_blocktype(form.items[at:])
        self.labels.append(name)
        try:
            body = tuple(self.parse_seq(rest))
        finally:
            self.labels.pop()
        return Block(bt, body) if head == "block" else Loop(bt, body)

    def parse_if(self, form: SList) -> list[Instr]:
        name, at = _opt_name(form.items, 1)
        bt, rest = self.parse_blocktype(form.items[at:])
        cond_forms = []
        while rest and not _is_list(rest[0], "then"):
            cond_forms.append(rest[0])
            rest = rest[1:]
        if not rest:
            raise _err("(if ...) requires a (then ...) arm", form)
        then_form = rest[0]
        rest = rest[1:]
        else_form: SList | None = None
        if rest:
            if not _is_list(rest[0], "else"):
                raise _err("expected (else ...) after (then ...)", rest[0])
            else_form = rest[0]  # type: ignore[assignment]
            rest = rest[1:]
        if rest:
            raise _err("trailing forms after (else ...)", rest[0])

        out: list[Instr] = []
        for cf in cond_forms:
            if not isinstance(cf, SList):
                raise _err("folded if condition must be parenthesized", cf)
            out.extend(self.parse_folded(cf))
        self.labels.append(name)
        try:
            assert isinstance(then_form, SList)
            then_body = tuple(self.parse_seq(then_form.items[1:]))
            else_body: tuple[Instr, ...] = ()
            if else_form is not None:
                else_body = tuple(self.parse_seq(else_form.items[1:]))
        finally:
            self.labels.pop()
        out.append(If(bt, then_body, else_body))
        return out

    # -- single instructions ------------------------------------------------

    def build_instr(
        self, mnem: Atom, imms: tuple[Form, ...] | list[Form], clauses: list[HandlerClause]
    ) -> Instr:
        name = mnem.text
        mp = self.mp
        if name == "i32.const":
            return Const(I32, _parse_int(imms[0], bits=32))
        if name == "i64.const":
            return Const(I64, _parse_int(imms[0], bits=64))
        if name == "local.get":
            return LocalGet(self.local_ref(imms[0]))
        if name == "local.set":
            return LocalSet(self.local_ref(imms[0]))
        if name == "local.tee":
            return LocalTee(self.local_ref(imms[0]))
        if name == "br":
            return Br(self.label_ref(imms[0]))
        if name == "br_if":
            return BrIf(self.label_ref(imms[0]))
        if name == "call":
            return Call(mp.funcs.resolve(imms[0]))
        if name == "return_call":
            return ReturnCall(mp.funcs.resolve(imms[0]))
        if name == "ref.func":
            return RefFunc(mp.funcs.resolve(imms[0]))
        if name == "ref.null":
            return RefNull(mp.types.resolve(imms[0]))
        if name == "call_ref":
            return CallRef(mp.types.resolve(imms[0]))
        if name == "cont.new":
            return ContNew(mp.types.resolve(imms[0]))
        if name == "throw":
            return Throw(mp.tags.resolve(imms[0]))
        if name == "suspend":
            return Suspend(mp.tags.resolve(imms[0]))
        if name == "resume":
            return Resume(mp.types.resolve(imms[0]), tuple(clauses))
        if name == "resume_throw":
            return ResumeThrow(
                mp.types.resolve(imms[0]), mp.tags.resolve(imms[1]), tuple(clauses)
            )
        if name == "cont.bind":
            return ContBind(mp.types.resolve(imms[0]), mp.types.resolve(imms[1]))
        if name == "return":
            return Return()
        if name == "unreachable":
            return Unreachable()
        if name == "drop":
            return Drop()
        if name == "ref.is_null":
            return RefIsNull()
        prefix, _, op = name.partition(".")
        ty = I32 if prefix == "i32" else I64
        if op in BIN_OPS:
            return IntBinOp(ty, op)
        if op in CMP_OPS:
            return IntCmpOp(ty, op)
        if op == "eqz":
            return IntEqz(ty)
        raise _err(f"unknown instruction mnemonic {name!r}", mnem)


# ---------------------------------------------------------------------------
# Entry points


@dataclass(frozen=True, slots=True)
class Invocation:
    """One scripted entry-point call: function index plus constant arguments."""

    func: int
    args: tuple[Const, ...]


def _read_one_module(source: str) -> tuple[SList, list[Form]]:
    forms = _Reader(source).read_all()
    if not forms:
        raise ParseError("empty input", SourceSpan(0, 0, 1, 1))
    first = forms[0]
    if not _is_list(first, "module"):
        raise _err("expected (module ...)", first)
    assert isinstance(first, SList)
    return first, forms[1:]


def parse_module(source: str) -> ModuleDef:
    """Parse a single ``(module ...)`` form; trailing forms are rejected."""
    mform, rest = _read_one_module(source)
    if rest:
        raise _err("unexpected form after (module ...)", rest[0])
    return _ModuleParser(mform).parse()


def parse_script(source: str) -> tuple[ModuleDef, list[Invocation]]:
    """Parse a module followed by zero or more ``(invoke fn const*)`` forms."""
    mform, rest = _read_one_module(source)
    parser = _ModuleParser(mform)
    module = parser.parse()
    invocations = []
    for form in rest:
        if not _is_list(form, "invoke"):
            raise _err("expected (invoke ...)", form)
        assert isinstance(form, SList)
        if len(form.items) < 2:
            raise _err("(invoke ...) needs a function reference", form)
        target = form.items[1]
        if isinstance(target, Str):
            idx = module.func_index(target.value)
            if idx is None:
                raise _err(f"unknown function {target.value!r}", target)
        else:
            idx = parser.funcs.resolve(target)
        args = []
        for aform in form.items[2:]:
            if not isinstance(aform, SList) or _head(aform) not in ("i32.const", "i64.const"):
                raise _err("invoke arguments must be (i32.const ...) or (i64.const ...)", aform)
            env = _FuncEnv(parser, {})
            seq = env.parse_folded(aform)
            assert len(seq) == 1 and isinstance(seq[0], Const)
            args.append(seq[0])
        invocations.append(Invocation(func=idx, args=tuple(args)))
    return module, invocations


# ---------------------------------------------------------------------------
# Printer


def _print_valtype(t: ValType, types: tuple[TypeDef, ...]) -> str:
    if isinstance(t, NumType):
        return str(t)
    assert isinstance(t, RefType)
    for i, td in enumerate(types):
        if td.heap == t.heap:
            return f"(ref {i})"
    raise ValueError(f"reference type {t} does not match any module type definition")


def _print_sig(params, results, types) -> str:
    parts = []
    if params:
        parts.append("(param " + " ".join(_print_valtype(t, types) for t in params) + ")")
    if results:
        parts.append("(result " + " ".join(_print_valtype(t, types) for t in results) + ")")
    return " ".join(parts)


class _Printer:
    def __init__(self, m: ModuleDef):
        self.m = m
        self.lines: list[str] = []

    def emit(self, depth: int, text: str) -> None:
        self.lines.append("  " * depth + text)

    def instr(self, i: Instr, depth: int) -> None:
        ts = self.m.types
        if isinstance(i, (Block, Loop)):
            head = "block" if isinstance(i, Block) else "loop"
            sig = _print_sig(i.bt.params, i.bt.results, ts)
            self.emit(depth, f"({head}" + (f" {sig}" if sig else ""))
            for b in i.body:
                self.instr(b, depth + 1)
            self.emit(depth, ")")
            return
        if isinstance(i, If):
            sig = _print_sig(i.bt.params, i.bt.results, ts)
            self.emit(depth, "(if" + (f" {sig}" if sig else ""))
            self.emit(depth + 1, "(then")
            for b in i.then:
                self.instr(b, depth + 2)
            self.emit(depth + 1, ")")
            self.emit(depth + 1, "(else")
            for b in i.orelse:
                self.instr(b, depth + 2)
            self.emit(depth + 1, ")")
            self.emit(depth, ")")
            return
        self.emit(depth, f"({self.flat(i)})")

    def flat(self, i: Instr) -> str:
        if isinstance(i, Const):
            return f"{i.type}.const {i.value}"
        if isinstance(i, LocalGet):
            return f"local.get {i.x}"
        if isinstance(i, LocalSet):
            return f"local.set {i.x}"
        if isinstance(i, LocalTee):
            return f"local.tee {i.x}"
        if isinstance(i, Br):
            return f"br {i.l}"
        if isinstance(i, BrIf):
            return f"br_if {i.l}"
        if isinstance(i, Return):
            return "return"
        if isinstance(i, Unreachable):
            return "unreachable"
        if isinstance(i, Drop):
            return "drop"
        if isinstance(i, Call):
            return f"call {i.x}"
        if isinstance(i, CallRef):
            return f"call_ref {i.ft}"
        if isinstance(i, ReturnCall):
            return f"return_call {i.x}"
        if isinstance(i, RefNull):
            return f"ref.null {i.ft}"
        if isinstance(i, RefFunc):
            return f"ref.func {i.x}"
        if isinstance(i, RefIsNull):
            return "ref.is_null"
        if isinstance(i, Throw):
            return f"throw {i.x}"
        if isinstance(i, ContNew):
            return f"cont.new {i.ft}"
        if isinstance(i, Suspend):
            return f"suspend {i.x}"
        if isinstance(i, Resume):
            clauses = "".join(f" (on {h.tag} {h.label})" for h in i.handlers)
            return f"resume {i.ft}{clauses}"
        if isinstance(i, ResumeThrow):
            clauses = "".join(f" (on {h.tag} {h.label})" for h in i.handlers)
            return f"resume_throw {i.ft} {i.x}{clauses}"
        if isinstance(i, ContBind):
            return f"cont.bind {i.src} {i.dst}"
        if isinstance(i, IntBinOp):
            return f"{i.type}.{i.op}"
        if isinstance(i, IntCmpOp):
            return f"{i.type}.{i.op}"
        if isinstance(i, IntEqz):
            return f"{i.type}.eqz"
        raise ValueError(f"unprintable instruction {i!r}")

    def render(self) -> str:
        m = self.m
        self.emit(0, "(module")
        for td in m.types:
            if isinstance(td.heap, FuncHeap):
                sig = _print_sig(td.heap.ft.params, td.heap.ft.results, m.types)
                self.emit(1, f"(type (func{' ' + sig if sig else ''}))")
            else:
                assert isinstance(td.heap, ContHeap)
                target = None
                for j, other in enumerate(m.types):
                    if isinstance(other.heap, FuncHeap) and other.heap.ft == td.heap.ft:
                        target = j
                        break
                if target is None:
                    raise ValueError("continuation type lacks a matching function type")
                self.emit(1, f"(type (cont {target}))")
        for tg in m.tags:
            sig = _print_sig(tg.type.params, tg.type.results, m.types)
            self.emit(1, f"(tag{' ' + sig if sig else ''})")
        for f in m.funcs:
            sig = _print_sig(f.type.params, f.type.results, m.types)
            header = "(func" + (f" {sig}" if sig else "")
            if f.locals:
                header += " (local " + " ".join(_print_valtype(t, m.types) for t in f.locals) + ")"
            if isinstance(f.body, Builtin):
                self.emit(1, f'{header} (builtin "{f.body.name}"))')
                continue
            self.emit(1, header)
            for i in f.body:
                self.instr(i, 2)
            self.emit(1, ")")
        if m.start is not None:
            self.emit(1, f"(start {m.start})")
        self.emit(0, ")")
        return "\n".join(self.lines) + "\n"


def print_module(m: ModuleDef) -> str:
    """Canonical text rendering: flat instructions, numeric indices."""
    return _Printer(m).render()
