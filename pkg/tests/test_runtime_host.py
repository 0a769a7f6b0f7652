"""Runtime data structures and host builtins."""

import pytest

from effwasm.host import (
    CONT,
    HostState,
    HostTrap,
    I32_SLOT,
    I64_SLOT,
    SignatureSpec,
    builtin_signatures,
    call_builtin,
    match_signature,
)
from effwasm.runtime import (
    AdminLabel,
    ContRefV,
    FrameLayer,
    Frame,
    I32V,
    I64V,
    LinearityViolation,
    NullV,
    Store,
    TrapItem,
    UncaughtThrow,
    UnhandledSuspend,
    Values,
    ValuesThen,
    Trap,
    default_value,
    describe_result,
    plug,
    render_value,
    signed,
)
from effwasm.syntax import ContHeap, FuncHeap, FuncType, I32, I64, RefType
from effwasm.text import parse_module

EMPTY_FT = FuncType((), ())


def _module():
    return parse_module("(module (tag $boom) (tag $ask (param i32)) (func $f))")


def _store():
    return Store(_module())


# ---------------------------------------------------------------------------
# Values and rendering


def test_render_values_signed_and_refs():
    assert render_value(I32V(2**32 - 5)) == "-5"
    assert render_value(I64V(2**64 - 1)) == "-1"
    assert render_value(I32V(7)) == "7"
    assert render_value(NullV(FuncHeap(EMPTY_FT))) == "null"
    assert render_value(ContRefV(3)) == "contref:3"


def test_signed_helper_covers_both_hemispheres():
    assert signed(0, 32) == 0
    assert signed(2**31 - 1, 32) == 2**31 - 1
    assert signed(2**31, 32) == -(2**31)
    assert signed(2**64 - 2, 64) == -2


def test_default_values_zero_initialize():
    assert default_value(I32) == I32V(0)
    assert default_value(I64) == I64V(0)
    heap = ContHeap(EMPTY_FT)
    assert default_value(RefType(heap)) == NullV(heap)


def test_describe_result_names_tags():
    m = _module()
    assert describe_result(Trap("unreachable"), m) == "trap: unreachable"
    assert describe_result(UncaughtThrow(0, ()), m) == "uncaught exception: $boom"
    assert describe_result(UnhandledSuspend(1, (I32V(3),)), m) == "trap: unhandled tag $ask"
    assert describe_result(Values((I32V(1),)), m) == "values"


# ---------------------------------------------------------------------------
# Continuation store: linearity and address discipline


def test_cont_addresses_are_monotonic_and_never_reused():
    store = _store()
    ctx = [ValuesThen([], ())]
    a0 = store.alloc_cont(ctx, (), ())
    a1 = store.alloc_cont([ValuesThen([], ())], (), ())
    assert (a0, a1) == (0, 1)
    store.consume_cont(a0)
    a2 = store.alloc_cont([ValuesThen([], ())], (), ())
    assert a2 == 2  # consumption frees nothing; addresses stay unique


def test_consume_cont_marks_dead_and_double_consume_raises():
    store = _store()
    a = store.alloc_cont([ValuesThen([], ())], (), ())
    assert store.conts[a].alive
    store.consume_cont(a)
    assert not store.conts[a].alive
    with pytest.raises(LinearityViolation, match="already consumed"):
        store.consume_cont(a)


def test_dead_entry_keeps_its_type_metadata():
    store = _store()
    a = store.alloc_cont([ValuesThen([], ())], (I32,), (I64,))
    store.consume_cont(a)
    entry = store.conts[a]
    assert entry.cont_type() == FuncType((I32,), (I64,))


# ---------------------------------------------------------------------------
# plug: fresh structure, no aliasing of context spines


def test_plug_builds_fresh_lists():
    inner = ValuesThen([I32V(1)], ())
    ctx = [
        ValuesThen([], ()),
        FrameLayer(Frame([I32V(9)]), ()),
        inner,
    ]
    hole = [TrapItem("marker")]
    plugged = plug(ctx, hole)
    # mutating the plugged tree must not disturb the stored context
    frame_node = plugged[0]
    assert frame_node.__class__.__name__ == "AdminFrame"
    plugged.append(I32V(42))
    frame_node.body.append(I32V(43))
    assert inner.values == [I32V(1)]
    assert ctx[0].values == []
    replugged = plug(ctx, [TrapItem("other")])
    assert not any(
        isinstance(item, I32V) and item.v in (42, 43) for item in replugged
    )


def test_plug_wraps_regions_in_admin_nodes():
    ctx = [
        ValuesThen([I32V(5)], ()),
        FrameLayer(Frame([]), (I32,)),
        ValuesThen([], ()),
    ]
    plugged = plug(ctx, [I32V(1)])
    assert plugged[0] == I32V(5)
    assert plugged[1].__class__.__name__ == "AdminFrame"
    assert plugged[1].body == [I32V(1)]


# ---------------------------------------------------------------------------
# Builtin signature templates


def test_signature_registry_is_copied_and_complete():
    sigs = builtin_signatures()
    sigs.pop("print")
    assert "print" in builtin_signatures()
    assert {
        "print",
        "print_i64",
        "queue_empty",
        "enqueue",
        "dequeue",
        "mb_new",
        "mb_send",
        "mb_recv",
        "mb_empty",
        "prom_new",
        "prom_fulfill",
        "prom_fulfilled",
        "prom_value",
        "prom_await",
    } <= set(builtin_signatures())


def test_match_signature_accepts_any_cont_reference():
    spec = SignatureSpec((CONT,), ())
    ct = RefType(ContHeap(EMPTY_FT))
    assert match_signature(spec, FuncType((ct,), ())) is None
    other = RefType(ContHeap(FuncType((I32,), ())))
    assert match_signature(spec, FuncType((other,), ())) is None
    assert match_signature(spec, FuncType((I32,), ())) is not None


def test_match_signature_rejects_shape_mismatch():
    spec = SignatureSpec((I32_SLOT, I64_SLOT), (I32_SLOT,))
    wrong_arity = FuncType((I32,), (I32,))
    assert "shape" in match_signature(spec, wrong_arity)
    wrong_slot = FuncType((I64, I64), (I32,))
    assert "i32 slot" in match_signature(spec, wrong_slot)


# ---------------------------------------------------------------------------
# Builtin behavior


def _cont_result_ft():
    return FuncType((), (RefType(ContHeap(EMPTY_FT)),))


def test_print_renders_signed_and_buffers():
    st = HostState()
    call_builtin(st, "print", [I32V(2**32 - 1)], FuncType((I32,), ()))
    call_builtin(st, "print", [I32V(11)], FuncType((I32,), ()))
    call_builtin(st, "print_i64", [I64V(2**64 - 9)], FuncType((I64,), ()))
    assert st.output() == "-1 11 -9"


def test_queue_is_fifo_and_null_on_empty():
    st = HostState()
    ft_enq = FuncType((RefType(ContHeap(EMPTY_FT)),), ())
    assert call_builtin(st, "queue_empty", [], FuncType((), (I32,))) == [I32V(1)]
    call_builtin(st, "enqueue", [ContRefV(0)], ft_enq)
    call_builtin(st, "enqueue", [ContRefV(1)], ft_enq)
    assert call_builtin(st, "queue_empty", [], FuncType((), (I32,))) == [I32V(0)]
    assert call_builtin(st, "dequeue", [], _cont_result_ft()) == [ContRefV(0)]
    assert call_builtin(st, "dequeue", [], _cont_result_ft()) == [ContRefV(1)]
    out = call_builtin(st, "dequeue", [], _cont_result_ft())
    assert isinstance(out[0], NullV)


def test_mailboxes_fifo_and_trap_matrix():
    st = HostState()
    ft_send = FuncType((I64, I32), ())
    ft_recv = FuncType((I32,), (I64,))
    assert call_builtin(st, "mb_new", [], FuncType((), (I32,))) == [I32V(0)]
    assert call_builtin(st, "mb_new", [], FuncType((), (I32,))) == [I32V(1)]
    call_builtin(st, "mb_send", [I64V(5), I32V(0)], ft_send)
    call_builtin(st, "mb_send", [I64V(6), I32V(0)], ft_send)
    assert call_builtin(st, "mb_recv", [I32V(0)], ft_recv) == [I64V(5)]
    assert call_builtin(st, "mb_empty", [I32V(0)], ft_recv) == [I32V(0)]
    assert call_builtin(st, "mb_recv", [I32V(0)], ft_recv) == [I64V(6)]
    with pytest.raises(HostTrap, match="empty mailbox"):
        call_builtin(st, "mb_recv", [I32V(1)], ft_recv)
    with pytest.raises(HostTrap, match="unknown mailbox"):
        call_builtin(st, "mb_send", [I64V(1), I32V(9)], ft_send)
    with pytest.raises(HostTrap, match="unknown mailbox"):
        call_builtin(st, "mb_recv", [I32V(9)], ft_recv)


def test_promise_lifecycle_and_trap_matrix():
    st = HostState()
    ft_new = FuncType((), (I32,))
    ft_fulfill = FuncType((I32, I64), (RefType(ContHeap(EMPTY_FT)),))
    ft_await = FuncType((I32, RefType(ContHeap(EMPTY_FT))), ())
    assert call_builtin(st, "prom_new", [], ft_new) == [I32V(0)]
    assert call_builtin(st, "prom_fulfilled", [I32V(0)], ft_new) == [I32V(0)]
    with pytest.raises(HostTrap, match="not fulfilled"):
        call_builtin(st, "prom_value", [I32V(0)], FuncType((I32,), (I64,)))
    call_builtin(st, "prom_await", [I32V(0), ContRefV(7)], ft_await)
    with pytest.raises(HostTrap, match="already awaited"):
        call_builtin(st, "prom_await", [I32V(0), ContRefV(8)], ft_await)
    out = call_builtin(st, "prom_fulfill", [I32V(0), I64V(42)], ft_fulfill)
    assert out == [ContRefV(7)]  # the parked waiter comes back
    assert call_builtin(st, "prom_fulfilled", [I32V(0)], ft_new) == [I32V(1)]
    assert call_builtin(st, "prom_value", [I32V(0)], FuncType((I32,), (I64,))) == [
        I64V(42)
    ]
    with pytest.raises(HostTrap, match="already fulfilled"):
        call_builtin(st, "prom_fulfill", [I32V(0), I64V(1)], ft_fulfill)
    with pytest.raises(HostTrap, match="unknown promise"):
        call_builtin(st, "prom_value", [I32V(3)], FuncType((I32,), (I64,)))


def test_fulfill_without_waiter_returns_null():
    st = HostState()
    ft_fulfill = FuncType((I32, I64), (RefType(ContHeap(EMPTY_FT)),))
    call_builtin(st, "prom_new", [], FuncType((), (I32,)))
    out = call_builtin(st, "prom_fulfill", [I32V(0), I64V(5)], ft_fulfill)
    assert isinstance(out[0], NullV)
    assert isinstance(out[0].heap, ContHeap)


def test_await_on_fulfilled_promise_traps():
    st = HostState()
    ft_fulfill = FuncType((I32, I64), (RefType(ContHeap(EMPTY_FT)),))
    ft_await = FuncType((I32, RefType(ContHeap(EMPTY_FT))), ())
    call_builtin(st, "prom_new", [], FuncType((), (I32,)))
    call_builtin(st, "prom_fulfill", [I32V(0), I64V(5)], ft_fulfill)
    with pytest.raises(HostTrap, match="await on fulfilled"):
        call_builtin(st, "prom_await", [I32V(0), ContRefV(1)], ft_await)


def test_unknown_builtin_name_traps():
    with pytest.raises(HostTrap, match="unknown builtin"):
        call_builtin(HostState(), "nope", [], EMPTY_FT)


def test_admin_label_exit_types_prefer_loop_header():
    from effwasm.syntax import BlockType, Loop

    plain = AdminLabel((I32,), (), [])
    assert plain.exit_types() == (I32,)
    loop = Loop(BlockType((I32,), (I64,)), ())
    looped = AdminLabel((I32,), (loop,), [])
    assert looped.exit_types() == (I64,)
