"""Execution front end: kernel selection, single runs, and the audit mode.

Two engines implement the same reduction relation:

* :mod:`effwasm._kernel` — the abstract machine (hot loop).  ``setup.py``
  compiles this module in place; when the compiled extension is present it
  shadows the pure-Python source at import time, so ``import`` transparently
  picks the fast core.  The pure source can always be loaded explicitly
  under an alternate module name, which is how ``core="pure"`` works even
  in a built tree.
* :mod:`effwasm.smallstep` — the literal rule-per-step engine.

:func:`run_audit` executes a program on both and demands they agree on the
result, the host output, and every counter (steps, resumes, suspends,
continuation allocations) — the machine is only trusted because this
equivalence is checked continuously.
"""

from __future__ import annotations

import importlib.util
import pathlib

from . import _kernel as _default_kernel
from .runtime import DEFAULT_FUEL, RunResult, Stats, Value
from .smallstep import LiteralRun
from .syntax import ModuleDef
from .validate import ValidationError

_PURE_KERNEL = None


def kernel_is_compiled() -> bool:
    """True when the imported default kernel is a compiled extension."""
    f = getattr(_default_kernel, "__file__", "") or ""
    return f.endswith((".so", ".pyd"))


def kernel_info() -> dict:
    return {
        "core": "compiled" if kernel_is_compiled() else "pure",
        "file": getattr(_default_kernel, "__file__", "?"),
    }


def kernel_core_name(kernel) -> str:
    """'compiled' or 'pure' for a module returned by :func:`get_kernel`."""
    f = getattr(kernel, "__file__", "") or ""
    return "compiled" if f.endswith((".so", ".pyd")) else "pure"


def load_pure_kernel():
    """Load the pure-Python kernel source under an alternate module name,
    bypassing any compiled extension that shadows it."""
    global _PURE_KERNEL
    if _PURE_KERNEL is None:
        src = pathlib.Path(__file__).with_name("_kernel.py")
        spec = importlib.util.spec_from_file_location("effwasm._kernel_pure", src)
        mod = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(mod)
        _PURE_KERNEL = mod
    return _PURE_KERNEL


def get_kernel(core: str = "auto"):
    """Select an execution core: ``auto`` (compiled when built, else pure),
    ``pure`` (always the interpreted source), or ``compiled`` (require the
    built extension)."""
    if core == "auto":
        return _default_kernel
    if core == "pure":
        if kernel_is_compiled():
            return load_pure_kernel()
        return _default_kernel
    if core == "compiled":
        if not kernel_is_compiled():
            raise RuntimeError(
                "compiled core unavailable"
                " (build it with: python3 setup.py build_ext --inplace)"
            )
        return _default_kernel
    raise ValueError(f"unknown core {core!r}")


def resolve_entry(module: ModuleDef, spec: str | None) -> int:
    """Resolve an entry function from ``--invoke`` (name or index) or,
    when absent, from the module's start function."""
    if spec is None:
        if module.start is None:
            raise LookupError("no entry point: module has no start function")
        return module.start
    if spec.lstrip("-").isdigit():
        idx = int(spec)
        if not 0 <= idx < len(module.funcs):
            raise LookupError(f"no function with index {idx}")
        return idx
    name = spec if spec.startswith("$") else f"${spec}"
    idx = module.func_index(name)
    if idx is None:
        raise LookupError(f"no function named {name}")
    return idx


def run(
    module: ModuleDef,
    entry: int,
    args: list[Value],
    fuel: int = DEFAULT_FUEL,
    trace_cb=None,
    core: str = "auto",
) -> tuple[RunResult, str, Stats]:
    """Run one invocation on the selected machine core."""
    kernel = get_kernel(core)
    return kernel.run_machine(module, entry, list(args), fuel, trace_cb)


def run_literal(
    module: ModuleDef,
    entry: int,
    args: list[Value],
    fuel: int = DEFAULT_FUEL,
    trace_cb=None,
) -> tuple[RunResult, str, Stats]:
    """Run one invocation on the literal small-step engine."""
    return LiteralRun(module, entry, list(args), fuel, trace_cb=trace_cb).run()


class AuditError(AssertionError):
    """The two engines disagreed on an observable."""


def run_audit(
    module: ModuleDef,
    entry: int,
    args: list[Value],
    fuel: int = DEFAULT_FUEL,
    trace_cb=None,
    core: str = "auto",
) -> tuple[RunResult, str, Stats]:
    """Run on both engines and require full observable agreement.

    Returns the machine's results; the trace callback (if any) is attached
    to the machine run only, so traced output is not duplicated.
    """
    m_result, m_output, m_stats = run(module, entry, args, fuel, trace_cb, core)
    l_result, l_output, l_stats = run_literal(module, entry, args, fuel)
    mismatches = []
    if m_result != l_result:
        mismatches.append(f"result: machine={m_result!r} literal={l_result!r}")
    if m_output != l_output:
        mismatches.append(f"output: machine={m_output!r} literal={l_output!r}")
    for field in ("steps", "resumes", "suspends", "cont_allocs"):
        mv = getattr(m_stats, field)
        lv = getattr(l_stats, field)
        if mv != lv:
            mismatches.append(f"{field}: machine={mv} literal={lv}")
    if mismatches:
        raise AuditError("engine disagreement: " + "; ".join(mismatches))
    return m_result, m_output, m_stats


__all__ = [
    "AuditError",
    "get_kernel",
    "kernel_core_name",
    "kernel_info",
    "kernel_is_compiled",
    "load_pure_kernel",
    "resolve_entry",
    "run",
    "run_audit",
    "run_literal",
    "ValidationError",
]
