"""effwasm: reference interpreter for a minimal WebAssembly extension with
typed continuations and effect handlers.

The package provides the abstract syntax (:mod:`effwasm.syntax`), a text
format (:mod:`effwasm.text`), a validator (:mod:`effwasm.validate`), two
interchangeable execution engines — a fast abstract machine and a literal
small-step reducer (:mod:`effwasm.interp`) — a dynamic type-soundness
checker (:mod:`effwasm.meta`), host builtins (:mod:`effwasm.host`), and a
command-line interface (:mod:`effwasm.cli`).
"""

from .syntax import ModuleDef
from .text import ParseError, parse_module, parse_script, print_module
from .validate import ValidationError, validate_module

__all__ = [
    "ModuleDef",
    "ParseError",
    "ValidationError",
    "parse_module",
    "parse_script",
    "print_module",
    "validate_module",
]

__version__ = "0.1.0"
