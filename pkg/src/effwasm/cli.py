"""Command-line front end.

Three subcommands:

* ``run FILE`` — parse, validate, and execute a script (a module followed
  by optional ``(invoke ...)`` forms).  Program output goes to stdout;
  traces, statistics, and diagnostics go to stderr.
* ``bench`` — generate and run the coroutine workload, reporting exact
  event counts (and informational wall time) as ``key: value`` lines.
* ``corpus [DIR]`` — run every golden case and report PASS/FAIL.

Exit codes: 0 success; 1 trap, unhandled suspension, or uncaught
exception; 2 validation error (argparse usage errors also exit 2);
3 parse error; 4 internal — fuel exhaustion, missing entry point,
soundness violation, or engine disagreement.
"""

from __future__ import annotations

import argparse
import sys

from . import corpus as corpus_mod
from . import interp
from .bench import BenchError, run_bench
from .runtime import DEFAULT_FUEL


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="effwasm",
        description="Typed-continuation WebAssembly interpreter and tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="parse, validate, and run a script file")
    run_p.add_argument("file", help=".wat script: a module plus optional (invoke ...) forms")
    run_p.add_argument(
        "--invoke",
        metavar="NAME|IDX",
        help="call this function instead of the script's invocations",
    )
    run_p.add_argument(
        "--arg",
        action="append",
        default=[],
        metavar="INT",
        help="argument for --invoke (repeatable, typed by the signature)",
    )
    run_p.add_argument("--fuel", type=_positive, default=DEFAULT_FUEL, metavar="N")
    run_p.add_argument("--core", choices=("auto", "pure", "compiled"), default="auto")
    run_p.add_argument(
        "--trace", action="store_true", help="print each reduction step to stderr"
    )
    mode = run_p.add_mutually_exclusive_group()
    mode.add_argument(
        "--check-soundness",
        action="store_true",
        help="type every intermediate configuration and the store",
    )
    mode.add_argument(
        "--small-step-audit",
        action="store_true",
        help="run both engines and require identical observables",
    )

    bench_p = sub.add_parser("bench", help="run the coroutine micro-benchmark")
    bench_p.add_argument("--coroutines", type=_positive, default=1000, metavar="N")
    bench_p.add_argument("--requests", type=_positive, default=10000, metavar="M")
    bench_p.add_argument("--work", type=_positive, default=100, metavar="K")
    bench_p.add_argument("--fuel", type=_positive, default=DEFAULT_FUEL, metavar="N")
    bench_p.add_argument("--core", choices=("auto", "pure", "compiled"), default="auto")
    bench_p.add_argument(
        "--compare-cores",
        action="store_true",
        help="run on the pure and compiled cores and report the speedup",
    )

    corpus_p = sub.add_parser("corpus", help="run the golden corpus")
    corpus_p.add_argument("dir", nargs="?", default=None, help="corpus root (default: checkout corpus/)")
    corpus_p.add_argument("--core", choices=("auto", "pure", "compiled"), default="auto")
    corpus_p.add_argument(
        "--audit", action="store_true", help="also require engine agreement per case"
    )
    return parser


def _cmd_run(args) -> int:
    try:
        text = open(args.file, encoding="utf-8").read()
    except OSError as e:
        print(f"cannot read {args.file}: {e.strerror}", file=sys.stderr)
        return corpus_mod.EXIT_INTERNAL

    def trace_cb(step, event):
        detail = f" {event.detail}" if event.detail else ""
        print(f"#{step} {event.rule}{detail}", file=sys.stderr)

    result = corpus_mod.run_script_text(
        text,
        core=args.core,
        audit=args.small_step_audit,
        check_soundness=args.check_soundness,
        fuel=args.fuel,
        invoke=args.invoke,
        invoke_args=tuple(args.arg),
        trace_cb=trace_cb if args.trace else None,
    )
    sys.stdout.write(result.stdout)
    for diag in result.diagnostics:
        print(diag, file=sys.stderr)
    if args.trace:
        for n, stats in enumerate(result.stats):
            print(
                f"stats[{n}]: steps={stats.steps} resumes={stats.resumes} "
                f"suspends={stats.suspends} cont_allocs={stats.cont_allocs}",
                file=sys.stderr,
            )
    return result.exit_code


def _cmd_bench(args) -> int:
    try:
        if args.compare_cores:
            reports = [
                run_bench(args.coroutines, args.requests, args.work, core=core, fuel=args.fuel)
                for core in ("pure", "compiled")
            ]
            for i, rep in enumerate(reports):
                if i:
                    print()
                print("\n".join(rep.lines()))
            pure, compiled = reports
            if compiled.wall_ms > 0:
                print()
                print(f"speedup: {pure.wall_ms / compiled.wall_ms:.2f}x (compiled vs pure)")
            return corpus_mod.EXIT_OK
        rep = run_bench(args.coroutines, args.requests, args.work, core=args.core, fuel=args.fuel)
        print("\n".join(rep.lines()))
        return corpus_mod.EXIT_OK
    except (BenchError, RuntimeError) as e:
        print(str(e), file=sys.stderr)
        return corpus_mod.EXIT_INTERNAL


def _cmd_corpus(args) -> int:
    import pathlib

    root = pathlib.Path(args.dir) if args.dir else corpus_mod.default_root()
    if not root.is_dir():
        print(f"no corpus directory: {root}", file=sys.stderr)
        return corpus_mod.EXIT_INTERNAL
    cases = corpus_mod.iter_cases(root)
    if not cases:
        print(f"no cases under {root}", file=sys.stderr)
        return corpus_mod.EXIT_INTERNAL
    failed = 0
    for case in cases:
        ok, _run, message = corpus_mod.check_case(case, core=args.core, audit=args.audit)
        if ok:
            print(f"PASS {case.name}")
        else:
            failed += 1
            print(f"FAIL {case.name}: {message}")
    print(f"{len(cases) - failed}/{len(cases)} cases passed")
    return corpus_mod.EXIT_OK if failed == 0 else corpus_mod.EXIT_FAULT


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "bench":
        return _cmd_bench(args)
    return _cmd_corpus(args)


if __name__ == "__main__":
    sys.exit(main())
