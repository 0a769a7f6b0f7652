"""Coroutine micro-benchmark: a desk-scale web-server workload.

A scheduler serves ``requests`` total requests in batches of at most
``coroutines`` concurrent coroutines.  Each request coroutine suspends once
on an ``$io`` tag (simulated I/O), parking its continuation on the host
queue; once a batch is spawned, the scheduler drains the queue and every
parked request finishes with ``work`` iterations of 64-bit arithmetic.

The interesting metrics are exact counts, not time: every request costs
one ``cont.new`` allocation, one suspension (which allocates the captured
continuation), and two resumptions.  For M requests that is

* ``suspends                 = M``
* ``resumes                  = 2*M``
* ``continuation_allocations = 2*M``

independent of batch size and work.  Wall time is reported as
informational only — an interpreted artifact's timings are not comparable
to natively compiled stack-switching runtimes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import interp
from .runtime import DEFAULT_FUEL, Values
from .text import parse_module
from .validate import validate_module

# Constants of a 64-bit linear congruential generator; the accumulator
# exists to give the work loop real data flow, not for its randomness.
_LCG_MUL = 6364136223846793005
_LCG_INC = 1442695040888963407


def build_module_text(coroutines: int, requests: int, work: int) -> str:
    """Generate the benchmark module for one parameter triple."""
    if coroutines < 1:
        raise ValueError("coroutines must be >= 1")
    if requests < 0:
        raise ValueError("requests must be >= 0")
    if work < 0:
        raise ValueError("work must be >= 0")
    return f"""
(module
  (type $task (func))
  (type $ct (cont $task))  ;; a fresh request
  (type $kt (cont $task))  ;; a request parked after its I/O suspension
  (tag $io)
  (func $enqueue (param (ref null $kt)) (builtin "enqueue"))
  (func $dequeue (result (ref null $kt)) (builtin "dequeue"))

  ;; One request: suspend once to simulate I/O, then do the work loop.
  (func $request (local $i i32) (local $acc i64)
    (suspend $io)
    (block $done
      (loop $next
        (br_if $done (i32.ge_u (local.get $i) (i32.const {work})))
        (local.set $acc
          (i64.add (i64.mul (local.get $acc) (i64.const {_LCG_MUL}))
                   (i64.const {_LCG_INC})))
        (local.set $i (i32.add (local.get $i) (i32.const 1)))
        (br $next))))

  ;; Spawn one batch: each fresh request suspends immediately; park the
  ;; captured continuation on the host queue.
  (func $spawn_batch (param $n i32) (local $j i32)
    (block $done
      (loop $next
        (br_if $done (i32.ge_u (local.get $j) (local.get $n)))
        (block $on (result (ref $kt))
          (resume $ct (on $io $on) (cont.new $ct (ref.func $request)))
          (unreachable))  ;; a fresh request always suspends first
        (call $enqueue)
        (local.set $j (i32.add (local.get $j) (i32.const 1)))
        (br $next))))

  ;; Drain the queue: parked requests run to completion (they never
  ;; suspend a second time, so no clauses are needed).
  (func $drain (local $k (ref null $kt))
    (block $idle
      (loop $next
        (local.set $k (call $dequeue))
        (br_if $idle (ref.is_null (local.get $k)))
        (resume $kt (local.get $k))
        (br $next))))

  (func $main (local $left i32) (local $batch i32)
    (local.set $left (i32.const {requests}))
    (block $done
      (loop $next
        (br_if $done (i32.eqz (local.get $left)))
        (local.set $batch (local.get $left))
        (if (i32.gt_u (local.get $batch) (i32.const {coroutines}))
          (then (local.set $batch (i32.const {coroutines}))))
        (call $spawn_batch (local.get $batch))
        (call $drain)
        (local.set $left (i32.sub (local.get $left) (local.get $batch)))
        (br $next))))
  (start $main)
)
"""


@dataclass(slots=True)
class BenchReport:
    core: str
    coroutines: int
    requests: int
    work: int
    wall_ms: float
    steps: int
    resumes: int
    suspends: int
    cont_allocs: int

    def lines(self) -> list[str]:
        return [
            f"core: {self.core}",
            f"coroutines: {self.coroutines}",
            f"requests: {self.requests}",
            f"work: {self.work}",
            f"wall_ms: {self.wall_ms:.1f}",
            f"steps: {self.steps}",
            f"resumes: {self.resumes}",
            f"suspends: {self.suspends}",
            f"continuation_allocations: {self.cont_allocs}",
        ]


class BenchError(Exception):
    pass


def run_bench(
    coroutines: int,
    requests: int,
    work: int,
    core: str = "auto",
    fuel: int = DEFAULT_FUEL,
) -> BenchReport:
    text = build_module_text(coroutines, requests, work)
    module = parse_module(text)
    errors = validate_module(module)
    if errors:
        raise BenchError(f"generated module failed validation: {errors[0]}")
    kernel = interp.get_kernel(core)
    start = time.perf_counter()
    result, _output, stats = kernel.run_machine(module, module.start, [])
    wall_ms = (time.perf_counter() - start) * 1000.0
    if not isinstance(result, Values):
        from .runtime import describe_result

        raise BenchError(f"benchmark run failed: {describe_result(result, module)}")
    core_name = interp.kernel_core_name(kernel)
    return BenchReport(
        core=core_name,
        coroutines=coroutines,
        requests=requests,
        work=work,
        wall_ms=wall_ms,
        steps=stats.steps,
        resumes=stats.resumes,
        suspends=stats.suspends,
        cont_allocs=stats.cont_allocs,
    )
