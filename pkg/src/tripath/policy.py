"""Execution-path policies for dictionary operations.

An operation is described by three bodies supplied by the data structure:

* ``run_fast(mem)``   — sequential code; safe only while nothing runs on
  the non-transactional fallback path (or under the global lock).
* ``run_middle(mem)`` — instrumented code (tag-aware llx / transactional
  scx); safe concurrently with the fallback path.
* ``run_fallback()``  — the CAS-template code; runs outside transactions.

Each body returns ``Done(...)`` or the ``RESTART`` sentinel (an
operation-level failure such as a failed scx, requiring a fresh search).
Restarts re-enter the same path; only transaction aborts consume the
path's attempt budget.

Policies:

* ``NON_HTM``         — fallback path only.
* ``TLE``             — fast path subscribing to a global lock; the lock
  path runs the same sequential body directly.
* ``TWO_PATH_CON``    — instrumented transactions concurrent with the
  fallback path; no gate.
* ``TWO_PATH_NON_CON``— sequential transactions gated by a fallback
  counter; attempts wait for the gate to open.
* ``THREE_PATH``      — sequential transactions gated by the counter,
  spilling into instrumented transactions (which ignore the gate), then
  the fallback path.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .engine import DIRECT, AbortReason, EmulatedEngine, GATE_CLOSED, TxnOutcome, Word

__all__ = [
    "Done",
    "FallbackGate",
    "GlobalLock",
    "OpDescriptor",
    "PathBudget",
    "PathRunner",
    "PathStats",
    "PolicyKind",
    "RESTART",
    "FAST",
    "MIDDLE",
    "FALLBACK",
    "gate_enter",
    "gate_exit",
    "record_stats",
]

FAST = "fast"
MIDDLE = "middle"
FALLBACK = "fallback"
PATHS = (FAST, MIDDLE, FALLBACK)


class PolicyKind(enum.Enum):
    NON_HTM = "nonhtm"
    TLE = "tle"
    TWO_PATH_CON = "2pc"
    TWO_PATH_NON_CON = "2pnc"
    THREE_PATH = "3path"


@dataclass(frozen=True)
class PathBudget:
    attempt_limit: int = 20   # fast tries for TLE and the 2-path policies
    fast_limit: int = 10      # fast tries for the 3-path policy
    middle_limit: int = 10    # middle tries for the 3-path policy

    def __post_init__(self) -> None:
        if min(self.attempt_limit, self.fast_limit, self.middle_limit) < 1:
            raise ValueError("all budgets must be >= 1")


class Restart:
    __slots__ = ()

    def __repr__(self) -> str:
        return "RESTART"


RESTART = Restart()


@dataclass
class Done:
    """Successful operation outcome plus bookkeeping for the caller."""

    value: Any = None
    retire: tuple = ()
    hint: Any = None


@dataclass
class OpDescriptor:
    run_fast: Callable[[Any], Any]
    run_middle: Callable[[Any], Any]
    run_fallback: Callable[[], Any]


class FallbackGate:
    """Shared counter of operations currently on the fallback path."""

    def __init__(self, engine: EmulatedEngine):
        self._engine = engine
        self.word: Word = engine.word(0)

    def enter(self) -> None:
        self._engine.fetch_add(self.word, 1)

    def exit(self) -> None:
        prev = self._engine.fetch_add(self.word, -1)
        assert prev > 0, "gate exit without a matching enter"

    def load(self) -> int:
        return self.word.load()


def gate_enter(gate: FallbackGate) -> None:
    gate.enter()


def gate_exit(gate: FallbackGate) -> None:
    gate.exit()


class GlobalLock:
    """Test-and-set lock whose state word is transactionally subscribable."""

    def __init__(self, engine: EmulatedEngine):
        self.word: Word = engine.word(0)

    def acquire(self, backoff_cap: float = 0.001) -> None:
        delay = 1e-6
        while not self.word.cas(0, 1):
            time.sleep(delay)
            delay = min(delay * 2, backoff_cap)

    def release(self) -> None:
        assert self.word.load() == 1, "releasing a lock that is not held"
        self.word.store(0)

    def held(self) -> bool:
        return self.word.load() != 0


class PathStats:
    """Per-path completion and commit/abort counters.

    Counters are kept per registered thread and merged on snapshot, so the
    hot path never contends on shared cells.
    """

    _ABORT_KEYS = tuple(AbortReason)

    def __init__(self, max_threads: int = 64):
        self._slots: list[dict[str, Any]] = [self._empty() for _ in range(max_threads)]

    @staticmethod
    def _empty() -> dict[str, Any]:
        return {
            path: {"completions": 0, "commits": 0, "aborts": {r: 0 for r in AbortReason}}
            for path in PATHS
        }

    def record(self, pid: int, path: str, event: str, reason: AbortReason | None = None) -> None:
        bucket = self._slots[pid][path]
        if event == "completion":
            bucket["completions"] += 1
        elif event == "commit":
            bucket["commits"] += 1
        elif event == "abort":
            bucket["aborts"][reason] += 1
        else:
            raise ValueError(f"unknown stats event {event!r}")

    def snapshot(self) -> dict[str, dict[str, Any]]:
        merged = self._empty()
        for slot in self._slots:
            for path in PATHS:
                merged[path]["completions"] += slot[path]["completions"]
                merged[path]["commits"] += slot[path]["commits"]
                for r in AbortReason:
                    merged[path]["aborts"][r] += slot[path]["aborts"][r]
        return merged

    def completions(self, path: str) -> int:
        return self.snapshot()[path]["completions"]

    def total_completions(self) -> int:
        snap = self.snapshot()
        return sum(snap[p]["completions"] for p in PATHS)


def record_stats(stats: PathStats, path: str, event: str, pid: int = 0, reason: AbortReason | None = None) -> None:
    stats.record(pid, path, event, reason)


@dataclass
class GateWitness:
    """Debug-only observations sampled inside commit critical sections."""

    fast_commits_while_gated: int = 0
    middle_commits_while_gated: int = 0
    fast_commits: int = 0
    middle_commits: int = 0


class PathRunner:
    """Executes operation descriptors according to one policy."""

    def __init__(
        self,
        engine: EmulatedEngine,
        policy: PolicyKind,
        budget: PathBudget,
        stats: PathStats,
        gate: FallbackGate | None = None,
        lock: GlobalLock | None = None,
        debug: bool = False,
        backoff_cap: float = 0.001,
    ):
        self.engine = engine
        self.policy = policy
        self.budget = budget
        self.stats = stats
        self.gate = gate if gate is not None else FallbackGate(engine)
        self.lock = lock if lock is not None else GlobalLock(engine)
        self.debug = debug
        self.backoff_cap = backoff_cap
        self.witness = GateWitness() if debug else None

    # -- public -----------------------------------------------------------

    def execute(self, pid: int, op: OpDescriptor) -> Done:
        policy = self.policy
        if policy is PolicyKind.NON_HTM:
            return self._fallback_run(pid, op, gated=False)
        if policy is PolicyKind.TLE:
            return self.tle_execute(pid, op)
        if policy is PolicyKind.TWO_PATH_CON:
            done = self._txn_stage(pid, op.run_middle, FAST, self.budget.attempt_limit, subscribe=None)
            return done if done is not None else self._fallback_run(pid, op, gated=False)
        if policy is PolicyKind.TWO_PATH_NON_CON:
            done = self._txn_stage(
                pid, op.run_fast, FAST, self.budget.attempt_limit,
                subscribe=self.gate.word, wait_for_gate=True,
            )
            return done if done is not None else self._fallback_run(pid, op, gated=True)
        if policy is PolicyKind.THREE_PATH:
            done = self._txn_stage(
                pid, op.run_fast, FAST, self.budget.fast_limit,
                subscribe=self.gate.word, bail_on_gate=True,
            )
            if done is None:
                done = self._txn_stage(pid, op.run_middle, MIDDLE, self.budget.middle_limit, subscribe=None)
            return done if done is not None else self._fallback_run(pid, op, gated=True)
        raise AssertionError(policy)

    def tle_execute(self, pid: int, op: OpDescriptor) -> Done:
        done = self._txn_stage(
            pid, op.run_fast, FAST, self.budget.attempt_limit,
            subscribe=self.lock.word, wait_for_lock=True,
        )
        if done is not None:
            return done
        self.lock.acquire(self.backoff_cap)
        try:
            while True:
                res = op.run_fast(DIRECT)
                if res is not RESTART:
                    break
        finally:
            self.lock.release()
        self.stats.record(pid, FALLBACK, "completion")
        return res

    # -- stages -----------------------------------------------------------

    def _txn_stage(
        self,
        pid: int,
        body: Callable[[Any], Any],
        path: str,
        limit: int,
        subscribe: Word | None,
        wait_for_gate: bool = False,
        wait_for_lock: bool = False,
        bail_on_gate: bool = False,
    ) -> Done | None:
        aborts = 0
        while aborts < limit:
            if wait_for_gate:
                self._spin_until_zero(self.gate.word)
            if wait_for_lock:
                self._spin_until_zero(self.lock.word)
            out = self._run_txn(pid, body, path, subscribe)
            if out.committed:
                if out.value is RESTART:
                    continue  # operation-level restart: budget untouched
                self.stats.record(pid, path, "completion")
                return out.value
            aborts += 1
            if bail_on_gate and out.reason is AbortReason.EXPLICIT and out.code == GATE_CLOSED:
                return None
        return None

    def _run_txn(self, pid: int, body: Callable[[Any], Any], path: str, subscribe: Word | None) -> TxnOutcome:
        def attempt(ctx):
            if subscribe is not None and ctx.read(subscribe) != 0:
                ctx.abort_explicit(GATE_CLOSED)
            return body(ctx)

        probe = self._commit_probe(path) if self.witness is not None else None
        out = self.engine.txn_execute(attempt, commit_probe=probe)
        if out.committed:
            self.stats.record(pid, path, "commit")
        else:
            self.stats.record(pid, path, "abort", out.reason)
        return out

    def _commit_probe(self, path: str) -> Callable[[], None]:
        witness = self.witness
        gate_word = self.gate.word

        def probe() -> None:
            gated = gate_word._vv[0] != 0
            if path == FAST:
                witness.fast_commits += 1
                if gated:
                    witness.fast_commits_while_gated += 1
            elif path == MIDDLE:
                witness.middle_commits += 1
                if gated:
                    witness.middle_commits_while_gated += 1

        return probe

    def _fallback_run(self, pid: int, op: OpDescriptor, gated: bool) -> Done:
        if gated:
            self.gate.enter()
        try:
            while True:
                res = op.run_fallback()
                if res is not RESTART:
                    break
        finally:
            if gated:
                self.gate.exit()
        self.stats.record(pid, FALLBACK, "completion")
        return res

    def _spin_until_zero(self, word: Word) -> None:
        delay = 1e-6
        while word.load() != 0:
            time.sleep(delay)
            delay = min(delay * 2, self.backoff_cap)
