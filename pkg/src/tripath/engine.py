"""Software emulation of a best-effort transactional memory over shared words.

Shared state lives in `Word` cells carrying a (value, version) pair. A
transaction buffers its writes, keeps a read set of observed versions, and
publishes everything in one short critical section at commit time after
revalidating the read set. Reads stay consistent mid-transaction via a
read-version watermark that is extended (after revalidation) whenever a
newer word is encountered, so a running transaction never observes a mixed
state even though it may later fail to commit.

The engine is deliberately *best-effort*: a transaction can abort because
of a read/write conflict, because it touched more distinct words than the
configured capacity, because the body aborted explicitly, or spuriously
(seeded, with configurable probability). Callers own all retry policy.

Non-transactional access to words is permitted and participates in
conflict detection: a direct store or CAS bumps the word version and the
global clock, which invalidates any concurrent transactional reader of
that word.
"""

from __future__ import annotations

import enum
import itertools
import threading
from dataclasses import dataclass
from typing import Any, Callable

__all__ = [
    "AbortReason",
    "DIRECT",
    "DirectMemory",
    "EmulatedEngine",
    "FAILED_VALIDATION",
    "GATE_CLOSED",
    "NODE_MARKED",
    "NestedTransactionError",
    "TxnConfig",
    "TxnContext",
    "TxnOutcome",
    "Word",
]

# Well-known explicit abort codes shared by the layers above the engine.
FAILED_VALIDATION = 1   # optimistic validation saw a changed info word
GATE_CLOSED = 2         # fallback gate / elision lock was observed nonzero
NODE_MARKED = 3         # a pre-collected node was already unlinked


class AbortReason(enum.Enum):
    CONFLICT = "conflict"
    CAPACITY = "capacity"
    EXPLICIT = "explicit"
    SPURIOUS = "spurious"


class NestedTransactionError(RuntimeError):
    """Raised when a thread starts a transaction inside a transaction."""


@dataclass(frozen=True)
class TxnConfig:
    """Engine tuning knobs.

    capacity_limit: distinct shared words one transaction may touch.
    spurious_abort_prob: per-attempt probability of a forced abort.
    rng_seed: seeds the engine instance RNG (applied at engine creation;
        per-call configs override only the limits).
    """

    capacity_limit: int = 64
    spurious_abort_prob: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.capacity_limit < 1:
            raise ValueError("capacity_limit must be >= 1")
        if not 0.0 <= self.spurious_abort_prob <= 1.0:
            raise ValueError("spurious_abort_prob must be in [0, 1]")


@dataclass(frozen=True)
class TxnOutcome:
    committed: bool
    reason: AbortReason | None = None
    code: int | None = None
    value: Any = None

    def __post_init__(self) -> None:
        assert self.committed == (self.reason is None)

    @property
    def explicit_code(self) -> int | None:
        return self.code if self.reason is AbortReason.EXPLICIT else None


class _TxnAbort(BaseException):
    # BaseException so a broad `except Exception` in a body cannot swallow
    # the control transfer out of the transaction.
    __slots__ = ("reason", "code")

    def __init__(self, reason: AbortReason, code: int | None = None):
        self.reason = reason
        self.code = code


class Word:
    """One shared cell: an opaque value plus a monotone version."""

    __slots__ = ("_engine", "_vv", "uid")

    def __init__(self, engine: "EmulatedEngine", value: Any = 0):
        self._engine = engine
        self._vv = (value, 0)
        self.uid = next(engine._word_uids)

    def load(self) -> Any:
        """Non-transactional read of the committed value."""
        return self._vv[0]

    def store(self, value: Any) -> None:
        """Non-transactional write; invalidates transactional readers."""
        eng = self._engine
        with eng._lock:
            eng._clock += 1
            self._vv = (value, eng._clock)

    def cas(self, expected: Any, new: Any) -> bool:
        """Non-transactional compare-and-swap on the committed value."""
        eng = self._engine
        with eng._lock:
            cur, _ = self._vv
            if not (cur is expected or cur == expected):
                return False
            eng._clock += 1
            self._vv = (new, eng._clock)
            return True

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<Word {self.uid} = {self._vv[0]!r} @v{self._vv[1]}>"


class DirectMemory:
    """Accessor with the same surface as TxnContext, but uninstrumented.

    Used by code paths that run outside any transaction (the software
    fallback path, and the sequential path under a global lock).
    """

    transactional = False

    @staticmethod
    def read(word: Word) -> Any:
        return word._vv[0]

    @staticmethod
    def write(word: Word, value: Any) -> None:
        word.store(value)

    @staticmethod
    def cas(word: Word, expected: Any, new: Any) -> bool:
        return word.cas(expected, new)

    @staticmethod
    def abort_explicit(code: int) -> None:
        raise RuntimeError("explicit abort outside a transaction")


DIRECT = DirectMemory()

_MISSING = object()


class TxnContext:
    """Per-attempt transactional view of shared words."""

    transactional = True

    __slots__ = ("_engine", "_cap", "_rv", "read_set", "write_set", "_foot", "_deferred", "alive")

    def __init__(self, engine: "EmulatedEngine", capacity_limit: int):
        self._engine = engine
        self._cap = capacity_limit
        self._rv = engine._clock
        self.read_set: dict[Word, tuple[int, Any]] = {}
        self.write_set: dict[Word, Any] = {}
        self._foot: set[Word] = set()
        self._deferred: list[Callable[[], None]] = []
        self.alive = True

    # -- footprint ---------------------------------------------------------

    def _touch(self, word: Word) -> None:
        foot = self._foot
        if word not in foot:
            if len(foot) >= self._cap:
                raise _TxnAbort(AbortReason.CAPACITY)
            foot.add(word)

    # -- accesses ----------------------------------------------------------

    def read(self, word: Word) -> Any:
        buffered = self.write_set.get(word, _MISSING)
        if buffered is not _MISSING:
            return buffered
        seen = self.read_set.get(word)
        if seen is not None:
            return seen[1]
        value, version = word._vv
        if version > self._rv:
            value, version = self._extend(word)
        self._touch(word)
        self.read_set[word] = (version, value)
        return value

    def write(self, word: Word, value: Any) -> None:
        self._touch(word)
        self.write_set[word] = value

    def cas(self, word: Word, expected: Any, new: Any) -> bool:
        cur = self.read(word)
        if cur is expected or cur == expected:
            self.write(word, new)
            return True
        return False

    def abort_explicit(self, code: int) -> None:
        raise _TxnAbort(AbortReason.EXPLICIT, code)

    def defer(self, fn: Callable[[], None]) -> None:
        """Register a callback to run only if this transaction commits."""
        self._deferred.append(fn)

    # -- consistency -------------------------------------------------------

    def _extend(self, word: Word) -> tuple[Any, int]:
        # The word is newer than our watermark: revalidate everything read
        # so far, then advance the watermark. Reads stay a consistent cut.
        engine = self._engine
        for _ in range(4):
            now = engine._clock
            for w, (ver, _val) in self.read_set.items():
                if w._vv[1] != ver:
                    raise _TxnAbort(AbortReason.CONFLICT)
            self._rv = now
            value, version = word._vv
            if version <= now:
                return value, version
        raise _TxnAbort(AbortReason.CONFLICT)


class EmulatedEngine:
    """Reference software engine. Fully thread-safe; one live transaction
    per thread; contexts never migrate between threads."""

    def __init__(self, config: TxnConfig | None = None):
        import random

        self.config = config or TxnConfig()
        self._lock = threading.Lock()
        self._clock = 0
        self._rng = random.Random(self.config.rng_seed)
        self._word_uids = itertools.count()
        self._tls = threading.local()

    # -- words -------------------------------------------------------------

    def word(self, value: Any = 0) -> Word:
        return Word(self, value)

    def fetch_add(self, word: Word, delta: int) -> int:
        """Atomic add on an integer word; returns the previous value."""
        with self._lock:
            cur, _ = word._vv
            self._clock += 1
            word._vv = (cur + delta, self._clock)
            return cur

    @property
    def clock(self) -> int:
        return self._clock

    # -- transactions ------------------------------------------------------

    def txn_execute(
        self,
        body: Callable[[TxnContext], Any],
        config: TxnConfig | None = None,
        commit_probe: Callable[[], None] | None = None,
    ) -> TxnOutcome:
        """Run `body` as one transaction attempt; never retries internally.

        `commit_probe`, when given, runs inside the commit critical section
        right after the writes land, so it observes a state atomic with the
        commit (used by debug instrumentation).
        """
        if getattr(self._tls, "ctx", None) is not None:
            raise NestedTransactionError("flat nesting only: transaction already active on this thread")
        cfg = config or self.config
        if cfg.spurious_abort_prob > 0.0 and self._rng.random() < cfg.spurious_abort_prob:
            return TxnOutcome(False, AbortReason.SPURIOUS)
        ctx = TxnContext(self, cfg.capacity_limit)
        self._tls.ctx = ctx
        try:
            try:
                result = body(ctx)
            except _TxnAbort as abort:
                return TxnOutcome(False, abort.reason, abort.code)
            with self._lock:
                for w, (ver, _val) in ctx.read_set.items():
                    if w._vv[1] != ver:
                        return TxnOutcome(False, AbortReason.CONFLICT)
                self._clock += 1
                stamp = self._clock
                for w, value in ctx.write_set.items():
                    w._vv = (value, stamp)
                for fn in ctx._deferred:
                    fn()
                if commit_probe is not None:
                    commit_probe()
            return TxnOutcome(True, value=result)
        finally:
            ctx.alive = False
            self._tls.ctx = None

    def current_context(self) -> TxnContext | None:
        return getattr(self._tls, "ctx", None)
