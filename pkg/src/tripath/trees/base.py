"""Shared plumbing for the concurrent ordered dictionaries.

A dictionary bundles one engine, one llx/scx layer, one path runner, one
reclamation domain and the per-path statistics. Concrete trees provide the
three operation bodies per dictionary operation; this module owns thread
registration, guard bracketing, retirement, and the rebalance-hint loop.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterator

from ..engine import DIRECT, EmulatedEngine, NODE_MARKED, TxnConfig
from ..llxscx import FAIL, FINALIZED, DataRecord, SyncLayer
from ..policy import (
    Done,
    FallbackGate,
    GlobalLock,
    OpDescriptor,
    PathBudget,
    PathRunner,
    PathStats,
    PolicyKind,
    RESTART,
)
from ..reclaim import EpochDomain

__all__ = ["DictConfig", "ConcurrentDictionary", "guard_access"]


@dataclass(frozen=True)
class DictConfig:
    policy: PolicyKind = PolicyKind.THREE_PATH
    attempt_limit: int = 20
    fast_limit: int = 10
    middle_limit: int = 10
    capacity_limit: int = 64
    spurious_abort_prob: float = 0.0
    seed: int = 0
    a: int = 6
    b: int = 16
    search_outside_txn: bool = False
    debug: bool = False
    max_threads: int = 64
    backoff_cap: float = 0.001

    def budget(self) -> PathBudget:
        return PathBudget(self.attempt_limit, self.fast_limit, self.middle_limit)

    def txn(self) -> TxnConfig:
        return TxnConfig(self.capacity_limit, self.spurious_abort_prob, self.seed)


def guard_access(mem, record: DataRecord) -> None:
    """Abort the enclosing transaction if `record` was already unlinked.

    Used when search phases run outside the transaction: the first
    transactional touch of each pre-collected node checks its marked bit,
    so the transaction can only commit if every such node is still in the
    tree. A no-op outside transactions (nothing concurrent can unlink
    then).
    """
    if mem.transactional and mem.read(record.marked):
        mem.abort_explicit(NODE_MARKED)


class ConcurrentDictionary:
    """Base class wiring the layers together; subclasses provide bodies."""

    def __init__(self, config: DictConfig | None = None):
        self.config = config or DictConfig()
        cfg = self.config
        self.engine = EmulatedEngine(cfg.txn())
        self.layer = SyncLayer(self.engine, max_processes=cfg.max_threads, debug=cfg.debug)
        self.stats = PathStats(max_threads=cfg.max_threads)
        self.gate = FallbackGate(self.engine)
        self.lock = GlobalLock(self.engine)
        self.runner = PathRunner(
            self.engine,
            cfg.policy,
            cfg.budget(),
            self.stats,
            gate=self.gate,
            lock=self.lock,
            debug=cfg.debug,
            backoff_cap=cfg.backoff_cap,
        )
        self.domain = EpochDomain(max_threads=cfg.max_threads)
        self._tls = threading.local()
        self._reg_lock = threading.Lock()
        # the tag-aware llx is required as soon as transactional scx may run
        self._tagged = cfg.policy is not PolicyKind.NON_HTM
        self.probe: Callable[..., None] | None = None

    # -- threads -----------------------------------------------------------

    def register_thread(self) -> int:
        pid = getattr(self._tls, "pid", None)
        if pid is None:
            with self._reg_lock:
                pid = self.layer.register_process()
                rid = self.domain.register()
                assert rid == pid
            self._tls.pid = pid
        return pid

    def _pid(self) -> int:
        pid = getattr(self._tls, "pid", None)
        return pid if pid is not None else self.register_thread()

    # -- shared helpers ------------------------------------------------------

    def _llx(self, pid: int, rec: DataRecord, mem):
        if self._tagged:
            return self.layer.llx_htm(pid, rec, mem if mem.transactional else None)
        return self.layer.llx_o(pid, rec)

    def _scx(self, pid: int, mem, records, finalize, field, new_value) -> bool:
        if mem.transactional:
            return self.layer.scx_htm(pid, mem, records, finalize, field, new_value)
        return self.layer.scx_o(pid, records, finalize, field, new_value)

    def _dispatch(self, pid: int, op: OpDescriptor) -> Any:
        done = self.runner.execute(pid, op)
        for record in done.retire:
            self.domain.retire(pid, record)
        hint = done.hint
        while hint is not None:
            step = self.runner.execute(pid, self._rebalance_op(pid, hint))
            for record in step.retire:
                self.domain.retire(pid, record)
            hint = step.hint
        return done.value

    def _operate(self, builder: Callable[[int], OpDescriptor]) -> Any:
        pid = self._pid()
        self.domain.guard_enter(pid)
        try:
            return self._dispatch(pid, builder(pid))
        finally:
            self.domain.guard_exit(pid)
            self.domain.maybe_advance(pid)

    def _rebalance_op(self, pid: int, hint: Any) -> OpDescriptor:
        raise AssertionError("this structure emits no rebalance hints")

    # -- subclass surface ------------------------------------------------------

    def insert(self, key: int, value: int) -> bool:
        raise NotImplementedError

    def delete(self, key: int) -> bool:
        raise NotImplementedError

    def search(self, key: int) -> int | None:
        raise NotImplementedError

    def range_query(self, lo: int, hi: int) -> list[tuple[int, int]]:
        raise NotImplementedError

    def items(self) -> Iterator[tuple[int, int]]:
        """Quiescent in-order iteration (no synchronization)."""
        raise NotImplementedError

    def structural_violations(self) -> list[str]:
        raise NotImplementedError

    def drain_rebalance(self) -> None:
        """Fix any outstanding balance violations (quiescent callers only)."""

    # -- quiescent conveniences ---------------------------------------------------

    def key_sum(self) -> int:
        return sum(k for k, _ in self.items())

    def size(self) -> int:
        return sum(1 for _ in self.items())

    def fingerprint(self) -> int:
        return hash(tuple(self.items()))
