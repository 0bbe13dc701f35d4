"""Multi-record load-link / store-conditional synchronization.

The layer operates on `DataRecord`s: nodes with a fixed tuple of mutable
link words, an `info` word, and a `marked` flag. `llx` snapshots a record's
links; `scx` atomically changes one link of one record and finalizes a
subset of the involved records, provided none of them changed since their
linked llx.

Two interchangeable write paths are provided:

* `scx_o` — the CAS-based algorithm. It publishes a descriptor, freezes
  every involved record by CAS-ing the descriptor into its info word, and
  can be helped to completion by any other thread that stumbles on it.
* `scx_htm` — the transactional variant, run inside an engine transaction.
  It never creates descriptors: it validates the recorded info words,
  then overwrites each with a fresh tagged sequence number (low bit set,
  so readers can tell it apart from a descriptor handle) and performs the
  link update, all buffered until the enclosing commit.

Both preserve the anti-ABA freshness rule the CAS path relies on: between
any two changes to a record's links, its info word receives a value it has
never held before.

`llx_htm` is the tag-aware read path used whenever the transactional write
path may be active; a tagged info value is treated as an already-committed
descriptor. `llx_o` is the strict original and must only be used in a
world where info words always hold descriptors.
"""

from __future__ import annotations

import itertools
import threading
from collections import deque
from typing import Any, Callable, Sequence

from .engine import DIRECT, AbortReason, EmulatedEngine, TxnContext, Word, FAILED_VALIDATION

__all__ = [
    "DataRecord",
    "FAIL",
    "FINALIZED",
    "IN_PROGRESS",
    "COMMITTED",
    "ABORTED",
    "ScxRecord",
    "SyncLayer",
    "make_tagged_seq",
    "is_tagged",
    "tagged_pid",
    "tagged_seq",
]

IN_PROGRESS = 0
COMMITTED = 1
ABORTED = 2

_STATE_NAMES = {IN_PROGRESS: "InProgress", COMMITTED: "Committed", ABORTED: "Aborted"}


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name


FAIL = _Sentinel("FAIL")
FINALIZED = _Sentinel("FINALIZED")

# Tagged sequence number layout: bit 0 tag (always 1), bits 1..15 process id,
# bits 16+ sequence number. The increment applied per publish is 1 << 16.
TAG_INCREMENT = 1 << 16
MAX_PROCESSES = 1 << 15


def make_tagged_seq(pid: int, seq: int = 0) -> int:
    assert 0 <= pid < MAX_PROCESSES
    return (seq << 16) | (pid << 1) | 1


def is_tagged(info_value: Any) -> bool:
    return isinstance(info_value, int)


def tagged_pid(value: int) -> int:
    return (value >> 1) & (MAX_PROCESSES - 1)


def tagged_seq(value: int) -> int:
    return value >> 16


class DataRecord:
    """A node: mutable link words + opaque immutable payload + info/marked."""

    __slots__ = ("uid", "info", "marked", "links", "layer", "history", "retired", "freed")

    def __init__(self, layer: "SyncLayer", links: Sequence[Any] = ()):
        engine = layer.engine
        self.layer = layer
        self.uid = next(layer._uids)
        self.info: Word = engine.word(layer._init_info)
        self.marked: Word = engine.word(False)
        self.links: tuple[Word, ...] = tuple(engine.word(v) for v in links)
        self.history = deque(maxlen=64) if layer.debug else None
        self.retired = False
        self.freed = False
        layer._count_alloc()

    # -- debug info-history -------------------------------------------------

    def log_info_store(self, value: Any) -> None:
        if self.history is not None:
            with self.layer._hist_lock:
                self.history.append(("info", value))

    def log_link_change(self) -> None:
        if self.history is not None:
            with self.layer._hist_lock:
                self.history.append(("links",))

    def info_history_values(self) -> list[Any]:
        if self.history is None:
            return []
        with self.layer._hist_lock:
            return [v for kind, v in ((e[0], e[1] if len(e) > 1 else None) for e in self.history) if kind == "info"]

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<{type(self).__name__} #{self.uid}>"


class ScxRecord:
    """Descriptor of one in-flight CAS-path scx, enabling helping."""

    __slots__ = (
        "records",
        "finalize",
        "field",
        "new_value",
        "old_value",
        "state",
        "all_frozen",
        "info_snapshot",
        "frozen_order",
    )

    def __init__(
        self,
        engine: EmulatedEngine,
        records: tuple[DataRecord, ...],
        finalize: tuple[DataRecord, ...],
        field: tuple[DataRecord, int],
        new_value: Any,
        old_value: Any,
        info_snapshot: dict[DataRecord, Any],
        state: int = IN_PROGRESS,
    ):
        self.records = records
        self.finalize = finalize
        self.field = field
        self.new_value = new_value
        self.old_value = old_value
        self.state: Word = engine.word(state)
        self.all_frozen: Word = engine.word(False)
        self.info_snapshot = info_snapshot
        # Freezing iterates records in one global total order (creation order)
        # so that competing operations cannot freeze in conflicting orders.
        self.frozen_order = tuple(sorted(records, key=lambda r: r.uid))

    def state_name(self) -> str:
        return _STATE_NAMES[self.state.load()]


class _ProcState:
    __slots__ = ("table", "tseq", "attempts")

    def __init__(self, pid: int):
        self.table: dict[DataRecord, tuple[Any, tuple[Any, ...]]] = {}
        self.tseq = make_tagged_seq(pid, 0)
        self.attempts = 0


class SyncLayer:
    """Per-structure instance bundling the engine, process registration,
    per-process link tables, and debug instrumentation."""

    def __init__(self, engine: EmulatedEngine, max_processes: int = 64, debug: bool = False):
        if not 1 <= max_processes <= MAX_PROCESSES:
            raise ValueError("max_processes out of range")
        self.engine = engine
        self.debug = debug
        self.max_processes = max_processes
        self.probe: Callable[..., None] | None = None
        self._uids = itertools.count()
        self._procs: list[_ProcState] = []
        self._reg_lock = threading.Lock()
        self._hist_lock = threading.Lock()
        self._tls = threading.local()
        self._allocs: list[int] = []
        # Fresh records start with a dummy already-aborted descriptor in
        # their info word, so they read as unfrozen. One shared dummy is
        # enough: it appears at most once in any single record's history.
        self._init_info: ScxRecord | None = None
        self._init_info = ScxRecord(engine, (), (), (None, 0), None, None, {}, state=ABORTED)

    # -- registration & counters -------------------------------------------

    def register_process(self) -> int:
        with self._reg_lock:
            pid = len(self._procs)
            if pid >= self.max_processes:
                raise RuntimeError("too many registered processes")
            self._procs.append(_ProcState(pid))
            self._allocs.append(0)
        self._tls.pid = pid
        return pid

    def current_pid(self) -> int | None:
        return getattr(self._tls, "pid", None)

    def _count_alloc(self) -> None:
        pid = getattr(self._tls, "pid", None)
        if pid is not None:
            self._allocs[pid] += 1

    def alloc_count(self, pid: int) -> int:
        return self._allocs[pid]

    def total_allocs(self) -> int:
        return sum(self._allocs)

    def attempts(self, pid: int) -> int:
        return self._procs[pid].attempts

    def tseq(self, pid: int) -> int:
        return self._procs[pid].tseq

    def linked_snapshot(self, pid: int, rec: DataRecord) -> tuple[Any, ...]:
        return self._procs[pid].table[rec][1]

    def linked_info(self, pid: int, rec: DataRecord) -> Any:
        return self._procs[pid].table[rec][0]

    # -- llx -----------------------------------------------------------------

    def llx_o(self, pid: int, rec: DataRecord):
        """Original load-link. Must never encounter tagged info values."""
        return self._llx(pid, rec, DIRECT, tag_aware=False)

    def llx_htm(self, pid: int, rec: DataRecord, mem=None):
        """Tag-aware load-link; callable inside or outside a transaction."""
        return self._llx(pid, rec, mem if mem is not None else DIRECT, tag_aware=True)

    def _llx(self, pid: int, rec: DataRecord, mem, tag_aware: bool):
        read = mem.read

        def state_of(info_value) -> int:
            if is_tagged(info_value):
                if not tag_aware:
                    raise AssertionError("llx_o observed a tagged info value")
                return COMMITTED
            return read(info_value.state)

        marked1 = read(rec.marked)
        rinfo = read(rec.info)
        state = state_of(rinfo)
        marked2 = read(rec.marked)
        if state == ABORTED or (state == COMMITTED and not marked2):
            values = tuple(read(w) for w in rec.links)
            after = read(rec.info)
            if after is rinfo or after == rinfo:
                self._procs[pid].table[rec] = (rinfo, values)
                return values
        state2 = state_of(rinfo)
        if (state2 == COMMITTED or (state2 == IN_PROGRESS and self.help(rinfo, mem))) and marked1:
            return FINALIZED
        rinfo2 = read(rec.info)
        if state_of(rinfo2) == IN_PROGRESS:
            self.help(rinfo2, mem)
        return FAIL

    # -- scx: CAS path ---------------------------------------------------------

    def scx_o(
        self,
        pid: int,
        records: Sequence[DataRecord],
        finalize: Sequence[DataRecord],
        field: tuple[DataRecord, int],
        new_value: Any,
    ) -> bool:
        table = self._procs[pid].table
        records = tuple(records)
        finalize = tuple(finalize)
        if self.debug:
            assert set(finalize) <= set(records)
            assert field[0] in records
            for r in records:
                assert r in table, "scx without a linked llx"
        info_snapshot = {r: table[r][0] for r in records}
        old_value = table[field[0]][1][field[1]]
        desc = ScxRecord(self.engine, records, finalize, field, new_value, old_value, info_snapshot)
        return self.help(desc, DIRECT)

    def help(self, desc: ScxRecord, mem=DIRECT) -> bool:
        """Drive a published descriptor to completion (idempotently).

        Returns True iff the operation it describes succeeds, whether or not
        this caller performed the final steps.
        """
        probe = self.probe
        direct = mem is DIRECT
        for rec in desc.frozen_order:
            expected = desc.info_snapshot[rec]
            if probe:
                probe("freeze", rec=rec, desc=desc)
            if mem.cas(rec.info, expected, desc):
                if direct:
                    rec.log_info_store(desc)
            elif mem.read(rec.info) is not desc:
                # could not freeze: rec is frozen for another operation
                if mem.read(desc.all_frozen):
                    # the operation already completed successfully
                    if probe:
                        probe("frozen-check", desc=desc)
                    return True
                mem.write(desc.state, ABORTED)
                if probe:
                    probe("abort", desc=desc)
                return False
        if probe:
            probe("frozen", desc=desc)
        mem.write(desc.all_frozen, True)
        for rec in desc.finalize:
            if probe:
                probe("mark", rec=rec, desc=desc)
            mem.write(rec.marked, True)
        if probe:
            probe("update", desc=desc)
        fld_rec, slot = desc.field
        if mem.cas(fld_rec.links[slot], desc.old_value, desc.new_value) and direct:
            fld_rec.log_link_change()
        if probe:
            probe("commit", desc=desc)
        mem.write(desc.state, COMMITTED)
        return True

    # -- scx: transactional path ----------------------------------------------

    def scx_htm(
        self,
        pid: int,
        ctx: TxnContext,
        records: Sequence[DataRecord],
        finalize: Sequence[DataRecord],
        field: tuple[DataRecord, int],
        new_value: Any,
    ) -> bool:
        """Transactional scx; must run inside an engine transaction whose
        linked llx snapshots (llx_htm) are recorded for every record.

        Validates every info word before performing any write; on a stale
        info word the transaction aborts explicitly with FAILED_VALIDATION.
        Returns True, pending the enclosing commit.
        """
        st = self._procs[pid]
        table = st.table
        st.tseq += TAG_INCREMENT
        ts = st.tseq
        records = tuple(records)
        for rec in records:
            expected = table[rec][0]
            cur = ctx.read(rec.info)
            if not (cur is expected or cur == expected):
                ctx.abort_explicit(FAILED_VALIDATION)
        for rec in records:
            ctx.write(rec.info, ts)
        for rec in finalize:
            ctx.write(rec.marked, True)
        fld_rec, slot = field
        ctx.write(fld_rec.links[slot], new_value)
        if self.debug:
            def log(records=records, ts=ts, fld_rec=fld_rec):
                for rec in records:
                    rec.log_info_store(ts)
                fld_rec.log_link_change()

            ctx.defer(log)
        return True

    # -- dispatcher -------------------------------------------------------------

    def scx_dispatch(
        self,
        pid: int,
        records: Sequence[DataRecord],
        finalize: Sequence[DataRecord],
        field: tuple[DataRecord, int],
        new_value: Any,
        budget: int,
    ) -> bool:
        """Budgeted scx: transactional attempts while the per-process attempt
        counter is under `budget`, then the CAS path. A successful return
        resets the counter; a validation failure returns False immediately
        (the caller must re-search and re-link before retrying).
        """
        st = self._procs[pid]
        engine = self.engine
        while True:
            if st.attempts < budget:
                st.attempts += 1
                out = engine.txn_execute(
                    lambda ctx: self.scx_htm(pid, ctx, records, finalize, field, new_value)
                )
                if out.committed:
                    st.attempts = 0
                    return True
                if out.reason is AbortReason.EXPLICIT and out.code == FAILED_VALIDATION:
                    return False
                continue
            ok = self.scx_o(pid, records, finalize, field, new_value)
            if ok:
                st.attempts = 0
            return ok
