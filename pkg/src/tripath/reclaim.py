"""Epoch-based deferred reclamation for retired records.

Threads bracket every structure operation with guard_enter/guard_exit,
announcing the epoch they run in. A retired record is freed only once the
global epoch has advanced twice past its retirement epoch, which cannot
happen while any thread that might still hold a reference is inside a
guard for an older epoch. Freeing poisons the record's link words so that
a use-after-free surfaces immediately in debug traversals.

Each thread owns three limbo bags (indexed by retirement epoch mod 3) that
only it touches; the global epoch is the only shared cell.
"""

from __future__ import annotations

import threading

from .llxscx import DataRecord

__all__ = ["EpochDomain", "FREED_POISON"]

FREED_POISON = "<freed>"

_BAGS = 3


class _Slot:
    __slots__ = ("ann_epoch", "active", "bags", "bag_epochs", "op_count", "freed", "limbo")

    def __init__(self) -> None:
        self.ann_epoch = 0
        self.active = False
        self.bags: list[list[DataRecord]] = [[] for _ in range(_BAGS)]
        self.bag_epochs = [0] * _BAGS
        self.op_count = 0
        self.freed = 0
        self.limbo = 0


class EpochDomain:
    def __init__(self, max_threads: int = 64, advance_every: int = 64):
        self.advance_every = advance_every
        self._epoch = 1
        self._lock = threading.Lock()
        self._slots = [_Slot() for _ in range(max_threads)]
        self._registered = 0

    # -- registration ------------------------------------------------------

    def register(self) -> int:
        with self._lock:
            tid = self._registered
            if tid >= len(self._slots):
                raise RuntimeError("too many registered threads")
            self._registered += 1
        return tid

    # -- guards -------------------------------------------------------------

    def guard_enter(self, tid: int) -> None:
        slot = self._slots[tid]
        assert not slot.active, "nested guard"
        slot.ann_epoch = self._epoch  # a stale (lower) announce is conservative
        slot.active = True

    def guard_exit(self, tid: int) -> None:
        slot = self._slots[tid]
        assert slot.active, "guard exit without enter"
        slot.active = False

    # -- retire / free -------------------------------------------------------

    def retire(self, tid: int, record: DataRecord) -> None:
        assert not record.retired, "double retire"
        record.retired = True
        with self._lock:
            # under the lock the epoch cannot advance, so the record lands
            # in the bag for the exact epoch in which it became unreachable
            epoch = self._epoch
        slot = self._slots[tid]
        bag = epoch % _BAGS
        if slot.bag_epochs[bag] != epoch:
            # this index cycles back only after its old content became safe
            self._free_bag(slot, bag)
            slot.bag_epochs[bag] = epoch
        slot.bags[bag].append(record)
        slot.limbo += 1

    def try_advance(self, tid: int) -> bool:
        """Advance the global epoch if every active thread has announced it.

        Regardless of the advance outcome, the calling thread drops any of
        its bags that are two or more epochs old.
        """
        advanced = False
        with self._lock:
            cur = self._epoch
            if all(
                not s.active or s.ann_epoch >= cur
                for s in self._slots[: self._registered]
            ):
                self._epoch = cur + 1
                advanced = True
        self._collect(self._slots[tid])
        return advanced

    def maybe_advance(self, tid: int) -> None:
        """Amortized hook: attempt an advance every `advance_every` ops."""
        slot = self._slots[tid]
        slot.op_count += 1
        if slot.op_count % self.advance_every == 0:
            self.try_advance(tid)

    def _collect(self, slot: _Slot) -> None:
        epoch = self._epoch
        for bag in range(_BAGS):
            # retired at e, freed once the epoch reached e + 2
            if slot.bags[bag] and epoch >= slot.bag_epochs[bag] + 2:
                self._free_bag(slot, bag)

    def _free_bag(self, slot: _Slot, bag: int) -> None:
        records = slot.bags[bag]
        if not records:
            return
        for record in records:
            record.freed = True
            for w in record.links:
                w.store(FREED_POISON)
        slot.freed += len(records)
        slot.limbo -= len(records)
        slot.bags[bag] = []

    # -- introspection ---------------------------------------------------------

    @property
    def epoch(self) -> int:
        return self._epoch

    @property
    def freed_total(self) -> int:
        return sum(s.freed for s in self._slots)

    @property
    def limbo_total(self) -> int:
        return sum(s.limbo for s in self._slots)
