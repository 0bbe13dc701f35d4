"""History recording and brute-force linearizability checking.

Histories are sequences of complete operation events (per-thread order is
program order; cross-thread real-time order comes from a global invocation
/response counter). The checker searches exhaustively for a total order
that respects real-time precedence and replays every response exactly on
a sequential ordered-map oracle, memoizing visited (frontier, oracle
state) pairs.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Iterable

__all__ = [
    "BudgetExceeded",
    "HistoryEvent",
    "HistoryRecorder",
    "OracleDict",
    "Verdict",
    "check_linearizable",
    "dump_history",
    "keysum_verify",
    "load_history",
    "structural_validate",
]

MAX_THREADS = 3
MAX_OPS = 36


class BudgetExceeded(RuntimeError):
    """History too large for exhaustive checking."""


@dataclass(frozen=True)
class HistoryEvent:
    tid: int
    kind: str                       # insert | delete | search | range_query
    args: tuple
    response: Any
    inv: int
    resp: int


@dataclass
class Verdict:
    ok: bool
    witness: list[HistoryEvent] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


class OracleDict:
    """Reference sequential semantics for the four dictionary operations."""

    def __init__(self) -> None:
        self.data: dict[int, int] = {}

    def apply(self, kind: str, args: tuple) -> Any:
        data = self.data
        if kind == "insert":
            k, v = args
            absent = k not in data
            data[k] = v
            return absent
        if kind == "delete":
            (k,) = args
            return data.pop(k, None) is not None
        if kind == "search":
            (k,) = args
            return data.get(k)
        if kind == "range_query":
            lo, hi = args
            return tuple(sorted((k, v) for k, v in data.items() if lo <= k < hi))
        raise ValueError(f"unknown operation {kind!r}")

    def state_key(self) -> frozenset:
        return frozenset(self.data.items())


def _normalize(kind: str, response: Any) -> Any:
    if kind == "range_query":
        return tuple(tuple(p) for p in response)
    return response


def check_linearizable(history: Iterable[HistoryEvent]) -> Verdict:
    """Exhaustively decide whether the history has a legal sequential order.

    Raises BudgetExceeded beyond 3 threads or 36 operations.
    """
    events = sorted(history, key=lambda e: e.inv)
    if not events:
        return Verdict(True)
    tids = sorted({e.tid for e in events})
    if len(tids) > MAX_THREADS:
        raise BudgetExceeded(f"{len(tids)} threads exceed the limit of {MAX_THREADS}")
    if len(events) > MAX_OPS:
        raise BudgetExceeded(f"{len(events)} operations exceed the limit of {MAX_OPS}")

    queues: list[list[HistoryEvent]] = [[] for _ in tids]
    tid_index = {t: i for i, t in enumerate(tids)}
    for e in events:
        queues[tid_index[e.tid]].append(e)
    for q in queues:
        for earlier, later in zip(q, q[1:]):
            if not earlier.resp <= later.inv:
                raise ValueError("events of one thread overlap")

    total = len(events)
    oracle = OracleDict()
    positions = [0] * len(queues)
    chosen: list[HistoryEvent] = []
    undo: list[tuple] = []
    seen: set[tuple] = set()
    best_prefix: list[HistoryEvent] = []

    def apply(e: HistoryEvent) -> bool:
        data = oracle.data
        if e.kind == "insert":
            k, v = e.args
            undo.append(("insert", k, data.get(k, _ABSENT)))
            expected = k not in data
            data[k] = v
            return _normalize(e.kind, e.response) == expected
        if e.kind == "delete":
            (k,) = e.args
            undo.append(("delete", k, data.get(k, _ABSENT)))
            expected = data.pop(k, _ABSENT) is not _ABSENT
            return _normalize(e.kind, e.response) == expected
        undo.append(("read",))
        return _normalize(e.kind, e.response) == oracle.apply(e.kind, e.args)

    def revert() -> None:
        entry = undo.pop()
        if entry[0] in ("insert", "delete"):
            _, k, prior = entry
            if prior is _ABSENT:
                oracle.data.pop(k, None)
            else:
                oracle.data[k] = prior

    def dfs() -> bool:
        nonlocal best_prefix
        if len(chosen) == total:
            return True
        key = (tuple(positions), oracle.state_key())
        if key in seen:
            return False
        seen.add(key)
        # an event is eligible if no pending event precedes it in real time:
        # per thread, responses are monotone, so comparing heads suffices
        heads = [q[p] for q, p in zip(queues, positions) if p < len(q)]
        min_resp = min(h.resp for h in heads)
        for i, q in enumerate(queues):
            if positions[i] >= len(q):
                continue
            head = q[positions[i]]
            if head.inv > min_resp:
                continue
            if not apply(head):
                revert()
                continue
            chosen.append(head)
            positions[i] += 1
            if len(chosen) > len(best_prefix):
                best_prefix = chosen.copy()
            if dfs():
                return True
            positions[i] -= 1
            chosen.pop()
            revert()
        return False

    if dfs():
        return Verdict(True, chosen.copy())
    return Verdict(False, best_prefix)


_ABSENT = object()


# ---------------------------------------------------------------------------
# recording
# ---------------------------------------------------------------------------


class HistoryRecorder:
    """Wraps a dictionary, logging one event per completed operation."""

    def __init__(self, target):
        self._target = target
        self._clock = 0
        self._clock_lock = threading.Lock()
        self._events: list[HistoryEvent] = []
        self._events_lock = threading.Lock()
        self._tls = threading.local()
        self._next_tid = 0

    def _tick(self) -> int:
        with self._clock_lock:
            self._clock += 1
            return self._clock

    def _tid(self) -> int:
        tid = getattr(self._tls, "tid", None)
        if tid is None:
            with self._events_lock:
                tid = self._next_tid
                self._next_tid += 1
            self._tls.tid = tid
        return tid

    def _call(self, kind: str, args: tuple) -> Any:
        tid = self._tid()
        inv = self._tick()
        response = getattr(self._target, kind)(*args)
        resp = self._tick()
        event = HistoryEvent(tid, kind, args, _normalize(kind, response), inv, resp)
        with self._events_lock:
            self._events.append(event)
        return response

    def insert(self, key: int, value: int):
        return self._call("insert", (key, value))

    def delete(self, key: int):
        return self._call("delete", (key,))

    def search(self, key: int):
        return self._call("search", (key,))

    def range_query(self, lo: int, hi: int):
        return self._call("range_query", (lo, hi))

    def history(self) -> list[HistoryEvent]:
        with self._events_lock:
            return sorted(self._events, key=lambda e: e.inv)


# ---------------------------------------------------------------------------
# serialization: `tid op args → resp @inv,resp-ts`
# ---------------------------------------------------------------------------


def dump_history(history: Iterable[HistoryEvent]) -> str:
    lines = []
    for e in sorted(history, key=lambda ev: ev.inv):
        args = ",".join(str(a) for a in e.args)
        lines.append(f"{e.tid} {e.kind} {args} → {e.response!r} @{e.inv},{e.resp}")
    return "\n".join(lines)


def load_history(text: str) -> list[HistoryEvent]:
    import ast

    events = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        head, _, rest = line.partition(" → ")
        tid_s, kind, args_s = head.split(" ", 2)
        resp_s, _, ts = rest.rpartition(" @")
        inv_s, _, resp_ts_s = ts.partition(",")
        args = tuple(int(a) for a in args_s.split(",") if a != "")
        events.append(
            HistoryEvent(int(tid_s), kind, args, ast.literal_eval(resp_s), int(inv_s), int(resp_ts_s))
        )
    return events


# ---------------------------------------------------------------------------
# structure-level verification
# ---------------------------------------------------------------------------


def structural_validate(dictionary) -> list[str]:
    """Shape/order/balance violations of a quiescent dictionary."""
    return dictionary.structural_violations()


def keysum_verify(per_thread_sums: Iterable[int], dictionary) -> bool:
    """Inserted-minus-deleted key totals must equal the keys now present."""
    return sum(per_thread_sums) == dictionary.key_sum()
