"""Benchmark harness: prefill, timed randomized trials, CSV reporting.

Two workloads are supported. In *light*, every thread performs updates
(half insertions, half deletions) over uniform keys. In *heavy*, one
thread performs only range queries whose sizes follow floor(x^2 * S) + 1
for uniform x (many small ranges, a few large ones), and the remaining
threads perform updates.

Every trial is verified before it is reported: per-thread key sums
(inserted minus deleted) must match the keys left in the tree, and the
structural validator must come back clean after a rebalance drain.
"""

from __future__ import annotations

import argparse
import random
import sys
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Any

from .checker import keysum_verify, structural_validate
from .engine import AbortReason
from .policy import FALLBACK, FAST, MIDDLE, PolicyKind
from .trees import DictConfig, make_dictionary

__all__ = [
    "CSV_HEADER",
    "TrialResult",
    "WorkloadSpec",
    "main",
    "prefill",
    "report",
    "run_trial",
    "sample_range_size",
]

DEFAULT_RANGE_MAX = {"bst": 1000, "abtree": 10000}

CSV_HEADER = (
    "tree,policy,threads,workload,trial,ops,ops_per_sec,"
    "fast_done,middle_done,fallback_done,"
    "fast_commit,fast_abort_conflict,fast_abort_capacity,fast_abort_explicit,fast_abort_spurious,"
    "middle_commit,middle_abort_conflict,middle_abort_capacity,middle_abort_explicit,middle_abort_spurious,"
    "keysum_ok"
)


@dataclass(frozen=True)
class WorkloadSpec:
    tree: str = "bst"
    policy: PolicyKind = PolicyKind.THREE_PATH
    n_threads: int = 4
    key_range: int = 100_000
    duration_s: float = 1.0
    workload: str = "light"            # light | heavy
    range_size_max: int | None = None  # defaults per tree
    attempt_limit: int = 20
    fast_limit: int = 10
    middle_limit: int = 10
    capacity_limit: int = 64
    spurious_abort_prob: float = 0.0
    seed: int = 1
    trials: int = 5
    op_limit: int | None = None        # per-thread cap; makes trials deterministic
    search_outside_txn: bool = False
    debug: bool = False

    def range_max(self) -> int:
        return self.range_size_max if self.range_size_max is not None else DEFAULT_RANGE_MAX[self.tree]

    def dict_config(self) -> DictConfig:
        return DictConfig(
            policy=self.policy,
            attempt_limit=self.attempt_limit,
            fast_limit=self.fast_limit,
            middle_limit=self.middle_limit,
            capacity_limit=self.capacity_limit,
            spurious_abort_prob=self.spurious_abort_prob,
            seed=self.seed,
            search_outside_txn=self.search_outside_txn,
            debug=self.debug,
            max_threads=self.n_threads + 2,
        )


@dataclass
class TrialResult:
    spec: WorkloadSpec
    trial: int
    total_ops: int
    ops_per_sec: float
    stats: dict[str, dict[str, Any]]
    keysum_ok: bool
    structural_ok: bool
    wall_time: float

    def csv_row(self) -> str:
        return _format_row(self.spec, str(self.trial), self.total_ops, self.ops_per_sec, self.stats, self.keysum_ok)


class BenchVerificationError(RuntimeError):
    pass


def sample_range_size(x: float, size_max: int) -> int:
    """Biased range size: floor(x^2 * S) + 1 for uniform x in [0, 1)."""
    if not 0.0 <= x < 1.0:
        raise ValueError("x must be in [0, 1)")
    if size_max < 1:
        raise ValueError("size_max must be >= 1")
    return int(x * x * size_max) + 1


def prefill(dictionary, key_range: int, seed: int, timeout_s: float = 60.0) -> int:
    """Grow a fresh dictionary to about half its key range.

    Runs half insertions / half deletions on uniform keys, single-threaded
    (hence reproducible for a fixed seed), until the size enters the
    +/- 5%-of-K band around K/2. Returns the inserted-minus-deleted key
    total so callers can fold it into key-sum verification.
    """
    rng = random.Random(seed)
    target = key_range / 2
    band = 0.05 * key_range
    size = dictionary.size()
    keysum = 0
    deadline = time.monotonic() + timeout_s
    while abs(size - target) > band:
        key = rng.randrange(key_range)
        if rng.random() < 0.5:
            if dictionary.insert(key, key):
                size += 1
                keysum += key
        else:
            if dictionary.delete(key):
                size -= 1
                keysum -= key
        if time.monotonic() > deadline:
            raise TimeoutError("prefill did not converge")
    return keysum


def _worker(dictionary, spec: WorkloadSpec, tid: int, trial: int, barrier, stop, out):
    rng = random.Random(f"{spec.seed}:{trial}:{tid}")
    key_range = spec.key_range
    range_max = spec.range_max()
    is_rq_thread = spec.workload == "heavy" and tid == 0
    ops = 0
    keysum = 0
    recent = []
    dictionary.register_thread()
    barrier.wait()
    limit = spec.op_limit
    while not stop.is_set():
        if is_rq_thread:
            lo = rng.randrange(key_range)
            s = sample_range_size(rng.random(), range_max)
            dictionary.range_query(lo, lo + s)
        else:
            key = rng.randrange(key_range)
            if rng.random() < 0.5:
                if dictionary.insert(key, key):
                    keysum += key
                recent.append(("insert", key))
            else:
                if dictionary.delete(key):
                    keysum -= key
                recent.append(("delete", key))
            if len(recent) > 16:
                del recent[0]
        ops += 1
        if limit is not None and ops >= limit:
            break
    out[tid] = (ops, keysum, recent)


def run_trial(spec: WorkloadSpec, trial: int = 1) -> TrialResult:
    dictionary = make_dictionary(spec.tree, spec.dict_config())
    prefill_sum = prefill(dictionary, spec.key_range, seed=spec.seed + trial)

    stop = threading.Event()
    barrier = threading.Barrier(spec.n_threads + 1)
    out: dict[int, tuple] = {}
    threads = [
        threading.Thread(target=_worker, args=(dictionary, spec, tid, trial, barrier, stop, out))
        for tid in range(spec.n_threads)
    ]
    for t in threads:
        t.start()
    barrier.wait()
    started = time.monotonic()
    if spec.op_limit is None:
        stop.wait(spec.duration_s)
    stop.set()
    for t in threads:
        t.join()
    wall = time.monotonic() - started

    dictionary.drain_rebalance()
    total_ops = sum(v[0] for v in out.values())
    keysums = [prefill_sum] + [v[1] for v in out.values()]
    ok_sum = keysum_verify(keysums, dictionary)
    violations = structural_validate(dictionary)
    if not ok_sum or violations:
        tails = {tid: v[2] for tid, v in out.items()}
        raise BenchVerificationError(
            f"trial verification failed: keysum_ok={ok_sum}, "
            f"violations={violations[:5]}, recent-ops={tails}"
        )
    return TrialResult(
        spec=spec,
        trial=trial,
        total_ops=total_ops,
        ops_per_sec=total_ops / spec.duration_s,
        stats=dictionary.stats.snapshot(),
        keysum_ok=ok_sum,
        structural_ok=not violations,
        wall_time=wall,
    )


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------


def _format_row(spec, trial_label, ops, ops_per_sec, stats, keysum_ok) -> str:
    def path_cells(path):
        p = stats[path]
        return [
            p["commits"],
            p["aborts"][AbortReason.CONFLICT],
            p["aborts"][AbortReason.CAPACITY],
            p["aborts"][AbortReason.EXPLICIT],
            p["aborts"][AbortReason.SPURIOUS],
        ]

    cells = [
        spec.tree,
        spec.policy.value,
        spec.n_threads,
        spec.workload,
        trial_label,
        ops,
        f"{ops_per_sec:.1f}",
        stats[FAST]["completions"],
        stats[MIDDLE]["completions"],
        stats[FALLBACK]["completions"],
        *path_cells(FAST),
        *path_cells(MIDDLE),
        int(keysum_ok),
    ]
    return ",".join(str(c) for c in cells)


def report(results: list[TrialResult]) -> str:
    """CSV with one row per trial plus a trailing mean row."""
    lines = [CSV_HEADER]
    for r in results:
        lines.append(r.csv_row())
    if results:
        spec = results[0].spec
        n = len(results)
        mean_ops = sum(r.total_ops for r in results) / n
        mean_rate = sum(r.ops_per_sec for r in results) / n
        merged = _merge_stats([r.stats for r in results])
        lines.append(
            _format_row(spec, "mean", int(mean_ops), mean_rate, merged, all(r.keysum_ok for r in results))
        )
    return "\n".join(lines)


def _merge_stats(snaps):
    n = len(snaps)
    merged = {}
    for path in (FAST, MIDDLE, FALLBACK):
        merged[path] = {
            "completions": sum(s[path]["completions"] for s in snaps) // n,
            "commits": sum(s[path]["commits"] for s in snaps) // n,
            "aborts": {
                r: sum(s[path]["aborts"][r] for s in snaps) // n for r in AbortReason
            },
        }
    return merged


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tripath-bench",
        description="Concurrent-dictionary microbenchmark with selectable execution-path policies.",
    )
    p.add_argument("--tree", choices=["bst", "abtree"], default="bst")
    p.add_argument("--policy", choices=[k.value for k in PolicyKind], default="3path")
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--duration-ms", type=int, default=1000)
    p.add_argument("--keyrange", type=int, default=100_000)
    p.add_argument("--workload", choices=["light", "heavy"], default="light")
    p.add_argument("--range-max", type=int, default=None, help="max range-query size (default 1000 bst / 10000 abtree)")
    p.add_argument("--fast-limit", type=int, default=10)
    p.add_argument("--middle-limit", type=int, default=10)
    p.add_argument("--attempt-limit", type=int, default=20)
    p.add_argument("--cap-limit", type=int, default=64)
    p.add_argument("--spurious-prob", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--csv", action="store_true", help="suppress progress chatter; emit CSV only")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    spec = WorkloadSpec(
        tree=args.tree,
        policy=PolicyKind(args.policy),
        n_threads=args.threads,
        key_range=args.keyrange,
        duration_s=args.duration_ms / 1000.0,
        workload=args.workload,
        range_size_max=args.range_max,
        attempt_limit=args.attempt_limit,
        fast_limit=args.fast_limit,
        middle_limit=args.middle_limit,
        capacity_limit=args.cap_limit,
        spurious_abort_prob=args.spurious_prob,
        seed=args.seed,
        trials=args.trials,
    )
    results = []
    for trial in range(1, spec.trials + 1):
        if not args.csv:
            print(f"# trial {trial}/{spec.trials} ...", file=sys.stderr, flush=True)
        results.append(run_trial(spec, trial))
    print(report(results))
    return 0


if __name__ == "__main__":
    sys.exit(main())
