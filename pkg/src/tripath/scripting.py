"""Deterministic turn-taking for multi-threaded unit tests.

A `StepScheduler` runs each scripted task on a real thread but serializes
them onto an explicit step sequence: a task only runs between grants, and
it hands control back whenever it reaches a `checkpoint()`. Checkpoints
are placed either directly in test closures or indirectly through probe
hooks exposed by the library layers. Calls to `checkpoint()` from threads
the scheduler does not own are no-ops, so probes can stay installed while
the driving thread runs library code itself.
"""

from __future__ import annotations

import random
import threading
from typing import Any, Callable

__all__ = ["DONE", "SchedulerStall", "StepScheduler"]

DONE = "<done>"


class SchedulerStall(RuntimeError):
    """A scripted thread failed to reach a checkpoint in time (it is most
    likely blocked on a lock held by another parked thread)."""


class _Task:
    __slots__ = ("name", "thread", "go", "ack", "label", "finished", "result", "error")

    def __init__(self, name: str):
        self.name = name
        self.thread: threading.Thread | None = None
        self.go = threading.Event()
        self.ack = threading.Event()
        self.label: str = ""
        self.finished = False
        self.result: Any = None
        self.error: BaseException | None = None


class StepScheduler:
    def __init__(self, timeout: float = 10.0):
        self._timeout = timeout
        self._tasks: dict[str, _Task] = {}
        self._by_thread: dict[int, _Task] = {}

    # -- task side -----------------------------------------------------------

    def checkpoint(self, label: str = "") -> None:
        """Yield control back to the driver. No-op on unscripted threads."""
        task = self._by_thread.get(threading.get_ident())
        if task is None:
            return
        task.label = label
        task.ack.set()
        task.go.wait()
        task.go.clear()

    # -- driver side ---------------------------------------------------------

    def spawn(self, name: str, fn: Callable[..., Any], *args: Any, **kwargs: Any) -> None:
        if name in self._tasks:
            raise ValueError(f"duplicate task {name!r}")
        task = _Task(name)

        def run() -> None:
            self._by_thread[threading.get_ident()] = task
            task.go.wait()
            task.go.clear()
            try:
                task.result = fn(*args, **kwargs)
            except BaseException as exc:  # re-raised by finish()
                task.error = exc
            finally:
                task.finished = True
                task.label = DONE
                task.ack.set()

        task.thread = threading.Thread(target=run, name=f"scripted-{name}", daemon=True)
        self._tasks[name] = task
        task.thread.start()

    def step(self, name: str) -> str:
        """Grant one step; block until the task checkpoints or finishes.

        Returns the checkpoint label, or DONE when the task completed.
        """
        task = self._tasks[name]
        if task.finished:
            return DONE
        task.ack.clear()
        task.go.set()
        if not task.ack.wait(self._timeout):
            raise SchedulerStall(f"task {name!r} did not reach a checkpoint")
        return task.label

    def release(self, name: str) -> None:
        """Grant a step without waiting (for tasks about to block on a lock)."""
        task = self._tasks[name]
        task.ack.clear()
        task.go.set()

    def run_until(self, name: str, label: str) -> None:
        """Step a task until it parks at the given checkpoint label."""
        while True:
            got = self.step(name)
            if got == label:
                return
            if got == DONE:
                raise AssertionError(f"task {name!r} finished before reaching {label!r}")

    def finish(self, name: str) -> Any:
        """Run a task to completion and return its result (or re-raise)."""
        task = self._tasks[name]
        while not task.finished:
            self.step(name)
        task.thread.join(self._timeout)
        if task.error is not None:
            raise task.error
        return task.result

    def finish_all(self) -> None:
        for name in list(self._tasks):
            self.finish(name)

    def run_random(self, seed: int) -> None:
        """Drive all tasks to completion with a seeded random interleaving."""
        rng = random.Random(seed)
        while True:
            live = [t.name for t in self._tasks.values() if not t.finished]
            if not live:
                break
            self.step(rng.choice(live))
        self.finish_all()

    def result(self, name: str) -> Any:
        return self._tasks[name].result
