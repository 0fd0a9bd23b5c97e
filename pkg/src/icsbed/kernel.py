"""Deterministic discrete-event kernel with a single virtual clock.

All device behaviour runs on kernel turns. Time is integer microseconds;
event order is (time, insertion sequence), so identical schedules replay
identically. Long-running device behaviours are written as generators that
yield awaitable steps (see ``Task``).
"""
from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field

US = 1
MS = 1000
SECOND = 1_000_000


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no float repr surprises."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class EventLog:
    """Ordered, hashable run record."""

    records: list = field(default_factory=list)

    def append(self, t_us: int, category: str, payload: dict):
        self.records.append({"t_us": t_us, "cat": category, **payload})

    def serialize(self) -> str:
        return "".join(canonical_json(r) + "\n" for r in self.records)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    def by_category(self, category: str) -> list:
        return [r for r in self.records if r["cat"] == category]

    @staticmethod
    def digest_of_text(text: str) -> str:
        return hashlib.sha256(text.encode()).hexdigest()


class Kernel:
    def __init__(self, seed: int = 0):
        self.now_us = 0
        self._heap = []
        self._seq = 0
        self._cancelled = set()
        self.log = EventLog()
        self.rng = random.Random(seed)
        self.seed = seed

    def at(self, t_us: int, fn):
        if t_us < self.now_us:
            t_us = self.now_us
        self._seq += 1
        heapq.heappush(self._heap, (t_us, self._seq, fn))
        return (t_us, self._seq)

    def after(self, dt_us: int, fn):
        return self.at(self.now_us + dt_us, fn)

    def cancel(self, handle):
        # Lazy cancellation: mark the slot dead; the run loop skips it.
        self._cancelled.add(handle)

    def run_until(self, t_end_us: int):
        while self._heap and self._heap[0][0] <= t_end_us:
            t, seq, fn = heapq.heappop(self._heap)
            if (t, seq) in self._cancelled:
                self._cancelled.discard((t, seq))
                continue
            self.now_us = t
            fn()
        self.now_us = t_end_us

    def spawn(self, gen, on_done=None):
        """Drive a generator task; it yields Sleep or transaction starters.

        ``on_done`` receives the generator's return value when it finishes.
        """
        Task(self, gen, on_done).step(None)


@dataclass(frozen=True)
class Sleep:
    dt_us: int


@dataclass(frozen=True)
class SleepUntil:
    t_us: int


class Task:
    """Resumes a generator each time its yielded step completes.

    Yield values:
      Sleep(dt) / SleepUntil(t)  -- timer
      callable(done)             -- starts an async op, calls done(result)
    The generator receives the step's result at the next ``yield``.
    """

    def __init__(self, kernel: Kernel, gen, on_done=None):
        self.kernel = kernel
        self.gen = gen
        self.on_done = on_done

    def step(self, value):
        try:
            yielded = self.gen.send(value)
        except StopIteration as stop:
            if self.on_done is not None:
                self.on_done(stop.value)
            return
        self._dispatch(yielded)

    def _dispatch(self, yielded):
        if isinstance(yielded, Sleep):
            self.kernel.after(yielded.dt_us, lambda: self._resume(None))
        elif isinstance(yielded, SleepUntil):
            self.kernel.at(yielded.t_us, lambda: self._resume(None))
        elif callable(yielded):
            yielded(self._resume)
        else:
            raise TypeError(f"task yielded {yielded!r}")

    def _resume(self, result):
        try:
            yielded = self.gen.send(result)
        except StopIteration as stop:
            if self.on_done is not None:
                self.on_done(stop.value)
            return
        self._dispatch(yielded)
