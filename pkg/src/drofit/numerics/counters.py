"""Multiply-accumulate instrumentation.

Kernels call :func:`tally` with the number of MACs they actually performed.
Counts land in the innermost active :class:`MacCounter`, keyed by the current
:func:`scope` path and the kernel kind.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict

_counter: contextvars.ContextVar["MacCounter | None"] = contextvars.ContextVar("_counter", default=None)
_scope: contextvars.ContextVar[tuple[str, ...]] = contextvars.ContextVar("_scope", default=())


class MacCounter:
    def __init__(self):
        self.counts: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))

    def add(self, kind: str, n: int) -> None:
        self.counts[current_scope()][kind] += int(n)

    def by_scope(self) -> dict[str, int]:
        return {s: sum(k.values()) for s, k in self.counts.items()}

    def total(self) -> int:
        return sum(sum(k.values()) for k in self.counts.values())

    def kind_total(self, kind: str) -> int:
        return sum(k.get(kind, 0) for k in self.counts.values())

    def as_dict(self) -> dict[str, dict[str, int]]:
        return {s: dict(k) for s, k in self.counts.items()}


def current_scope() -> str:
    return ".".join(_scope.get())


@contextlib.contextmanager
def scope(name: str):
    token = _scope.set(_scope.get() + (name,))
    try:
        yield
    finally:
        _scope.reset(token)


@contextlib.contextmanager
def count_macs():
    counter = MacCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def tally(kind: str, n: int) -> None:
    counter = _counter.get()
    if counter is not None:
        counter.add(kind, n)
