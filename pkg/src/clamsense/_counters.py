"""Complex-multiplication counters charged by the numerical routines.

Routines call :func:`charge` with the cost-model count of the operation
they just performed.  Counting is off unless a :class:`MulCounter` is
active::

    with MulCounter() as c:
        covariance(y)
    c.total, c.terms["covariance"]
"""
from __future__ import annotations

import contextvars
from collections import Counter

_active: contextvars.ContextVar["MulCounter | None"] = contextvars.ContextVar("clamsense_counter", default=None)


class MulCounter:
    def __init__(self):
        self.terms: Counter[str] = Counter()
        self.calls: Counter[str] = Counter()
        self._token = None

    def __enter__(self) -> "MulCounter":
        self._token = _active.set(self)
        return self

    def __exit__(self, *exc):
        _active.reset(self._token)
        return False

    @property
    def total(self) -> int:
        return int(sum(self.terms.values()))

    def add(self, term: str, n: int) -> None:
        self.terms[term] += int(n)
        self.calls[term] += 1


def charge(term: str, n: int) -> None:
    c = _active.get()
    if c is not None:
        c.add(term, n)
