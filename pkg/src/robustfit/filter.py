"""Two-axis filter of (objective, constraint violation) pairs."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .errors import InvalidArgument, InvalidHandle


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True iff ``a`` is strictly better than ``b`` in both coordinates."""
    return a[0] < b[0] and a[1] < b[1]


def _covers(a: tuple[float, float], b: tuple[float, float]) -> bool:
    # closed upper-right quadrant of a contains b
    return a[0] <= b[0] and a[1] <= b[1]


@dataclass
class FilterEntry:
    f: float
    h: float
    permanent: bool
    handle: int

    @property
    def pair(self) -> tuple[float, float]:
        return (self.f, self.h)


class Filter:
    """Set of mutually non-dominating pairs; a candidate is acceptable when it
    lies outside the closed upper-right quadrant of every entry.

    Temporary entries carry the margin-shifted pair of the current iterate
    while a step is being tried; they are either dropped or made permanent.
    """

    def __init__(self, margin: float = 0.01):
        if not 0 < margin < 1:
            raise InvalidArgument("filter margin must lie in (0, 1)")
        self.margin = float(margin)
        self._entries: list[FilterEntry] = []
        self._ids = itertools.count()

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[tuple[float, float, bool]]:
        """Current (f, h, permanent) triples, for dumps and tests."""
        return [(e.f, e.h, e.permanent) for e in self._entries]

    def permanent_pairs(self) -> list[tuple[float, float]]:
        return [e.pair for e in self._entries if e.permanent]

    def accepts(self, f: float, h: float) -> bool:
        if not (math.isfinite(f) and math.isfinite(h)):
            return False
        c = (f, h)
        return not any(_covers(e.pair, c) for e in self._entries)

    def push_temporary(self, f: float, h: float) -> int:
        if not (math.isfinite(f) and math.isfinite(h)):
            raise InvalidArgument("filter pairs must be finite")
        if h < 0:
            raise InvalidArgument("constraint violation must be non-negative")
        shift = self.margin * h
        handle = next(self._ids)
        self._entries.append(FilterEntry(f - shift, h - shift, False, handle))
        return handle

    def resolve_temporary(self, handle: int, objective_decreased: bool) -> None:
        """Drop the temporary entry if the objective decreased, otherwise promote it."""
        idx = next((i for i, e in enumerate(self._entries)
                    if e.handle == handle and not e.permanent), None)
        if idx is None:
            raise InvalidHandle(f"no temporary filter entry with handle {handle}")
        entry = self._entries.pop(idx)
        if objective_decreased or entry.h <= 0:
            return
        others = [e for e in self._entries if e.permanent]
        if any(_covers(e.pair, entry.pair) for e in others):
            return
        self._entries = [e for e in self._entries if not (e.permanent and _covers(entry.pair, e.pair))]
        entry.permanent = True
        self._entries.append(entry)
