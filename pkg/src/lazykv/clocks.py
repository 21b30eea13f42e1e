"""Logical clocks: hybrid logical clock stamps and vector clocks."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterator

NodeId = int


@dataclass(frozen=True, order=True)
class Hlc:
    """Hybrid logical clock stamp: (physical ms, logical counter).

    Tuple order on (physical, logical) is total; ties between nodes are
    broken one level up, by node id, wherever a winner must be picked.
    """

    physical: int
    logical: int = 0


def wall_ms() -> int:
    return int(time.time() * 1000)


class HlcClock:
    """Issues strictly increasing Hlc stamps for one node.

    `now_fn` supplies physical time in ms; in simulation it is wired to the
    virtual clock, in live mode it defaults to the wall clock.
    """

    def __init__(self, now_fn: Callable[[], int] = wall_ms):
        self.now_fn = now_fn
        self._last = Hlc(0, 0)

    def tick(self) -> Hlc:
        """Stamp a local event."""
        now = self.now_fn()
        if now > self._last.physical:
            self._last = Hlc(now, 0)
        else:
            self._last = Hlc(self._last.physical, self._last.logical + 1)
        return self._last

    def observe(self, remote: Hlc) -> None:
        """Fold in a stamp seen on a received message."""
        now = self.now_fn()
        phys = max(now, self._last.physical, remote.physical)
        if phys == self._last.physical and phys == remote.physical:
            logical = max(self._last.logical, remote.logical) + 1
        elif phys == self._last.physical:
            logical = self._last.logical + 1
        elif phys == remote.physical:
            logical = remote.logical + 1
        else:
            logical = 0
        self._last = Hlc(phys, logical)

    @property
    def last(self) -> Hlc:
        return self._last


@dataclass
class VectorClock:
    """Map node id -> op counter; absent entries read as 0.

    Merge takes the pointwise max, so counters never decrease and merge is
    commutative, associative and idempotent.
    """

    entries: dict[NodeId, int] = field(default_factory=dict)

    def get(self, node: NodeId) -> int:
        return self.entries.get(node, 0)

    def set(self, node: NodeId, counter: int) -> None:
        if counter < 0:
            raise ValueError(f"counter must be >= 0, got {counter}")
        if counter == 0:
            self.entries.pop(node, None)
        else:
            self.entries[node] = counter

    def advance(self, node: NodeId) -> int:
        """Bump `node` by one and return the new counter."""
        nxt = self.get(node) + 1
        self.entries[node] = nxt
        return nxt

    def merge(self, other: VectorClock) -> None:
        for node, counter in other.entries.items():
            if counter > self.get(node):
                self.entries[node] = counter

    def dominates(self, other: VectorClock) -> bool:
        """True iff self >= other pointwise."""
        return all(self.get(n) >= c for n, c in other.entries.items())

    def copy(self) -> VectorClock:
        return VectorClock(dict(self.entries))

    def items(self) -> Iterator[tuple[NodeId, int]]:
        return iter(self.entries.items())

    def as_sorted_tuple(self) -> tuple[tuple[NodeId, int], ...]:
        """Canonical form: zero entries dropped, sorted by node id."""
        return tuple(sorted((n, c) for n, c in self.entries.items() if c > 0))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorClock):
            return NotImplemented
        return self.as_sorted_tuple() == other.as_sorted_tuple()

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}:{c}" for n, c in self.as_sorted_tuple())
        return "{" + inner + "}"
