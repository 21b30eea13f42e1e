"""Linearizability checking for single-register KV histories.

Histories are per-client invocation/response intervals for writes and
reads. Checking decomposes per key (linearizability is compositional over
independent objects) and then runs a Wing & Gong style search with
memoization: pick any real-time-minimal pending operation, apply it to the
register model, recurse. Operations without a response (timeouts) may
linearize at any point after invocation or not at all.

Intended scale is histories of a few hundred operations, as produced by
the simulator; the search is exact, not a heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class HistoryOp:
    """One client operation on one key.

    For writes, `value` is what was written. For reads, it is what the
    read returned (None = key absent). `end` None marks an operation that
    never got a response.
    """

    client: int
    kind: str  # "write" | "read"
    key: bytes
    value: Optional[bytes]
    start: float
    end: Optional[float]

    def __post_init__(self):
        if self.kind not in ("write", "read"):
            raise ValueError(f"bad op kind {self.kind!r}")
        if self.kind == "write" and self.value is None:
            raise ValueError("write needs a value")


def check_linearizable(history: list[HistoryOp]) -> bool:
    """True iff some linearization of the completed ops exists."""
    by_key: dict[bytes, list[HistoryOp]] = {}
    for op in history:
        by_key.setdefault(op.key, []).append(op)
    return all(_check_register(ops) for ops in by_key.values())


def _check_register(ops: list[HistoryOp]) -> bool:
    ops = sorted(ops, key=lambda o: (o.start, o.end if o.end is not None
                                     else float("inf")))
    m = len(ops)
    completed_mask = 0
    for i, op in enumerate(ops):
        if op.end is not None:
            completed_mask |= 1 << i

    # precedence[i] = bitmask of ops that must linearize before op i
    precedence = [0] * m
    for i, a in enumerate(ops):
        for j, b in enumerate(ops):
            if i != j and b.end is not None and b.end < a.start:
                precedence[i] |= 1 << j

    seen: set[tuple[int, Optional[bytes]]] = set()

    def search(done: int, state: Optional[bytes]) -> bool:
        if done & completed_mask == completed_mask:
            return True
        if (done, state) in seen:
            return False
        seen.add((done, state))
        for i in range(m):
            bit = 1 << i
            if done & bit:
                continue
            # minimal: everything that really precedes i is already placed
            if precedence[i] & ~done:
                continue
            op = ops[i]
            if op.kind == "read":
                if op.value == state and search(done | bit, state):
                    return True
            else:
                if search(done | bit, op.value):
                    return True
        return False

    return search(0, None)
