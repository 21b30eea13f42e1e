"""Deterministic discrete-event network simulator.

Virtual time in ms; events execute in (time, ordinal) order so a run is a
pure function of (config, seed, workload). Hosts are single-threaded
servers: each task occupies the host for its processing cost and tasks
queue behind one another. Links apply a seeded delay model and drop
messages while a partition window covers them; per-link FIFO delivery is
the default and can be disabled to stress causal buffering.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .clocks import NodeId


class ConfigError(Exception):
    pass


# -- delay models ------------------------------------------------------------

class Fixed:
    def __init__(self, delay_ms: float):
        if delay_ms < 0:
            raise ConfigError("delay must be >= 0")
        self.delay_ms = float(delay_ms)

    def sample(self, rng: random.Random) -> float:
        return self.delay_ms

    def __repr__(self) -> str:
        return f"fixed:{self.delay_ms:g}"


class Uniform:
    def __init__(self, lo_ms: float, hi_ms: float):
        if not 0 <= lo_ms <= hi_ms:
            raise ConfigError("need 0 <= lo <= hi")
        self.lo, self.hi = float(lo_ms), float(hi_ms)

    def sample(self, rng: random.Random) -> float:
        return rng.uniform(self.lo, self.hi)

    def __repr__(self) -> str:
        return f"uniform:{self.lo:g},{self.hi:g}"


class LogNormal:
    """Parameters are of the underlying normal; median delay = exp(mu)."""

    def __init__(self, mu: float, sigma: float):
        if sigma < 0:
            raise ConfigError("sigma must be >= 0")
        self.mu, self.sigma = float(mu), float(sigma)

    @classmethod
    def from_median(cls, median_ms: float, sigma: float = 0.25) -> "LogNormal":
        return cls(math.log(median_ms), sigma)

    def sample(self, rng: random.Random) -> float:
        return rng.lognormvariate(self.mu, self.sigma)

    def __repr__(self) -> str:
        return f"lognormal:{self.mu:g},{self.sigma:g}"


DelayModel = Fixed | Uniform | LogNormal


def parse_delay_model(text: str) -> DelayModel:
    """Parse "fixed:5", "uniform:2,8", "lognormal:1.61,0.25" or
    "lognormal-median:5,0.25". Values are ms; an "ms" suffix is allowed
    ("fixed:5ms")."""
    try:
        kind, _, args = text.partition(":")
        parts = ([float(x.strip().removesuffix("ms")) for x in args.split(",")]
                 if args else [])
        if kind == "fixed" and len(parts) == 1:
            return Fixed(parts[0])
        if kind == "uniform" and len(parts) == 2:
            return Uniform(parts[0], parts[1])
        if kind == "lognormal" and len(parts) == 2:
            return LogNormal(parts[0], parts[1])
        if kind == "lognormal-median" and len(parts) == 2:
            return LogNormal.from_median(parts[0], parts[1])
    except (ValueError, ConfigError) as e:
        raise ConfigError(f"bad delay model {text!r}: {e}") from e
    raise ConfigError(f"bad delay model {text!r}")


# -- partitions ---------------------------------------------------------------

@dataclass(frozen=True)
class PartitionWindow:
    """During [start_ms, end_ms), links crossing the group boundary (or the
    listed directed links) drop every message sent through them."""

    start_ms: float
    end_ms: float
    groups: tuple[frozenset[NodeId], ...] = ()
    links: tuple[tuple[NodeId, NodeId], ...] = ()

    def severs(self, frm: NodeId, to: NodeId, now: float) -> bool:
        if not (self.start_ms <= now < self.end_ms):
            return False
        if self.links and (frm, to) in self.links:
            return True
        for group in self.groups:
            if (frm in group) != (to in group):
                return True
        return False


def isolate(nodes: Sequence[NodeId], start_ms: float, end_ms: float) -> PartitionWindow:
    """Window cutting `nodes` off from everyone else."""
    return PartitionWindow(start_ms, end_ms, groups=(frozenset(nodes),))


# -- event loop ---------------------------------------------------------------

class TraceLog:
    """Ordered record of everything the simulation did."""

    def __init__(self) -> None:
        self.lines: list[str] = []

    def add(self, time: float, label: str, **fields) -> None:
        rendered = " ".join(f"{k}={v}" for k, v in fields.items())
        self.lines.append(f"t={time:.6f} {label} {rendered}".rstrip())

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def filter(self, label: str) -> list[str]:
        return [ln for ln in self.lines
                if f" {label} " in ln or ln.endswith(f" {label}")]


class Simulator:
    def __init__(self, trace: Optional[TraceLog] = None):
        self.now = 0.0
        self.trace = trace if trace is not None else TraceLog()
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._ordinal = 0

    def schedule_at(self, time: float, fn: Callable[[], None]) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule into the past ({time} < {self.now})")
        self._ordinal += 1
        heapq.heappush(self._heap, (time, self._ordinal, fn))

    def schedule(self, delay_ms: float, fn: Callable[[], None]) -> None:
        self.schedule_at(self.now + delay_ms, fn)

    def log(self, label: str, **fields) -> None:
        self.trace.add(self.now, label, **fields)

    def run(self, until: Optional[float] = None,
            stop_when: Optional[Callable[[], bool]] = None) -> None:
        """Drain events in (time, ordinal) order.

        `until` bounds virtual time (events beyond it stay queued, the
        clock advances to `until`); `stop_when` is checked between events.
        """
        while self._heap:
            if stop_when is not None and stop_when():
                return
            time, _, fn = self._heap[0]
            if until is not None and time > until:
                self.now = until
                return
            heapq.heappop(self._heap)
            self.now = time
            fn()
        if until is not None and until > self.now:
            self.now = until

    @property
    def pending_events(self) -> int:
        return len(self._heap)


class Host:
    """Single-threaded processing model for one node.

    A task arriving at time t starts at max(t, busy_until) and occupies the
    host for its cost; its body runs at completion time, so replies depart
    only after the work is done.
    """

    def __init__(self, sim: Simulator, node_id: NodeId):
        self.sim = sim
        self.node_id = node_id
        self.busy_until = 0.0

    def run_task(self, cost_ms: float, fn: Callable[[], None]) -> float:
        start = max(self.sim.now, self.busy_until)
        done = start + cost_ms
        self.busy_until = done
        self.sim.schedule_at(done, fn)
        return done


class Network:
    """Point-to-point message fabric with delays, drops, and partitions."""

    def __init__(self, sim: Simulator, rng: random.Random,
                 default_model: DelayModel, fifo: bool = True):
        self.sim = sim
        self.rng = rng
        self.default_model = default_model
        self.fifo = fifo
        self.link_models: dict[tuple[NodeId, NodeId], DelayModel] = {}
        self.link_down: set[tuple[NodeId, NodeId]] = set()
        self.partitions: list[PartitionWindow] = []
        self._last_delivery: dict[tuple[NodeId, NodeId], float] = {}
        self.route: Callable[[NodeId, NodeId, str, object], None] = _unrouted
        self.sent = 0
        self.dropped = 0

    def set_link_model(self, frm: NodeId, to: NodeId, model: DelayModel) -> None:
        self.link_models[(frm, to)] = model

    def set_link_up(self, frm: NodeId, to: NodeId, up: bool) -> None:
        if up:
            self.link_down.discard((frm, to))
        else:
            self.link_down.add((frm, to))

    def add_partitions(self, windows: Sequence[PartitionWindow]) -> None:
        self.partitions.extend(windows)

    def heal(self) -> None:
        """End every partition window as of now and raise all links."""
        now = self.sim.now
        self.partitions = [
            PartitionWindow(w.start_ms, min(w.end_ms, now), w.groups, w.links)
            for w in self.partitions
        ]
        self.link_down.clear()

    def severed(self, frm: NodeId, to: NodeId) -> bool:
        if (frm, to) in self.link_down:
            return True
        return any(w.severs(frm, to, self.sim.now) for w in self.partitions)

    def send(self, frm: NodeId, to: NodeId, kind: str, payload: object) -> None:
        """Queue a message; drops (not delays) it if the link is severed."""
        if frm == to:
            raise ValueError("loopback send")
        self.sent += 1
        if self.severed(frm, to):
            self.dropped += 1
            self.sim.log("drop", frm=frm, to=to, kind=kind)
            return
        model = self.link_models.get((frm, to), self.default_model)
        arrival = self.sim.now + model.sample(self.rng)
        if self.fifo:
            arrival = max(arrival, self._last_delivery.get((frm, to), 0.0))
            self._last_delivery[(frm, to)] = arrival
        self.sim.log("send", frm=frm, to=to, kind=kind)
        self.sim.schedule_at(
            arrival, lambda: self._deliver(frm, to, kind, payload))

    def _deliver(self, frm: NodeId, to: NodeId, kind: str, payload: object) -> None:
        self.sim.log("deliver", frm=frm, to=to, kind=kind)
        self.route(to, frm, kind, payload)


def _unrouted(to: NodeId, frm: NodeId, kind: str, payload: object) -> None:
    raise RuntimeError("network.route not wired")
