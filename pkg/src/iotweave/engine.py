"""Deterministic discrete-event bus: streams, timers, run-to-quiescence.

All module concurrency is serialized into a single total order keyed by
(time, seq).  An effect published while an event is being delivered is
stamped at least ``causal_delta`` later than its cause, so replaying a
scenario always yields an identical trace.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Protocol

from .core import EventRecord, PayloadValue, Timestamp


class CausalityError(RuntimeError):
    """An effect was published at or before its cause's timestamp."""


class NonQuiescenceError(RuntimeError):
    """The step budget ran out; likely a feedback loop that never settles."""


@dataclass(frozen=True)
class Timeout:
    """Delivered to a timer's owner when it fires."""

    time: Timestamp
    tag: object


@dataclass(frozen=True)
class TraceLine:
    time: Timestamp
    seq: int
    kind: str  # command | feedback | display | diagnostic
    name: str
    value: PayloadValue
    by: str | None = None


class Module(Protocol):
    def on_delivery(self, bus: "Engine", delivery: EventRecord | Timeout) -> None: ...


@dataclass
class _TimerEntry:
    fire_at: Timestamp
    seq: int
    owner: "Module"
    tag: object
    cancelled: bool = field(default=False)


class Engine:
    """Single-threaded deterministic scheduler for one scenario run."""

    def __init__(self, causal_delta: int = 1, max_steps: int = 100_000):
        self.causal_delta = causal_delta
        self.max_steps = max_steps
        self.now: Timestamp = 0
        self.trace: list[TraceLine] = []
        self._seq = 0
        self._queue: list[tuple[Timestamp, int, object]] = []
        self._subs: dict[str, list[Module]] = {}
        self._marks: dict[str, str] = {}
        self._delivering = False
        self._steps = 0

    # -- wiring --------------------------------------------------------------

    def subscribe(self, stream: str, module: Module) -> None:
        """Register for every future record on the stream; idempotent."""
        listeners = self._subs.setdefault(stream, [])
        if module not in listeners:
            listeners.append(module)

    def mark_stream(self, stream: str, kind: str) -> None:
        """Have records on this stream show up in the run trace."""
        self._marks[stream] = kind

    # -- publication ----------------------------------------------------------

    def publish(self, stream: str, payload: dict[str, PayloadValue],
                time: Timestamp | None = None) -> EventRecord:
        """Enqueue a record.

        During a delivery the record is stamped now + causal_delta when no
        time is given; an explicit earlier time is a causality violation.
        Outside of deliveries (scenario setup) declared times are kept as-is.
        """
        if time is None:
            time = self.now + self.causal_delta if self._delivering else self.now
        elif self._delivering and time < self.now + self.causal_delta:
            raise CausalityError(
                f"record on {stream!r} stamped {time} but cause was at {self.now}"
            )
        self._seq += 1
        record = EventRecord(time=time, seq=self._seq, stream=stream, payload=dict(payload))
        heapq.heappush(self._queue, (record.time, record.seq, record))
        return record

    def set_timer(self, owner: Module, fire_at: Timestamp, tag: object) -> _TimerEntry:
        if fire_at <= self.now and self._delivering:
            raise ValueError(f"timer must fire after now={self.now}, got {fire_at}")
        self._seq += 1
        entry = _TimerEntry(fire_at, self._seq, owner, tag)
        heapq.heappush(self._queue, (fire_at, entry.seq, entry))
        return entry

    def cancel_timer(self, handle: _TimerEntry | None) -> None:
        """No-op for fired or unknown handles."""
        if isinstance(handle, _TimerEntry):
            handle.cancelled = True

    def trace_note(self, kind: str, name: str, value: PayloadValue,
                   by: str | None = None) -> None:
        """Append an out-of-band line (diagnostics, explanations) to the trace."""
        self._seq += 1
        self.trace.append(TraceLine(self.now, self._seq, kind, name, value, by))

    # -- execution -------------------------------------------------------------

    def run(self, end_time: Timestamp) -> list[TraceLine]:
        """Deliver queued items in (time, seq) order until the horizon.

        Stops at quiescence (no items at or before end_time) or aborts when
        max_steps deliveries happen first.
        """
        while self._queue and self._queue[0][0] <= end_time:
            time, _seq, item = heapq.heappop(self._queue)
            if isinstance(item, _TimerEntry) and item.cancelled:
                continue
            self._steps += 1
            if self._steps > self.max_steps:
                self.trace_note("diagnostic", "engine",
                                "aborted: possible non-quiescent feedback loop")
                raise NonQuiescenceError(
                    f"exceeded {self.max_steps} deliveries before {end_time} ms"
                )
            self.now = time
            if isinstance(item, _TimerEntry):
                self._deliver(item.owner, Timeout(time, item.tag))
            else:
                assert isinstance(item, EventRecord)
                kind = self._marks.get(item.stream)
                if kind is not None:
                    self.trace.append(TraceLine(
                        item.time, item.seq, kind, item.stream,
                        item.payload.get("value", ""),
                        by=str(item.payload["by"]) if "by" in item.payload else None,
                    ))
                for module in list(self._subs.get(item.stream, ())):
                    self._deliver(module, item)
        return self.trace

    def _deliver(self, module: Module, delivery: EventRecord | Timeout) -> None:
        was = self._delivering
        self._delivering = True
        try:
            module.on_delivery(self, delivery)
        finally:
            self._delivering = was
