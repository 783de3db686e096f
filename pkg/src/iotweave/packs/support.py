"""Wiring shared by the example packs: the coordinator bus adapter,
time-of-day clocks, the door plant model, and the System container."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..coordinator import Annotation, Coordinator, ProcessOutcome, Resolution
from ..core import (
    ActuatorSpec,
    Discrete,
    DontCare,
    EventRecord,
    PayloadValue,
    Prefer,
    Range,
    SettingRecord,
    decode_setting,
)
from ..engine import Engine, Timeout
from ..machines import Machine

DAY_MS = 24 * 60 * 60 * 1000
HOUR_MS = 60 * 60 * 1000


def parse_hhmm(text: str) -> int:
    """'HH:MM' -> minute of day."""
    hh, mm = text.split(":")
    hour, minute = int(hh), int(mm)
    if not (0 <= hour < 24 and 0 <= minute < 60):
        raise ValueError(f"bad time of day: {text!r}")
    return hour * 60 + minute


def parse_window(text: str) -> tuple[int, int]:
    """'HH:MM-HH:MM' -> (start, end) minutes; may wrap midnight."""
    start, end = text.split("-")
    return parse_hhmm(start), parse_hhmm(end)


class CoordinatorModule:
    """Event-bus face of one Coordinator.

    Consumes setting records on ``<actuator>.set``; emits real commands on
    ``<actuator>`` and a replica of the current real value on
    ``<actuator>.real`` after every processed record, so features can learn
    when their settings are ineffectual.  Also arms expiration timers and
    culls immediate-tagged records on feedback.
    """

    def __init__(self, actuator: ActuatorSpec, initial_value: str | int | None = None,
                 explain: bool = False):
        self.coordinator = Coordinator(actuator, initial_value)
        self.name = actuator.name
        self.set_stream = f"{actuator.name}.set"
        self.real_stream = f"{actuator.name}.real"
        self.explain = explain
        self.explanations: list[tuple[int, tuple[str, ...]]] = []

    def wire(self, bus: Engine) -> None:
        bus.mark_stream(self.name, "command")
        bus.mark_stream(self.real_stream, "feedback")
        bus.subscribe(self.set_stream, self)
        bus.subscribe(self.real_stream, self)

    def on_delivery(self, bus: Engine, delivery: EventRecord | Timeout) -> None:
        if isinstance(delivery, Timeout):
            feature, priority, stamped = delivery.tag
            outcome = self.coordinator.expire(feature, priority, stamped, now=bus.now)
            if outcome is not None:
                self._emit(bus, outcome)
        elif delivery.stream == self.set_stream:
            record, annotation = decode_input(delivery)
            outcome = self.coordinator.process(record, annotation, seq=delivery.seq)
            self._emit(bus, outcome)
        elif delivery.stream == self.real_stream:
            for outcome in self.coordinator.cancel_ineffectual_immediates():
                self._emit(bus, outcome)

    def _emit(self, bus: Engine, outcome: ProcessOutcome) -> None:
        if outcome.command is not None:
            event = bus.publish(self.name, {
                "value": outcome.command,
                "by": attribution(outcome.resolution),
            })
            if self.explain:
                self.explanations.append((event.seq, self._explain_lines()))
        if self.coordinator.old_value is not None:
            bus.publish(self.real_stream, {"value": self.coordinator.old_value})
        if outcome.timer is not None:
            t = outcome.timer
            bus.set_timer(self, t.fire_at, (t.feature, t.priority, t.stamped_time))

    def _explain_lines(self) -> tuple[str, ...]:
        report = self.coordinator.explain()
        if not report.entries:
            return (f"no current settings; actuator holds last value: {report.held_value}",)
        lines = []
        for e in report.entries:
            status = "in-force" if e.in_force else "ineffectual"
            if not e.in_force and e.blocked_by:
                status += f" under {e.blocked_by[0]}@{e.blocked_by[1]}"
            extras = ""
            if e.expires_at is not None:
                extras += f" expires={e.expires_at}"
            if e.immediate:
                extras += " immediate"
            lines.append(f"{e.feature}@{e.priority} {e.setting!r} t={e.time} {status}{extras}")
        return tuple(lines)


def decode_input(event: EventRecord) -> tuple[SettingRecord, Annotation]:
    """Turn a .set stream record into a SettingRecord plus its annotations."""
    payload = event.payload
    record = SettingRecord(
        time=event.time,
        feature=str(payload["feature"]),
        priority=int(payload["priority"]),
        setting=decode_setting(payload),
    )
    expires = payload.get("expires_at")
    annotation = Annotation(
        expires_at=int(expires) if expires is not None else None,
        immediate=bool(payload.get("immediate", 0)),
    )
    return record, annotation


def attribution(resolution: Resolution | None) -> str:
    if resolution is None or not resolution.in_force:
        return ""
    ranked = sorted(resolution.in_force, key=lambda fp: (-fp[1], fp[0]))
    return ",".join(f"{feature}@{priority}" for feature, priority in ranked)


class PhaseClock:
    """Publishes a two-phase day/night style signal derived from a clock window.

    Scenario time 0 corresponds to the configured origin time of day.  The
    current phase is published at t=0 and again at every window boundary.
    """

    def __init__(self, stream: str, window: tuple[int, int], origin_min: int,
                 labels: tuple[str, str]):
        self.stream = stream
        self.start_ms = window[0] * 60_000
        self.end_ms = window[1] * 60_000
        self.origin_ms = origin_min * 60_000
        self.labels = labels  # (inside window, outside window)

    def phase_at(self, t: int) -> str:
        mod = (self.origin_ms + t) % DAY_MS
        if self.start_ms <= self.end_ms:
            inside = self.start_ms <= mod < self.end_ms
        else:
            inside = mod >= self.start_ms or mod < self.end_ms
        return self.labels[0] if inside else self.labels[1]

    def next_boundary(self, t: int) -> int:
        deltas = []
        for target in (self.start_ms, self.end_ms):
            delta = (target - (self.origin_ms + t)) % DAY_MS
            deltas.append(delta if delta > 0 else DAY_MS)
        return t + min(deltas)

    def wire(self, bus: Engine) -> None:
        bus.publish(self.stream, {"phase": self.phase_at(0)}, time=0)
        bus.set_timer(self, self.next_boundary(0), "flip")

    def on_delivery(self, bus: Engine, delivery: EventRecord | Timeout) -> None:
        if isinstance(delivery, Timeout):
            bus.publish(self.stream, {"phase": self.phase_at(bus.now)})
            bus.set_timer(self, self.next_boundary(bus.now), "flip")


class HourClock:
    """Publishes the hour of day at t=0 and at every hour boundary."""

    def __init__(self, stream: str, origin_min: int):
        self.stream = stream
        self.origin_ms = origin_min * 60_000

    def hour_at(self, t: int) -> int:
        return ((self.origin_ms + t) // HOUR_MS) % 24

    def wire(self, bus: Engine) -> None:
        bus.publish(self.stream, {"hour": self.hour_at(0)}, time=0)
        delta = HOUR_MS - ((self.origin_ms) % HOUR_MS)
        bus.set_timer(self, delta if delta > 0 else HOUR_MS, "tick")

    def on_delivery(self, bus: Engine, delivery: EventRecord | Timeout) -> None:
        if isinstance(delivery, Timeout):
            bus.publish(self.stream, {"hour": self.hour_at(bus.now)})
            bus.set_timer(self, bus.now + HOUR_MS, "tick")


class LockPlant:
    """Minimal door model: the lock follows commands promptly and reliably.

    A command that changes the physical state is confirmed with a sensor
    record one causal step later.  Mechanical operations arrive as external
    sensor records and are tracked but never echoed.
    """

    def __init__(self, command_stream: str, sensor_stream: str, initial_state: str):
        self.command_stream = command_stream
        self.sensor_stream = sensor_stream
        self.state = initial_state

    def wire(self, bus: Engine) -> None:
        bus.subscribe(self.command_stream, self)
        bus.subscribe(self.sensor_stream, self)

    def on_delivery(self, bus: Engine, delivery: EventRecord | Timeout) -> None:
        if isinstance(delivery, Timeout):
            return
        value = str(delivery.payload["value"])
        if delivery.stream == self.command_stream:
            if value != self.state:
                self.state = value
                bus.publish(self.sensor_stream, {"value": value})
        else:
            self.state = value


@dataclass
class System:
    """A fully wired pack: engine, coordinators, machines and helpers."""

    engine: Engine
    pack: str
    actuators: dict[str, ActuatorSpec]
    coordinators: dict[str, CoordinatorModule]
    machines: dict[str, Machine]
    helpers: dict[str, object] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def run(self, end_time: int):
        return self.engine.run(end_time)

    def inject(self, time: int, stream: str, payload: dict[str, PayloadValue]) -> None:
        self.engine.publish(stream, payload, time=time)

    def explanations(self) -> dict[int, tuple[str, ...]]:
        merged: dict[int, tuple[str, ...]] = {}
        for module in self.coordinators.values():
            merged.update(dict(module.explanations))
        return merged

    def set_explain(self, enabled: bool) -> None:
        for module in self.coordinators.values():
            module.explain = enabled


def parse_int(value: str | int, key: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ValueError(f"config {key} must be an integer, got {value!r}") from None
