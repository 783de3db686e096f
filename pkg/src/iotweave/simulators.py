"""Virtual-sensor simulators: stream transformers over real sensor and
replicated actuator streams."""

from __future__ import annotations

from typing import Callable

from .core import EventRecord, PayloadValue
from .engine import Engine, Timeout


class MechanicalOperationDetector:
    """Detects lock-state changes not caused by actuator commands.

    Watches the replica of values the coordinator sends to the lock and the
    lock's own sensor stream.  Each command for a value different from the
    tracked state opens an expectation window; a sensor change matching an
    open expectation is the lock obeying and closes it silently.  A sensor
    change with no matching expectation was a mechanical operation and is
    reported as a virtual event.
    """

    def __init__(self, *, command_stream: str, sensor_stream: str, output_stream: str,
                 initial_state: str, expect_window_ms: int = 500):
        self.command_stream = command_stream
        self.sensor_stream = sensor_stream
        self.output_stream = output_stream
        self.tracked = initial_state
        self.expect_window_ms = expect_window_ms
        self._expectations: list[tuple[str, int]] = []  # (value, deadline)
        self._resync = False

    def wire(self, bus: Engine) -> None:
        bus.subscribe(self.command_stream, self)
        bus.subscribe(self.sensor_stream, self)

    def on_delivery(self, bus: Engine, delivery: EventRecord | Timeout) -> None:
        if isinstance(delivery, Timeout):
            return
        value = str(delivery.payload.get("value"))
        self._drop_expired(bus, delivery.time)
        if delivery.stream == self.command_stream:
            if value != self.tracked:
                self._expectations.append((value, delivery.time + self.expect_window_ms))
        else:
            self._on_sensor(bus, value)

    def _on_sensor(self, bus: Engine, value: str) -> None:
        if value == self.tracked:
            return  # sensor repeat
        for i, (expected, _deadline) in enumerate(self._expectations):
            if expected == value:
                del self._expectations[: i + 1]
                self.tracked = value
                return
        if self._resync:
            self.tracked = value
            self._resync = False
            return
        self.tracked = value
        bus.publish(self.output_stream,
                    {"value": "mechLock" if value == "locked" else "mechUnlock"})

    def _drop_expired(self, bus: Engine, now: int) -> None:
        live = [(v, d) for v, d in self._expectations if d >= now]
        if len(live) != len(self._expectations):
            bus.trace_note("diagnostic", self.output_stream,
                           "expectation window expired without sensor confirmation; "
                           "resynchronizing on next sensor value")
            self._resync = True
        self._expectations = live


class PureTransform:
    """Stateless record-to-record mapping onto a virtual sensor stream."""

    def __init__(self, *, inputs: tuple[str, ...], output: str,
                 fn: Callable[[EventRecord], dict[str, PayloadValue] | None]):
        self.inputs = inputs
        self.output = output
        self.fn = fn

    def wire(self, bus: Engine) -> None:
        for stream in self.inputs:
            bus.subscribe(stream, self)

    def on_delivery(self, bus: Engine, delivery: EventRecord | Timeout) -> None:
        if isinstance(delivery, Timeout):
            return
        payload = self.fn(delivery)
        if payload is not None:
            bus.publish(self.output, payload)


def brightness_bands(dim_lux: int, bright_lux: int) -> Callable[[EventRecord], dict | None]:
    """Bucket skylight lux readings into dark / dim / bright."""

    def classify(event: EventRecord) -> dict | None:
        lux = int(event.payload["lux"])
        if lux >= bright_lux:
            band = "bright"
        elif lux >= dim_lux:
            band = "dim"
        else:
            band = "dark"
        return {"value": band}

    return classify
