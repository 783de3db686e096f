"""Feature runtime: finite-state machines that emit virtual actuator settings.

A machine's state (plus its local variables) denotes its current setting of
one primary actuator.  Transitions fire on stream records or timeouts; when
the denoted setting changes, the machine implicitly publishes a new record
to the actuator's coordinator.  Self-transitions emit nothing but may reset
timers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .core import (
    DONT_CARE,
    DontCare,
    EventRecord,
    PayloadValue,
    SettingValue,
    encode_setting,
    satisfies,
)
from .engine import Engine, Timeout


class MachineLoadError(ValueError):
    """A machine spec violates its own structural rules."""


@dataclass(frozen=True)
class OnTimeout:
    """Transition trigger: this machine's timer with the given tag fired."""

    tag: str


Trigger = str | OnTimeout  # stream name, or a timeout tag
Guard = Callable[["Machine", EventRecord | Timeout], bool]
SettingLike = SettingValue | Callable[["Machine"], SettingValue]


@dataclass(frozen=True)
class Emit:
    """Action: write a record to a stream (stream may depend on the delivery)."""

    stream: str | Callable[["Machine", EventRecord | Timeout], str]
    payload: Mapping[str, PayloadValue] | Callable[["Machine", EventRecord | Timeout], dict]


@dataclass(frozen=True)
class StartTimer:
    """Action: (re)arm the machine's timer for the tag; exclusive per tag."""

    tag: str
    duration_ms: int | Callable[["Machine"], int]


@dataclass(frozen=True)
class StopTimer:
    tag: str


@dataclass(frozen=True)
class SetVar:
    name: str
    value: PayloadValue | Callable[["Machine", EventRecord | Timeout], PayloadValue]


@dataclass(frozen=True)
class Call:
    """Action: run arbitrary local-state bookkeeping (no bus access)."""

    fn: Callable[["Machine", EventRecord | Timeout], None]


Action = Emit | StartTimer | StopTimer | SetVar | Call


@dataclass(frozen=True)
class TransitionSpec:
    from_state: str
    on: Trigger
    to_state: str
    guard: Guard | None = None
    actions: tuple[Action, ...] = ()


@dataclass(frozen=True)
class MachineSpec:
    feature: str
    primary_actuator: str
    priority: int
    states: frozenset[str]
    state_setting: Mapping[str, SettingLike]
    initial: str
    transitions: tuple[TransitionSpec, ...]
    vars: Mapping[str, PayloadValue] = field(default_factory=dict)
    cancel_on_ineffectual: bool = False
    always_on: bool = False  # keeps a current setting at all times; no initial-DontCare warning
    streams: frozenset[str] | None = None  # validated against transitions when given


class Machine:
    """Runnable instance of a MachineSpec, driven by engine deliveries."""

    def __init__(self, spec: MachineSpec, *, config: object = None):
        _validate(spec)
        self.spec = spec
        self.config = config
        self.state = spec.initial
        self.vars: dict[str, PayloadValue] = dict(spec.vars)
        self.last_real: PayloadValue | None = None
        self.warnings: list[str] = []
        self._timers: dict[str, object] = {}
        self._emitted = self._setting_of(spec.initial)
        if not isinstance(self._emitted, DontCare) and not spec.always_on:
            self.warnings.append(
                f"{spec.feature}: initial state {spec.initial!r} holds a setting; "
                "situation-scoped features should start at dontCare"
            )

    @property
    def feature(self) -> str:
        return self.spec.feature

    @property
    def setting_stream(self) -> str:
        return f"{self.spec.primary_actuator}.set"

    @property
    def feedback_stream(self) -> str:
        return f"{self.spec.primary_actuator}.real"

    def input_streams(self) -> set[str]:
        return {t.on for t in self.spec.transitions if isinstance(t.on, str)}

    def current_setting(self) -> SettingValue:
        return self._setting_of(self.state)

    def wire(self, bus: Engine) -> None:
        """Subscribe to guard streams, feedback, and push the startup setting."""
        for stream in self.input_streams():
            bus.subscribe(stream, self)
        bus.subscribe(self.feedback_stream, self)
        if not isinstance(self._emitted, DontCare):
            self._publish_setting(bus, self._emitted)

    # -- delivery ---------------------------------------------------------

    def on_delivery(self, bus: Engine, delivery: EventRecord | Timeout) -> None:
        if isinstance(delivery, EventRecord) and delivery.stream == self.feedback_stream:
            self.last_real = delivery.payload.get("value")
            if self._cancel_if_ineffectual(bus):
                return
        transition = self._match(delivery)
        if transition is not None:
            for action in transition.actions:
                self._run_action(bus, action, delivery)
            self.state = transition.to_state
            after = self.current_setting()
            if after != self._emitted:
                self._publish_setting(bus, after)

    def _match(self, delivery: EventRecord | Timeout) -> TransitionSpec | None:
        for t in self.spec.transitions:
            if t.from_state != self.state:
                continue
            if isinstance(delivery, Timeout):
                if not (isinstance(t.on, OnTimeout) and t.on.tag == delivery.tag):
                    continue
            else:
                if t.on != delivery.stream:
                    continue
            if t.guard is None or t.guard(self, delivery):
                return t
        return None

    def _cancel_if_ineffectual(self, bus: Engine) -> bool:
        """Manual-control policy: drop a setting the actuator is not following."""
        if not self.spec.cancel_on_ineffectual or self.last_real is None:
            return False
        setting = self.current_setting()
        if isinstance(setting, DontCare) or satisfies(self.last_real, setting):
            return False
        self.state = self._dont_care_state()
        self._publish_setting(bus, DONT_CARE)
        return True

    # -- helpers ------------------------------------------------------------

    def _setting_of(self, state: str) -> SettingValue:
        setting = self.spec.state_setting[state]
        return setting(self) if callable(setting) else setting

    def _dont_care_state(self) -> str:
        if isinstance(self._setting_of(self.spec.initial), DontCare):
            return self.spec.initial
        for state in sorted(self.spec.states):
            if isinstance(self._setting_of(state), DontCare):
                return state
        raise MachineLoadError(f"{self.feature}: no dontCare state to cancel into")

    def _publish_setting(self, bus: Engine, setting: SettingValue) -> None:
        payload: dict[str, PayloadValue] = {
            "feature": self.feature,
            "priority": self.spec.priority,
        }
        payload.update(encode_setting(setting))
        bus.publish(self.setting_stream, payload)
        self._emitted = setting

    def _run_action(self, bus: Engine, action: Action,
                    delivery: EventRecord | Timeout) -> None:
        if isinstance(action, Emit):
            stream = action.stream
            if callable(stream):
                stream = stream(self, delivery)
            payload = action.payload
            if callable(payload):
                payload = payload(self, delivery)
            bus.publish(stream, dict(payload))
        elif isinstance(action, StartTimer):
            duration = action.duration_ms
            if callable(duration):
                duration = duration(self)
            bus.cancel_timer(self._timers.get(action.tag))
            self._timers[action.tag] = bus.set_timer(self, bus.now + duration, action.tag)
        elif isinstance(action, StopTimer):
            bus.cancel_timer(self._timers.pop(action.tag, None))
        elif isinstance(action, SetVar):
            value = action.value
            if callable(value):
                value = value(self, delivery)
            self.vars[action.name] = value
        elif isinstance(action, Call):
            action.fn(self, delivery)
        else:
            raise TypeError(f"unknown action {action!r}")


def _validate(spec: MachineSpec) -> None:
    if spec.initial not in spec.states:
        raise MachineLoadError(f"{spec.feature}: initial state {spec.initial!r} not declared")
    for state in spec.states:
        if state not in spec.state_setting:
            raise MachineLoadError(f"{spec.feature}: state {state!r} has no setting")
    for t in spec.transitions:
        for endpoint in (t.from_state, t.to_state):
            if endpoint not in spec.states:
                raise MachineLoadError(
                    f"{spec.feature}: transition {t.from_state!r}->{t.to_state!r} "
                    f"uses undeclared state {endpoint!r}"
                )
        if spec.streams is not None and isinstance(t.on, str) and t.on not in spec.streams:
            raise MachineLoadError(
                f"{spec.feature}: transition on undeclared stream {t.on!r}"
            )
    reachable = {spec.initial}
    grew = True
    while grew:
        grew = False
        for t in spec.transitions:
            if t.from_state in reachable and t.to_state not in reachable:
                reachable.add(t.to_state)
                grew = True
    unreachable = spec.states - reachable
    if unreachable:
        raise MachineLoadError(
            f"{spec.feature}: unreachable states {sorted(unreachable)}"
        )


def load_machine(spec: MachineSpec, *, config: object = None) -> Machine:
    """Validate a spec and return a runnable machine (not yet wired to a bus)."""
    return Machine(spec, config=config)
