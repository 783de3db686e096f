"""Shared vocabulary: settings, records, actuators, and their ordering rules.

Everything here is an immutable value object.  Timestamps are integer
milliseconds of simulated time; numeric actuator settings are integers, so
all comparisons are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Union

Timestamp = int
PayloadValue = Union[str, int]


class Direction(Enum):
    LOWEST = "lowest"
    HIGHEST = "highest"


@dataclass(frozen=True)
class DontCare:
    """Pseudo-setting: the feature imposes no constraint right now."""

    def __repr__(self) -> str:
        return "DontCare"


@dataclass(frozen=True)
class Discrete:
    """A single symbol from an enumerated actuator's value set."""

    symbol: str

    def __repr__(self) -> str:
        return f"Discrete({self.symbol})"


@dataclass(frozen=True)
class Range:
    """Inclusive integer subrange constraint for a numeric actuator."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"empty range: lo={self.lo} > hi={self.hi}")

    def __repr__(self) -> str:
        return f"Range({self.lo},{self.hi})"


@dataclass(frozen=True)
class Prefer:
    """Preference pseudo-constraint: pull toward one end of the legal range."""

    direction: Direction

    def __repr__(self) -> str:
        return f"Prefer({self.direction.value})"


SettingValue = Union[DontCare, Discrete, Range, Prefer]

DONT_CARE = DontCare()
PREFER_LOWEST = Prefer(Direction.LOWEST)
PREFER_HIGHEST = Prefer(Direction.HIGHEST)


@dataclass(frozen=True)
class ActuatorSpec:
    """Descriptor of one controllable device.

    Exactly one of ``symbols`` (enumerated) or ``lo``/``hi`` (numeric) is set.
    """

    name: str
    symbols: tuple[str, ...] | None = None
    lo: int | None = None
    hi: int | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("actuator needs a name")
        if self.symbols is not None:
            if self.lo is not None or self.hi is not None:
                raise ValueError(f"{self.name}: enumerated and numeric are exclusive")
            if not self.symbols:
                raise ValueError(f"{self.name}: empty symbol set")
            if len(set(self.symbols)) != len(self.symbols):
                raise ValueError(f"{self.name}: duplicate symbols")
        else:
            if self.lo is None or self.hi is None:
                raise ValueError(f"{self.name}: numeric actuator needs lo and hi")
            if self.lo > self.hi:
                raise ValueError(f"{self.name}: lo > hi")

    @classmethod
    def enumerated(cls, name: str, *symbols: str) -> "ActuatorSpec":
        return cls(name, symbols=tuple(symbols))

    @classmethod
    def numeric(cls, name: str, lo: int, hi: int) -> "ActuatorSpec":
        return cls(name, lo=lo, hi=hi)

    @property
    def is_numeric(self) -> bool:
        return self.symbols is None

    def legal_setting(self, setting: SettingValue) -> bool:
        """Is this setting expressible against this actuator?"""
        if isinstance(setting, DontCare):
            return True
        if self.is_numeric:
            if isinstance(setting, Prefer):
                return True
            if isinstance(setting, Range):
                assert self.lo is not None and self.hi is not None
                return setting.lo >= self.lo and setting.hi <= self.hi
            return False
        return isinstance(setting, Discrete) and setting.symbol in (self.symbols or ())


@dataclass(frozen=True)
class SettingRecord:
    """One feature's opinion, as sent to a coordinator.

    These four fields are the only ones that participate in composition.
    """

    time: Timestamp
    feature: str
    priority: int
    setting: SettingValue


@dataclass(frozen=True)
class EventRecord:
    """A timestamped record on a named stream; the unit of all communication."""

    time: Timestamp
    seq: int
    stream: str
    payload: Mapping[str, PayloadValue] = field(default_factory=dict)


def order_key(priority: int, time: Timestamp, seq: int) -> tuple[int, int, int]:
    """Sort key for coordinator record lists.

    Descending priority; within one priority, descending timestamp; ties
    broken by descending arrival sequence so the most recent arrival wins
    deterministically.
    """
    return (-priority, -time, -seq)


def record_precedes(a: tuple[int, Timestamp, int], b: tuple[int, Timestamp, int]) -> bool:
    """True if a (priority, time, seq) triple sorts before another."""
    return order_key(*a) < order_key(*b)


def satisfies(value: PayloadValue, setting: SettingValue) -> bool:
    """Is a real actuator value consistent with a virtual setting?

    DontCare and Prefer are satisfied by anything; preferences never make a
    setting ineffectual.
    """
    if isinstance(setting, (DontCare, Prefer)):
        return True
    if isinstance(setting, Discrete):
        if not isinstance(value, str):
            raise TypeError(f"discrete setting needs a symbol, got {value!r}")
        return value == setting.symbol
    if isinstance(setting, Range):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"range setting needs an integer, got {value!r}")
        return setting.lo <= value <= setting.hi
    raise TypeError(f"not a setting: {setting!r}")


def encode_setting(setting: SettingValue) -> dict[str, PayloadValue]:
    """Flatten a setting into stream payload keys."""
    if isinstance(setting, DontCare):
        return {"kind": "dontCare"}
    if isinstance(setting, Discrete):
        return {"kind": "discrete", "value": setting.symbol}
    if isinstance(setting, Range):
        return {"kind": "range", "lo": setting.lo, "hi": setting.hi}
    if isinstance(setting, Prefer):
        return {"kind": "prefer", "value": setting.direction.value}
    raise TypeError(f"not a setting: {setting!r}")


def decode_setting(payload: Mapping[str, PayloadValue]) -> SettingValue:
    kind = payload.get("kind")
    if kind == "dontCare":
        return DONT_CARE
    if kind == "discrete":
        return Discrete(str(payload["value"]))
    if kind == "range":
        return Range(int(payload["lo"]), int(payload["hi"]))
    if kind == "prefer":
        return Prefer(Direction(str(payload["value"])))
    raise ValueError(f"unknown setting kind: {kind!r}")
