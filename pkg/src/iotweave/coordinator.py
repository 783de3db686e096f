"""Per-actuator composition engine.

Each actuator gets one Coordinator.  It keeps the current settings of all
(feature, priority) pairs in a priority/timestamp-ordered list, resolves
them to a single real setting, and decides whether the actuator must be
told anything new.  Input records are processed in three steps: insert,
resolve, decide.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    DONT_CARE,
    ActuatorSpec,
    Direction,
    Discrete,
    DontCare,
    Prefer,
    Range,
    SettingRecord,
    SettingValue,
    Timestamp,
    order_key,
)


class SettingKindError(ValueError):
    """Raised when a record carries a setting the actuator cannot take."""


@dataclass(frozen=True)
class Annotation:
    """Optional per-record extensions understood by the coordinator."""

    expires_at: Timestamp | None = None
    immediate: bool = False


NO_ANNOTATION = Annotation()


@dataclass(frozen=True)
class ListedRecord:
    record: SettingRecord
    seq: int
    annotation: Annotation = NO_ANNOTATION

    @property
    def key(self) -> tuple[str, int]:
        return (self.record.feature, self.record.priority)

    def sort_key(self) -> tuple[int, int, int]:
        return order_key(self.record.priority, self.record.time, self.seq)


@dataclass(frozen=True)
class Resolution:
    """Outcome of the choose step: the composed setting and who backs it."""

    new_set: SettingValue
    in_force: frozenset[tuple[str, int]]
    prefer: Direction | None = None


@dataclass(frozen=True)
class ExplainEntry:
    feature: str
    priority: int
    setting: SettingValue
    time: Timestamp
    in_force: bool
    blocked_by: tuple[str, int] | None
    expires_at: Timestamp | None
    immediate: bool


@dataclass(frozen=True)
class Explanation:
    actuator: str
    held_value: str | int | None
    entries: tuple[ExplainEntry, ...]


@dataclass(frozen=True)
class TimerAsk:
    """Expiration timer the caller should arm on the coordinator's behalf."""

    feature: str
    priority: int
    stamped_time: Timestamp
    fire_at: Timestamp


@dataclass
class ProcessOutcome:
    command: str | int | None = None
    resolution: Resolution | None = None
    timer: TimerAsk | None = None


class Coordinator:
    """Sequential composition state machine for one actuator.

    Safe to drive directly (tests, checker) or through an event-bus adapter;
    it performs no I/O itself.
    """

    def __init__(self, actuator: ActuatorSpec, initial_value: str | int | None = None):
        if initial_value is not None and not actuator.legal_setting(_as_setting(actuator, initial_value)):
            raise SettingKindError(f"{actuator.name}: illegal initial value {initial_value!r}")
        self.actuator = actuator
        self.records: list[ListedRecord] = []
        self.old_value: str | int | None = initial_value
        self._auto_seq = 0

    def clone(self) -> "Coordinator":
        twin = Coordinator(self.actuator)
        twin.records = list(self.records)
        twin.old_value = self.old_value
        twin._auto_seq = self._auto_seq
        return twin

    # -- step 1 ------------------------------------------------------------

    def insert(self, record: SettingRecord, annotation: Annotation = NO_ANNOTATION,
               seq: int | None = None) -> None:
        """Insert, replace or delete the record for (feature, priority).

        A dontCare setting deletes; anything else lands at its ordered
        position.  The state is untouched if the setting is illegal for
        this actuator.
        """
        if not self.actuator.legal_setting(record.setting):
            raise SettingKindError(
                f"{self.actuator.name}: setting {record.setting!r} not legal for this actuator"
            )
        if seq is None:
            self._auto_seq += 1
            seq = self._auto_seq
        else:
            self._auto_seq = max(self._auto_seq, seq)
        key = (record.feature, record.priority)
        self.records = [r for r in self.records if r.key != key]
        if isinstance(record.setting, DontCare):
            return
        entry = ListedRecord(record, seq, annotation)
        pos = 0
        while pos < len(self.records) and self.records[pos].sort_key() < entry.sort_key():
            pos += 1
        self.records.insert(pos, entry)

    # -- step 2 ------------------------------------------------------------

    def resolve(self) -> Resolution:
        """Choose the composed setting from the current record list.

        Enumerated actuators take the first record's setting; every record
        agreeing with it is in force.  Numeric actuators accumulate range
        constraints top-down, admitting each one whose intersection with the
        running intersection is non-empty; preferences are always admitted
        and the highest-priority one picks an endpoint.  Preferences alone,
        with no admitted range, constrain nothing.
        """
        if not self.records:
            return Resolution(DONT_CARE, frozenset())
        if not self.actuator.is_numeric:
            chosen = self.records[0].record.setting
            in_force = frozenset(
                r.key for r in self.records if r.record.setting == chosen
            )
            return Resolution(chosen, in_force)

        running: Range | None = None
        prefer: Direction | None = None
        admitted: set[tuple[str, int]] = set()
        for entry in self.records:
            setting = entry.record.setting
            if isinstance(setting, Prefer):
                admitted.add(entry.key)
                if prefer is None:
                    prefer = setting.direction
                continue
            assert isinstance(setting, Range)
            if running is None:
                running = setting
                admitted.add(entry.key)
            else:
                lo = max(running.lo, setting.lo)
                hi = min(running.hi, setting.hi)
                if lo <= hi:
                    running = Range(lo, hi)
                    admitted.add(entry.key)
        if running is None:
            # only preferences listed: nothing to satisfy, nothing to change
            return Resolution(DONT_CARE, frozenset(admitted), prefer)
        if prefer is not None:
            point = running.lo if prefer is Direction.LOWEST else running.hi
            running = Range(point, point)
        return Resolution(running, frozenset(admitted), prefer)

    # -- step 3 ------------------------------------------------------------

    def decide(self, resolution: Resolution) -> str | int | None:
        """Emit a command only when the actuator must actually move."""
        new_set = resolution.new_set
        if isinstance(new_set, DontCare):
            return None
        if isinstance(new_set, Discrete):
            if self.old_value == new_set.symbol:
                return None
            self.old_value = new_set.symbol
            return new_set.symbol
        assert isinstance(new_set, Range)
        old = self.old_value
        if isinstance(old, int) and new_set.lo <= old <= new_set.hi:
            return None
        value = self._pick_from(new_set, old)
        self.old_value = value
        return value

    @staticmethod
    def _pick_from(subrange: Range, old: str | int | None) -> int:
        # nearest endpoint disturbs the actuator least; lo on ties or no history
        if not isinstance(old, int):
            return subrange.lo
        if old < subrange.lo:
            return subrange.lo
        if old > subrange.hi:
            return subrange.hi
        return subrange.lo if old - subrange.lo <= subrange.hi - old else subrange.hi

    # -- composed steps ----------------------------------------------------

    def process(self, record: SettingRecord, annotation: Annotation = NO_ANNOTATION,
                seq: int | None = None) -> ProcessOutcome:
        """Run the three steps for one input record."""
        self.insert(record, annotation, seq)
        resolution = self.resolve()
        command = self.decide(resolution)
        timer = None
        if annotation.expires_at is not None and not isinstance(record.setting, DontCare):
            timer = TimerAsk(record.feature, record.priority, record.time, annotation.expires_at)
        return ProcessOutcome(command, resolution, timer)

    def expire(self, feature: str, priority: int, stamped_time: Timestamp,
               now: Timestamp) -> ProcessOutcome | None:
        """Cancel a listed setting if the expiring record is still current."""
        key = (feature, priority)
        for entry in self.records:
            if entry.key == key and entry.record.time == stamped_time:
                cancel = SettingRecord(now, feature, priority, DONT_CARE)
                return self.process(cancel)
        return None

    def cancel_ineffectual_immediates(self) -> list[ProcessOutcome]:
        """Drop immediate-tagged records that are not in force; repeat to fixpoint.

        Run after every real actuator value emission.  Terminates because
        each pass deletes at least one record.
        """
        outcomes: list[ProcessOutcome] = []
        while True:
            resolution = self.resolve()
            doomed = [
                r for r in self.records
                if r.annotation.immediate and r.key not in resolution.in_force
            ]
            if not doomed:
                break
            for entry in doomed:
                self.records.remove(entry)
            resolution = self.resolve()
            command = self.decide(resolution)
            outcomes.append(ProcessOutcome(command, resolution, None))
        return outcomes

    # -- reporting ----------------------------------------------------------

    def explain(self) -> Explanation:
        resolution = self.resolve()
        entries = []
        blocker: tuple[str, int] | None = None
        for entry in self.records:
            in_force = entry.key in resolution.in_force
            if in_force and blocker is None:
                blocker = entry.key
            entries.append(ExplainEntry(
                feature=entry.record.feature,
                priority=entry.record.priority,
                setting=entry.record.setting,
                time=entry.record.time,
                in_force=in_force,
                blocked_by=None if in_force else blocker,
                expires_at=entry.annotation.expires_at,
                immediate=entry.annotation.immediate,
            ))
        return Explanation(self.actuator.name, self.old_value, tuple(entries))


def _as_setting(actuator: ActuatorSpec, value: str | int) -> SettingValue:
    """Interpret a raw actuator value as the setting it would satisfy."""
    if isinstance(value, str):
        return Discrete(value)
    return Range(value, value)
