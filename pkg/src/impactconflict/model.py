"""Domain types shared by every stage of the pipeline.

Timestamps are plain floats (seconds on a naive local clock, rounded to the
millisecond on construction from text or ``datetime``); all arithmetic is done
in seconds.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

TimeLike = Union[float, int, str, _dt.datetime]

_EPOCH = _dt.datetime(1970, 1, 1)


def to_seconds(value: TimeLike) -> float:
    """Convert an ISO-8601 string, naive datetime or number to float seconds."""
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        value = _dt.datetime.fromisoformat(value.strip().replace(" ", "T", 1))
    if value.tzinfo is not None:
        value = value.replace(tzinfo=None)
    return round((value - _EPOCH).total_seconds(), 3)


def to_datetime(seconds: float) -> _dt.datetime:
    return _EPOCH + _dt.timedelta(seconds=round(seconds, 3))


def format_ts(seconds: float) -> str:
    """ISO-8601 with millisecond precision, e.g. ``2011-06-15T08:30:00.000``."""
    return to_datetime(seconds).isoformat(timespec="milliseconds")


def normalize_location(location: str) -> str:
    return location.strip().casefold()


@dataclass(frozen=True)
class TimeInterval:
    start: float
    end: float

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"interval end {self.end} precedes start {self.start}")

    @classmethod
    def of(cls, start: TimeLike, end: TimeLike) -> "TimeInterval":
        return cls(to_seconds(start), to_seconds(end))

    @property
    def duration(self) -> float:
        return self.end - self.start

    def contains(self, other: "TimeInterval") -> bool:
        return self.start <= other.start and other.end <= self.end

    def intersects(self, other: "TimeInterval") -> bool:
        """Positive-measure intersection."""
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class OverlapSegment(TimeInterval):
    """A non-degenerate intersection of two intervals (start < end)."""

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("overlap segment must have positive length")


def overlap_segment(a: TimeInterval, b: TimeInterval) -> Optional[OverlapSegment]:
    """Intersection ``[max(starts), min(ends)]``; ``None`` unless it has positive length."""
    start = max(a.start, b.start)
    end = min(a.end, b.end)
    if start < end:
        return OverlapSegment(start, end)
    return None


@dataclass(frozen=True)
class QualityAttribute:
    attribute_name: str
    value: float


def _freeze_qualities(qualities) -> tuple:
    if isinstance(qualities, Mapping):
        qualities = [QualityAttribute(k, float(v)) for k, v in qualities.items()]
    return tuple(qualities)


@dataclass(frozen=True)
class Service:
    id: str
    name: str
    functions: frozenset = frozenset()
    qualities: tuple = ()

    def __post_init__(self):
        if not self.name:
            raise ValueError("service name must be non-empty")
        object.__setattr__(self, "functions", frozenset(self.functions))
        object.__setattr__(self, "qualities", _freeze_qualities(self.qualities))


class _Interaction:
    """Accessors shared by events and requests."""

    qualities: tuple

    def quality(self, name: str) -> Optional[float]:
        for q in self.qualities:
            if q.attribute_name == name:
                return q.value
        return None

    @property
    def attributes(self) -> dict:
        return {q.attribute_name: q.value for q in self.qualities}


@dataclass(frozen=True)
class ServiceEvent(_Interaction):
    """A historical service interaction."""

    event_id: str
    service_id: str
    interval: TimeInterval
    location: str
    user: str
    qualities: tuple = ()
    functions: frozenset = frozenset()

    def __post_init__(self):
        if not self.user or not self.location:
            raise ValueError(f"event {self.event_id}: user and location are required")
        object.__setattr__(self, "qualities", _freeze_qualities(self.qualities))
        object.__setattr__(self, "functions", frozenset(self.functions))


@dataclass(frozen=True)
class ServiceRequest(_Interaction):
    """A resident's current service requirement."""

    request_id: str
    service_id: str
    interval: TimeInterval
    location: str
    user: str
    qualities: tuple = ()
    functions: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "qualities", _freeze_qualities(self.qualities))
        object.__setattr__(self, "functions", frozenset(self.functions))


@dataclass(frozen=True)
class Impact:
    service_id: str
    attribute_name: str
    time: OverlapSegment
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("impact value must be non-negative")


@dataclass(frozen=True)
class ImpactConflict:
    service_id: str
    attribute_name: str
    interval: TimeInterval
    location: str
    user: str
    likelihood: float
    raw_cl: float
    impact_value: float = 0.0
    pref_prox: float = 0.0
    temp_prox: float = 0.0
    details: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not 0.0 <= self.likelihood <= 1.0:
            raise ValueError(f"likelihood {self.likelihood} outside [0, 1]")
        if self.raw_cl < 0:
            raise ValueError("raw conflict likelihood must be non-negative")

    def to_record(self) -> dict:
        return {
            "service": self.service_id,
            "attribute": self.attribute_name,
            "user": self.user,
            "location": self.location,
            "start": format_ts(self.interval.start),
            "end": format_ts(self.interval.end),
            "likelihood": self.likelihood,
            "raw_cl": self.raw_cl,
            "impact_value": self.impact_value,
            "pref_prox": self.pref_prox,
            "temp_prox": self.temp_prox,
        }
