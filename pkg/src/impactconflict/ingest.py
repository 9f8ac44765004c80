"""CASAS-style log ingestion, event reconstruction, merging and augmentation.

A CASAS log line is ``date time sensor status`` separated by whitespace;
annotated releases append activity labels, kept here as ``annotation``.
"""
from __future__ import annotations

import csv
import datetime as _dt
import fnmatch
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np

from .model import ServiceEvent, ServiceRequest, TimeInterval, format_ts, to_seconds

ON_STATES = {"ON", "OPEN"}
OFF_STATES = {"OFF", "CLOSE", "CLOSED"}
DEFAULT_HORIZON = 4 * 3600.0


@dataclass(frozen=True)
class RawLogLine:
    date: _dt.date
    time: _dt.time
    sensor: str
    status: str
    annotation: str = ""
    line_no: int = 0

    @property
    def timestamp(self) -> float:
        return to_seconds(_dt.datetime.combine(self.date, self.time))

    def format(self) -> str:
        parts = [self.date.isoformat(), self.time.isoformat(timespec="microseconds" if self.time.microsecond % 1000 else "milliseconds"), self.sensor, self.status]
        if self.annotation:
            parts.append(self.annotation)
        return " ".join(parts)


@dataclass(frozen=True)
class Reject:
    line_no: int
    text: str
    reason: str


@dataclass
class ParseResult:
    lines: List[RawLogLine] = field(default_factory=list)
    rejects: List[Reject] = field(default_factory=list)
    skipped_empty: int = 0


def parse_casas(stream: Iterable[str]) -> ParseResult:
    """Tokenize CASAS log lines; bad lines go to ``rejects`` with a reason."""
    result = ParseResult()
    for no, raw in enumerate(stream, start=1):
        text = raw.rstrip("\r\n")
        if not text.strip():
            result.skipped_empty += 1
            continue
        fields = text.split()
        if len(fields) < 4:
            result.rejects.append(Reject(no, text, "missing field"))
            continue
        date_s, time_s, sensor, status = fields[:4]
        try:
            date = _dt.date.fromisoformat(date_s)
            time = _dt.time.fromisoformat(time_s)
        except ValueError:
            result.rejects.append(Reject(no, text, f"unparseable date/time: {date_s} {time_s}"))
            continue
        result.lines.append(RawLogLine(date, time, sensor, status, " ".join(fields[4:]), no))
    return result


@dataclass(frozen=True)
class SensorBinding:
    service: str
    location: str
    user: str = "R1"


def binding_for(sensor_map: Mapping[str, SensorBinding], sensor: str) -> Optional[SensorBinding]:
    """Exact key first, then the first glob pattern (``LL*``) that matches."""
    if sensor in sensor_map:
        return sensor_map[sensor]
    for pattern, binding in sensor_map.items():
        if fnmatch.fnmatchcase(sensor, pattern):
            return binding
    return None


def _as_float(status: str) -> Optional[float]:
    try:
        v = float(status)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def reconstruct_events(
    lines: Sequence[RawLogLine],
    sensor_map: Mapping[str, SensorBinding],
    value_map: Optional[Mapping[str, Mapping[str, str]]] = None,
    horizon: float = DEFAULT_HORIZON,
) -> Tuple[List[ServiceEvent], List[Reject]]:
    """Pair each ON with the next OFF of the same sensor.

    Keys of ``sensor_map`` may be glob patterns.
    ``value_map[actuator] = {attribute: reading_sensor}`` attaches the latest
    numeric reading of ``reading_sensor`` at the event start (a light level, a
    thermostat setpoint). An ON left open for longer than ``horizon`` closes
    at ``start + horizon``.
    """
    value_map = value_map or {}
    latest: Dict[str, float] = {}
    open_at: Dict[str, Tuple[float, dict]] = {}
    counters: Dict[str, int] = defaultdict(int)
    events: List[ServiceEvent] = []
    rejects: List[Reject] = []

    def close(sensor: str, end: float) -> None:
        start, attrs = open_at.pop(sensor)
        b = binding_for(sensor_map, sensor)
        counters[sensor] += 1
        events.append(
            ServiceEvent(
                f"{sensor}-{counters[sensor]}", b.service, TimeInterval(start, end), b.location, b.user, attrs
            )
        )

    for line in sorted(lines, key=lambda ln: (ln.timestamp, ln.line_no)):
        t = line.timestamp
        reading = _as_float(line.status)
        if reading is not None:
            latest[line.sensor] = reading
            continue
        if binding_for(sensor_map, line.sensor) is None:
            continue
        if line.sensor in open_at and t - open_at[line.sensor][0] > horizon:
            close(line.sensor, open_at[line.sensor][0] + horizon)
        status = line.status.upper()
        if status in ON_STATES:
            if line.sensor in open_at:
                rejects.append(Reject(line.line_no, line.format(), "duplicate ON"))
                continue
            attrs = {
                attr: latest[src]
                for attr, src in value_map.get(line.sensor, {}).items()
                if src in latest
            }
            open_at[line.sensor] = (t, attrs)
        elif status in OFF_STATES:
            if line.sensor not in open_at:
                rejects.append(Reject(line.line_no, line.format(), "OFF without prior ON"))
                continue
            close(line.sensor, t)
        else:
            rejects.append(Reject(line.line_no, line.format(), f"unknown status {line.status!r}"))
    for sensor in sorted(open_at):
        close(sensor, open_at[sensor][0] + horizon)
    events.sort(key=lambda e: (e.interval.start, e.event_id))
    return events, rejects


def _day(t: float) -> int:
    return int(t // 86400)


def merge_residents(datasets: Sequence[Tuple[str, Sequence[ServiceEvent]]]) -> List[ServiceEvent]:
    """Union of per-resident logs on their common date span, users relabelled."""
    labels = [lbl for lbl, _ in datasets]
    if len(set(labels)) != len(labels):
        raise ValueError("resident labels must be distinct")
    spans = [
        (min(_day(e.interval.start) for e in evs), max(_day(e.interval.start) for e in evs))
        for _, evs in datasets
        if evs
    ]
    if not spans:
        return []
    first = max(s[0] for s in spans)
    last = min(s[1] for s in spans)
    merged = []
    for label, evs in datasets:
        for e in evs:
            if first <= _day(e.interval.start) <= last:
                merged.append(
                    ServiceEvent(
                        f"{label}:{e.event_id}", e.service_id, e.interval, e.location, label,
                        e.qualities, e.functions,
                    )
                )
    merged.sort(key=lambda e: (e.interval.start, e.event_id))
    return merged


@dataclass(frozen=True)
class AugmentationSpec:
    seed: int = 0
    window_blind_event_rate: float = 1.0
    sound_range: Tuple[float, float] = (40.0, 70.0)
    outdoor_lux_range: Tuple[float, float] = (0.0, 100.0)
    outdoor_temperature_range: Tuple[float, float] = (15.0, 35.0)
    duration_range: Tuple[float, float] = (600.0, 7200.0)
    tv_service: str = "tv"

    def __post_init__(self):
        if self.window_blind_event_rate < 0:
            raise ValueError("window_blind_event_rate must be >= 0")
        for name in ("sound_range", "outdoor_lux_range", "outdoor_temperature_range", "duration_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must satisfy lo <= hi")


def augment(events: Sequence[ServiceEvent], spec: AugmentationSpec) -> List[ServiceEvent]:
    """Insert seeded window/blind events and fill missing sound levels.

    TV events without a ``sound`` attribute get a uniform volume from
    ``sound_range``; inserted blind events carry a uniform outdoor
    illumination and window events a uniform outdoor temperature.
    """
    rng = np.random.default_rng(spec.seed)
    out = []
    for e in events:
        if e.service_id.casefold().startswith(spec.tv_service.casefold()) and e.quality("sound") is None:
            attrs = {**e.attributes, "sound": float(rng.uniform(*spec.sound_range))}
            e = ServiceEvent(e.event_id, e.service_id, e.interval, e.location, e.user, attrs, e.functions)
        out.append(e)
    if spec.window_blind_event_rate > 0 and events:
        users = sorted({e.user for e in events})
        locations = sorted({e.location for e in events})
        first = _day(min(e.interval.start for e in events))
        last = _day(max(e.interval.start for e in events))
        n = 0
        for day in range(first, last + 1):
            for _ in range(int(rng.poisson(spec.window_blind_event_rate))):
                service = "window" if rng.random() < 0.5 else "blind"
                start = round(day * 86400.0 + float(rng.uniform(0, 86400.0)), 3)
                end = round(start + float(rng.uniform(*spec.duration_range)), 3)
                if service == "window":
                    attrs = {"outdoor_temperature": float(rng.uniform(*spec.outdoor_temperature_range))}
                else:
                    attrs = {"outdoor_illumination": float(rng.uniform(*spec.outdoor_lux_range))}
                n += 1
                out.append(
                    ServiceEvent(
                        f"aug-{n}", service, TimeInterval(start, end),
                        locations[int(rng.integers(len(locations)))],
                        users[int(rng.integers(len(users)))],
                        attrs,
                    )
                )
    out.sort(key=lambda e: (e.interval.start, e.event_id))
    return out


EVENT_CSV_HEADER = ("event_id", "service", "attribute", "value", "start", "end", "location", "user")
REJECT_CSV_HEADER = ("line_no", "reason", "text")


def write_events_csv(events: Iterable, fh: TextIO, header: Optional[str] = None) -> int:
    """One row per (event, attribute); an attribute-less event gets one blank row."""
    if header:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EVENT_CSV_HEADER)
    n = 0
    for e in events:
        eid = getattr(e, "event_id", None) or getattr(e, "request_id")
        attrs = list(e.qualities) or [None]
        for q in attrs:
            w.writerow([
                eid, e.service_id,
                "" if q is None else q.attribute_name,
                "" if q is None else repr(q.value),
                format_ts(e.interval.start), format_ts(e.interval.end),
                e.location, e.user,
            ])
        n += 1
    return n


def _read_rows(fh: TextIO):
    reader = csv.DictReader(line for line in fh if not line.startswith("#"))
    missing = set(EVENT_CSV_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"event CSV is missing columns: {sorted(missing)}")
    grouped: Dict[str, dict] = {}
    for row in reader:
        g = grouped.setdefault(row["event_id"], {"row": row, "attrs": {}})
        if row["attribute"]:
            g["attrs"][row["attribute"]] = float(row["value"])
    return grouped


def read_events_csv(fh: TextIO) -> List[ServiceEvent]:
    return [
        ServiceEvent(
            eid, g["row"]["service"],
            TimeInterval.of(g["row"]["start"], g["row"]["end"]),
            g["row"]["location"], g["row"]["user"], g["attrs"],
        )
        for eid, g in _read_rows(fh).items()
    ]


def read_requests_csv(fh: TextIO) -> List[ServiceRequest]:
    return [
        ServiceRequest(
            eid, g["row"]["service"],
            TimeInterval.of(g["row"]["start"], g["row"]["end"]),
            g["row"]["location"], g["row"]["user"], g["attrs"],
        )
        for eid, g in _read_rows(fh).items()
    ]


def write_rejects_csv(rejects: Iterable[Reject], fh: TextIO) -> int:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REJECT_CSV_HEADER)
    n = 0
    for r in rejects:
        w.writerow([r.line_no, r.reason, r.text])
        n += 1
    return n
