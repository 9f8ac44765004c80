"""Seeded synthetic multi-resident corpus with planted preferences and conflicts.

Each resident has a planted preference band per property. Thirty days of
single-resident history are drawn from those bands; on top of that, each day
holds a number of *episodes*: one resident runs a setpoint service (AC or
light) while another runs a disturbing service (window or blind) in the same
room. The true ambient trace of an episode is simulated with perturbed
dynamics, and the episode is a conflict when that trace leaves the affected
resident's planted band.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import (
    COUPLING,
    INSTANTANEOUS,
    PROGRESSIVE,
    SETPOINT,
    AffinityRule,
    RoomContext,
    predict_signal,
)
from .model import ServiceEvent, ServiceRequest, TimeInterval, overlap_segment, to_seconds
from .signal import Signal, StlRequirement, violation_fraction

HOUR = 3600.0
DAY = 86400.0


@dataclass(frozen=True)
class ResidentProfile:
    name: str
    bands: Dict[str, Tuple[float, float]]


DEFAULT_RESIDENTS = (
    ResidentProfile("R1", {"temperature": (19.5, 21.5), "illumination": (5.0, 15.0)}),
    ResidentProfile("R2", {"temperature": (21.0, 25.0), "illumination": (20.0, 40.0)}),
)


def corpus_rules() -> List[AffinityRule]:
    """Dynamics used by the detector on the synthetic corpus."""
    return [
        AffinityRule("ac*", "temperature", PROGRESSIVE, SETPOINT, ac_tons=0.1),
        AffinityRule("window*", "temperature", PROGRESSIVE, COUPLING, rate=20.0, coupling=0.5),
        AffinityRule("light*", "illumination", INSTANTANEOUS, SETPOINT),
        AffinityRule("blind*", "illumination", INSTANTANEOUS, COUPLING, coupling=1.0),
        AffinityRule("thermostat*", "temperature", PROGRESSIVE, SETPOINT, ac_tons=0.1),
        AffinityRule("lamp*", "illumination", INSTANTANEOUS, SETPOINT),
    ]


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    days: int = 30
    start_date: str = "2011-06-15"
    residents: Tuple[ResidentProfile, ...] = DEFAULT_RESIDENTS
    location: str = "living"
    room_volume: float = 60.0
    history_per_day: int = 4
    episodes_per_day: int = 6
    outdoor_temperature: Tuple[float, float] = (14.0, 38.0)
    indoor_temperature: Tuple[float, float] = (22.0, 28.0)
    daylight: Tuple[float, float] = (0.0, 40.0)
    daylight_hours: Tuple[int, int] = (7, 19)
    coupling_jitter: float = 0.15  # true window/blind coupling = nominal +/- jitter
    rate_jitter: float = 0.2
    min_violation: float = 600.0  # seconds outside the band for a conflict observation
    setpoint_margin: float = 0.25  # current setpoints come from the middle half of a band
    arrival_delay: Tuple[float, float] = (2100.0, 3600.0)
    shared_share: float = 0.5  # episodes where both residents set the same property
    agree_share: float = 0.8  # of those, the share where they ask for the same value


@dataclass(frozen=True)
class Episode:
    """One evaluation sample: an affected request, a disturbing request and their room."""

    episode_id: str
    affected: ServiceRequest
    other: ServiceRequest
    attribute: str
    context: RoomContext
    true_signal: Signal
    planted_band: Tuple[float, float]
    conflict: bool

    @property
    def requests(self) -> List[ServiceRequest]:
        return [self.affected, self.other]

    @property
    def outdoor(self) -> float:
        return self.context.outdoor.get(self.attribute, 0.0)

    @property
    def hour(self) -> float:
        return (self.affected.interval.start % DAY) / HOUR


@dataclass
class Corpus:
    spec: SyntheticSpec
    history: List[ServiceEvent]
    episodes: List[Episode]
    rules: List[AffinityRule] = field(default_factory=corpus_rules)

    @property
    def users(self) -> List[str]:
        return [r.name for r in self.spec.residents]


def _uniform(rng, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi)) if hi > lo else lo


def _core(band: Tuple[float, float], margin: float) -> Tuple[float, float]:
    """The middle of a band, trimmed by ``margin`` of its width on each side."""
    lo, hi = band
    cut = (hi - lo) * margin
    return lo + cut, hi - cut


def _quantize(v: float, step: float) -> float:
    return round(round(v / step) * step, 6)


_SERVICES = {"temperature": ("ac", "window"), "illumination": ("light", "blind")}
_STEPS = {"temperature": 0.5, "illumination": 1.0}


def _history(spec: SyntheticSpec, rng, day0: float) -> List[ServiceEvent]:
    events = []
    n = 0
    for d in range(spec.days):
        for res in spec.residents:
            for prop in ("temperature", "illumination"):
                for _ in range(spec.history_per_day):
                    start = day0 + d * DAY + _quantize(float(rng.uniform(7 * HOUR, 22 * HOUR)), 60.0)
                    end = start + _quantize(float(rng.uniform(0.5 * HOUR, 3 * HOUR)), 60.0)
                    value = _quantize(_uniform(rng, *res.bands[prop]), _STEPS[prop])
                    n += 1
                    events.append(
                        ServiceEvent(
                            f"h{n}", _SERVICES[prop][0], TimeInterval(start, end),
                            spec.location, res.name, {prop: value},
                        )
                    )
    events.sort(key=lambda e: (e.interval.start, e.event_id))
    return events


def _true_rules(spec: SyntheticSpec, rng) -> List[AffinityRule]:
    out = []
    for r in corpus_rules():
        if r.effect == COUPLING:
            c = r.coupling + float(rng.uniform(-spec.coupling_jitter, spec.coupling_jitter))
            r = replace(r, coupling=min(max(c, 0.0), 1.0))
        if r.rate is not None:
            r = replace(r, rate=r.rate * (1 + float(rng.uniform(-spec.rate_jitter, spec.rate_jitter))))
        if r.ac_tons is not None:
            r = replace(r, ac_tons=r.ac_tons * (1 + float(rng.uniform(-spec.rate_jitter, spec.rate_jitter))))
        out.append(r)
    return out


def outside_band_duration(sig: Signal, band: Tuple[float, float], window: TimeInterval) -> float:
    """Seconds within ``window`` during which ``sig`` is strictly outside ``band``."""
    lo, hi = band
    req = StlRequirement(sig.property, (lo + hi) / 2.0, window, (hi - lo) / 2.0)
    return violation_fraction(sig, req) * window.duration


_SHARED = {"temperature": "thermostat", "illumination": "lamp"}


def _episode(spec: SyntheticSpec, rng, idx: int, day_start: float) -> Episode:
    prop = "temperature" if rng.random() < 0.5 else "illumination"
    order = rng.permutation(len(spec.residents))
    mine, theirs = spec.residents[order[0]], spec.residents[order[1]]
    setter, disturber = _SERVICES[prop]
    shared = rng.random() < spec.shared_share

    start = day_start + _quantize(float(rng.uniform(8 * HOUR, 22 * HOUR)), 60.0)
    a_end = start + _quantize(float(rng.uniform(1.5 * HOUR, 3.0 * HOUR)), 60.0)
    # the disturbance arrives once the first service has settled the room
    b_start = start + _quantize(float(rng.uniform(*spec.arrival_delay)), 60.0)
    b_end = min(b_start + _quantize(float(rng.uniform(0.33 * HOUR, 1.5 * HOUR)), 60.0), a_end)
    if b_end - b_start < 600:
        b_end = b_start + 600
    setpoint = _quantize(_uniform(rng, *_core(mine.bands[prop], spec.setpoint_margin)), _STEPS[prop])

    hour = ((start - day_start) / HOUR) % 24
    outdoor_map = {}
    if prop == "temperature":
        outdoor_map["temperature"] = round(float(rng.uniform(*spec.outdoor_temperature)), 1)
        baseline = {"temperature": round(float(rng.uniform(*spec.indoor_temperature)), 1)}
    else:
        lo_h, hi_h = spec.daylight_hours
        daylight = round(float(rng.uniform(*spec.daylight)), 1) if lo_h <= hour < hi_h else 0.0
        outdoor_map["illumination"] = daylight
        baseline = {"illumination": 0.0}
    ctx = RoomContext(spec.location, spec.room_volume, baseline, outdoor_map)

    a = ServiceRequest(f"e{idx}a", setter, TimeInterval(start, a_end), spec.location, mine.name, {prop: setpoint})
    if shared:
        # a second resident sets the same property: often the same value, otherwise their own preference
        if rng.random() < spec.agree_share:
            theirs_value = setpoint
        else:
            theirs_value = _quantize(_uniform(rng, *_core(theirs.bands[prop], spec.setpoint_margin)), _STEPS[prop])
        b = ServiceRequest(
            f"e{idx}b", _SHARED[prop], TimeInterval(b_start, b_end), spec.location, theirs.name,
            {prop: theirs_value},
        )
    else:
        b = ServiceRequest(f"e{idx}b", disturber, TimeInterval(b_start, b_end), spec.location, theirs.name)
    segment = overlap_segment(a.interval, b.interval)
    truth = predict_signal(prop, [a, b], ctx, _true_rules(spec, rng), segment)
    band = mine.bands[prop]
    conflict = outside_band_duration(truth, band, segment) >= spec.min_violation
    return Episode(f"e{idx}", a, b, prop, ctx, truth, band, conflict)


def generate_corpus(spec: Optional[SyntheticSpec] = None) -> Corpus:
    """Deterministic in ``spec`` (including its seed)."""
    spec = spec or SyntheticSpec()
    if len(spec.residents) < 2:
        raise ValueError("a multi-resident corpus needs at least two residents")
    rng = np.random.default_rng(spec.seed)
    day0 = to_seconds(_dt.datetime.fromisoformat(spec.start_date))
    history = _history(spec, rng, day0)
    episodes = []
    idx = 0
    for d in range(spec.days):
        day_start = day0 + d * DAY
        for _ in range(spec.episodes_per_day):
            idx += 1
            episodes.append(_episode(spec, rng, idx, day_start))
    return Corpus(spec, history, episodes)
