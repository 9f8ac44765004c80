"""Impact conflict detection over a set of concurrent service requests."""
from __future__ import annotations

import itertools
import json
import statistics
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

from .dynamics import AffinityRule, RoomContext, affected_properties, controls_property, predict_signal
from .model import (
    Impact,
    ImpactConflict,
    OverlapSegment,
    ServiceEvent,
    ServiceRequest,
    TimeInterval,
    normalize_location,
    overlap_segment,
)
from .preference import DEFAULT_COVERAGE, DEFAULT_EPS, DEFAULT_MIN_PTS, PreferenceBand, estimate_preference
from .signal import MAGNITUDE, Signal, StlRequirement, deviation_integral, violation_intervals

DEFAULT_CAPS = {"temperature": 100.0, "illumination": 600.0, "sound": 200.0, "humidity": 300.0}
DEFAULT_TOLERANCE = {"temperature": 1.5, "illumination": 5.0, "sound": 5.0, "humidity": 5.0}


@dataclass(frozen=True)
class DetectionConfig:
    impact_normalization_cap: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CAPS))
    temporal_threshold: float = 0.0
    preferential_threshold: float = 1.0
    default_tolerance: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCE))
    use_preference: bool = True
    eps: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EPS))
    min_pts: int = DEFAULT_MIN_PTS
    coverage_p: float = DEFAULT_COVERAGE
    strict_overlap: bool = False
    deviation_mode: str = MAGNITUDE

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> List[str]:
        errors = []
        for prop, cap in self.impact_normalization_cap.items():
            if not cap > 0:
                errors.append(f"impact_normalization_cap.{prop}: must be > 0")
        for name in ("temporal_threshold", "preferential_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                errors.append(f"{name}: must lie in [0, 1]")
        for prop, tol in self.default_tolerance.items():
            if tol < 0:
                errors.append(f"default_tolerance.{prop}: must be >= 0")
        for prop, e in self.eps.items():
            if not e > 0:
                errors.append(f"eps.{prop}: must be > 0")
        if self.min_pts < 1:
            errors.append("min_pts: must be >= 1")
        if not 0.0 < self.coverage_p <= 1.0:
            errors.append("coverage_p: must lie in (0, 1]")
        return errors

    def cap_for(self, prop: str) -> float:
        return self.impact_normalization_cap.get(prop, DEFAULT_CAPS.get(prop, 100.0))

    def tolerance_for(self, prop: str) -> float:
        return self.default_tolerance.get(prop, DEFAULT_TOLERANCE.get(prop, 0.0))

    def with_thresholds(self, temporal: float, preferential: float) -> "DetectionConfig":
        return replace(self, temporal_threshold=temporal, preferential_threshold=preferential)


def impact_preconditions(a: ServiceRequest, b: ServiceRequest, rules: Sequence[AffinityRule]) -> bool:
    """Same room, overlapping in time, different users and services, a shared property."""
    return (
        normalize_location(a.location) == normalize_location(b.location)
        and overlap_segment(a.interval, b.interval) is not None
        and a.user != b.user
        and a.service_id != b.service_id
        and bool(affected_properties(a, rules) & affected_properties(b, rules))
    )


def preferential_proximity(pref: Tuple[float, float], env: Tuple[float, float]) -> float:
    """Median-based overlap of a preference range and a fluctuation range.

    1 means the ranges coincide, 0 that they are disjoint.
    """
    a_s, b_s = pref
    a_e, b_e = env
    if a_s > b_s or a_e > b_e:
        raise ValueError(f"malformed range: pref={pref}, env={env}")
    denom = max(b_s, b_e) - min(a_s, a_e)
    if denom == 0:
        return 1.0
    num = abs(statistics.median((a_s, a_e, b_e)) - statistics.median((b_s, a_e, b_e)))
    return num / denom


def temporal_proximity(intervals: Sequence[TimeInterval]) -> float:
    """Summed indicator integral over ``n * span`` of the intervals.

    The integral of the summed indicator functions is the sum of the interval
    lengths, so no explicit sweep is needed.
    """
    n = len(intervals)
    if n < 2:
        raise ValueError("temporal proximity needs at least two intervals")
    t_first = min(iv.start for iv in intervals)
    t_last = max(iv.end for iv in intervals)
    span = t_last - t_first
    if span == 0:
        return 1.0
    return sum(iv.duration for iv in intervals) / (span * n)


def conflict_likelihood(
    impact_value: float,
    pref_prox: float,
    temp_prox: float,
    cfg: DetectionConfig,
    prop: str = "temperature",
) -> Tuple[float, float]:
    """``(raw_cl, likelihood)``; raw_cl = I_norm * ((1 - pref_prox) + temp_prox), likelihood = raw_cl / 2."""
    i_norm = min(impact_value / cfg.cap_for(prop), 1.0)
    raw = i_norm * ((1.0 - pref_prox) + temp_prox)
    return raw, min(max(raw / 2.0, 0.0), 1.0)


def assess_impact(
    a: ServiceRequest,
    b: ServiceRequest,
    ctx: RoomContext,
    rules: Sequence[AffinityRule],
    req: StlRequirement,
    mode: str = MAGNITUDE,
) -> Impact:
    """Impact on ``a``'s service of running ``a`` and ``b`` together, judged against ``req``."""
    segment = overlap_segment(a.interval, b.interval)
    if segment is None:
        raise ValueError(f"requests {a.request_id} and {b.request_id} do not overlap")
    predicted = predict_signal(req.property, [a, b], ctx, rules, segment)
    return Impact(a.service_id, req.property, segment, deviation_integral(predicted, req, mode))


@dataclass(frozen=True)
class Assessment:
    """Everything computed for one affected user of one request pair."""

    affected: ServiceRequest
    other: ServiceRequest
    attribute: str
    segment: OverlapSegment
    band: Tuple[float, float]
    mined: Optional[PreferenceBand]
    requirement: StlRequirement
    signal: Signal
    impact: float
    violation: Optional[TimeInterval]
    pref_prox: float
    temp_prox: float
    raw_cl: float
    likelihood: float
    pruned: bool

    @property
    def is_conflict(self) -> bool:
        return self.impact > 0 and not self.pruned

    def to_conflict(self) -> ImpactConflict:
        return ImpactConflict(
            service_id=self.affected.service_id,
            attribute_name=self.attribute,
            interval=self.violation or self.segment,
            location=self.affected.location,
            user=self.affected.user,
            likelihood=self.likelihood,
            raw_cl=self.raw_cl,
            impact_value=self.impact,
            pref_prox=self.pref_prox,
            temp_prox=self.temp_prox,
            details={"other_user": self.other.user, "other_service": self.other.service_id},
        )


ContextLike = Union[RoomContext, Mapping[str, RoomContext]]


def context_for(ctx: ContextLike, location: str) -> RoomContext:
    if isinstance(ctx, RoomContext):
        return ctx
    key = normalize_location(location)
    for loc, room in ctx.items():
        if normalize_location(loc) == key:
            return room
    return RoomContext(location=location)


def assess_pair(
    a: ServiceRequest,
    b: ServiceRequest,
    history: Sequence[ServiceEvent],
    ctx: ContextLike,
    rules: Sequence[AffinityRule],
    cfg: DetectionConfig,
) -> List[Assessment]:
    """Assess both directions of a pair; empty when the preconditions fail."""
    if not impact_preconditions(a, b, rules):
        return []
    segment = overlap_segment(a.interval, b.interval)
    room = context_for(ctx, a.location)
    shared = sorted(affected_properties(a, rules) & affected_properties(b, rules))
    out = []
    for prop in shared:
        for mine, other in ((a, b), (b, a)):
            if not controls_property(mine, prop, rules):
                continue
            out.append(_assess(mine, other, prop, segment, history, room, rules, cfg))
    return out


def _assess(mine, other, prop, segment, history, room, rules, cfg) -> Assessment:
    setpoint = mine.quality(prop)
    mined = None
    if cfg.use_preference:
        mined = estimate_preference(
            history, mine.user, prop, segment, mine.location,
            eps=cfg.eps.get(prop), min_pts=cfg.min_pts, coverage_p=cfg.coverage_p,
            strict=cfg.strict_overlap,
        )
        if mined is not None:
            band = (mined.lo, mined.hi)
        else:
            tol = cfg.tolerance_for(prop)
            band = (setpoint - tol, setpoint + tol)
    else:
        band = (setpoint, setpoint)
    # the acceptable region is the band itself: centre it rather than the request's setpoint
    req = StlRequirement(prop, (band[0] + band[1]) / 2.0, segment, (band[1] - band[0]) / 2.0)
    signal = predict_signal(prop, [mine, other], room, rules, segment)
    impact = deviation_integral(signal, req, cfg.deviation_mode)

    spans = violation_intervals(signal, req, cfg.deviation_mode) if impact > 0 else []
    violation = TimeInterval(spans[0].start, spans[-1].end) if spans else None
    pref_prox = preferential_proximity(band, signal.value_range(segment))
    temp_prox = temporal_proximity([segment, violation]) if violation else 0.0
    raw, likelihood = conflict_likelihood(impact, pref_prox, temp_prox, cfg, prop)
    if not cfg.use_preference:
        # baseline: any impact is a conflict
        likelihood = 1.0 if impact > 0 else 0.0
        pruned = False
    else:
        pruned = temp_prox < cfg.temporal_threshold or pref_prox > cfg.preferential_threshold
    return Assessment(
        mine, other, prop, segment, band, mined, req, signal, impact, violation,
        pref_prox, temp_prox, raw, likelihood, pruned,
    )


def candidate_pairs(requests: Sequence[ServiceRequest], rules: Sequence[AffinityRule]):
    """Unordered request pairs passing the preconditions, in a canonical order."""
    ordered = sorted(requests, key=lambda r: (r.interval.start, r.request_id))
    for a, b in itertools.combinations(ordered, 2):
        if impact_preconditions(a, b, rules):
            yield a, b


def detect(
    requests: Sequence[ServiceRequest],
    history: Sequence[ServiceEvent],
    ctx: ContextLike,
    rules: Sequence[AffinityRule],
    cfg: Optional[DetectionConfig] = None,
) -> List[ImpactConflict]:
    """Pairwise impact conflicts among ``requests``, one record per affected user."""
    cfg = cfg or DetectionConfig()
    conflicts = []
    for a, b in candidate_pairs(requests, rules):
        for assessment in assess_pair(a, b, history, ctx, rules, cfg):
            if assessment.is_conflict:
                conflicts.append(assessment.to_conflict())
    conflicts.sort(key=lambda c: (c.interval.start, c.user, c.attribute_name, c.service_id, c.interval.end))
    return conflicts


def write_report(conflicts: Iterable[ImpactConflict], fh: TextIO, header: Optional[dict] = None) -> None:
    if header is not None:
        fh.write(json.dumps({"_meta": header}, sort_keys=True) + "\n")
    for c in conflicts:
        fh.write(json.dumps(c.to_record(), sort_keys=True) + "\n")


def read_report(fh: TextIO) -> List[dict]:
    rows = [json.loads(line) for line in fh if line.strip()]
    return [r for r in rows if "_meta" not in r]
