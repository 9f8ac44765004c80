"""Preference mining from historical service events.

Events overlapping the impacted period are collected, the resident's values
for the attribute are clustered with DBSCAN, and the narrowest range holding
a fixed share of the largest cluster becomes the preference band.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .model import ServiceEvent, TimeInterval, normalize_location

NOISE = -1

DEFAULT_EPS = {"temperature": 1.0, "illumination": 5.0, "sound": 3.0, "humidity": 5.0}
DEFAULT_MIN_PTS = 4
DEFAULT_COVERAGE = 0.8


@dataclass(frozen=True)
class OverlappingEventSet:
    entries: tuple  # ((ServiceEvent, TimeInterval), ...)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def events(self) -> List[ServiceEvent]:
        return [e for e, _ in self.entries]


@dataclass(frozen=True)
class PreferenceBand:
    user: str
    attribute: str
    lo: float
    hi: float
    support: int
    coverage: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("band lo must not exceed hi")
        if not 0.0 < self.coverage <= 1.0:
            raise ValueError("coverage must lie in (0, 1]")

    @property
    def center(self) -> float:
        return (self.lo + self.hi) / 2.0

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2.0


def overlapping_service_events(
    history: Sequence[ServiceEvent],
    segment: TimeInterval,
    location: Optional[str] = None,
    strict: bool = False,
) -> OverlappingEventSet:
    """Events at ``location`` whose interval overlaps ``segment``.

    By default any positive-measure intersection counts, which also keeps
    events that enclose the whole segment. ``strict=True`` applies the narrower
    test of keeping only events with an endpoint inside ``[start, end]``.
    """
    where = normalize_location(location) if location is not None else None
    out = []
    for ev in history:
        if where is not None and normalize_location(ev.location) != where:
            continue
        iv = ev.interval
        hit = min(iv.end, segment.end) - max(iv.start, segment.start) > 0
        if strict:
            hit = hit and (segment.start <= iv.start <= segment.end or segment.start <= iv.end <= segment.end)
        if hit:
            out.append((ev, iv))
    return OverlappingEventSet(tuple(out))


def dbscan(points, eps: float, min_pts: int) -> List[int]:
    """Label each point with a cluster index (0, 1, ...) or ``NOISE``.

    Euclidean distance; a core point has at least ``min_pts`` neighbours
    within ``eps``, itself included. Clusters are discovered in input order
    and a border point joins the first cluster that reaches it.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    X = np.asarray(points, dtype=float)
    n = len(X)
    if n == 0:
        return []
    if X.ndim == 1:
        X = X[:, None]
    # squared-distance comparison avoids sqrt round-off at the eps boundary
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1)
    neighbors = [np.flatnonzero(row <= eps * eps) for row in d2]
    core = np.array([len(nb) >= min_pts for nb in neighbors])

    labels = [None] * n
    cluster = 0
    for i in range(n):
        if labels[i] is not None:
            continue
        if not core[i]:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = list(neighbors[i])
        while queue:
            j = queue.pop()
            if labels[j] == NOISE:
                labels[j] = cluster
            if labels[j] is not None:
                continue
            labels[j] = cluster
            if core[j]:
                queue.extend(neighbors[j])
        cluster += 1
    return labels


def preference_band(values: Sequence[float], coverage_p: float = DEFAULT_COVERAGE) -> Tuple[float, float, float]:
    """Narrowest ``[lo, hi]`` holding at least ``ceil(coverage_p * n)`` values.

    Returns ``(lo, hi, coverage)`` where coverage is the share of all values
    inside the band. Ties go to the smaller ``lo``.
    """
    if len(values) == 0:
        raise ValueError("no samples")
    if not 0.0 < coverage_p <= 1.0:
        raise ValueError("coverage_p must lie in (0, 1]")
    v = sorted(values)
    n = len(v)
    k = max(1, math.ceil(coverage_p * n - 1e-9))
    best = min(range(n - k + 1), key=lambda i: (v[i + k - 1] - v[i], i))
    lo, hi = v[best], v[best + k - 1]
    inside = sum(1 for x in v if lo <= x <= hi)
    return lo, hi, inside / n


def _band_from_values(user, attribute, values, eps, min_pts, coverage_p) -> Optional[PreferenceBand]:
    if not values:
        return None
    labels = dbscan(values, eps, min_pts)
    sizes = Counter(lb for lb in labels if lb != NOISE)
    if not sizes:
        return None
    top = max(sizes, key=lambda lb: (sizes[lb], -lb))
    members = [v for v, lb in zip(values, labels) if lb == top]
    lo, hi, coverage = preference_band(members, coverage_p)
    return PreferenceBand(user, attribute, lo, hi, len(members), coverage)


def daily_segments(segment: TimeInterval, first: float, last: float) -> List[TimeInterval]:
    """Copies of ``segment`` shifted by whole days so they cover ``[first, last]``."""
    day = 86400.0
    lo = math.floor((first - segment.end) / day)
    hi = math.ceil((last - segment.start) / day)
    return [TimeInterval(segment.start + k * day, segment.end + k * day) for k in range(lo, hi + 1)]


def estimate_preference(
    history: Sequence[ServiceEvent],
    user: str,
    attribute: str,
    segment: TimeInterval,
    location: Optional[str] = None,
    eps: Optional[float] = None,
    min_pts: int = DEFAULT_MIN_PTS,
    coverage_p: float = DEFAULT_COVERAGE,
    strict: bool = False,
    daily: bool = True,
    context: Optional[Callable[[ServiceEvent], bool]] = None,
) -> Optional[PreferenceBand]:
    """Mine ``user``'s band for ``attribute`` from events overlapping ``segment``.

    With ``daily=True`` (the default) the segment's time of day is matched on
    every day the history spans, so today's impacted period retrieves the
    same period on past days. ``context`` pre-filters events (weekday,
    season). Returns ``None`` when no cluster reaches ``min_pts``.
    """
    if eps is None:
        eps = DEFAULT_EPS.get(attribute, 1.0)
    mine = [e for e in history if e.user == user and (context is None or context(e))]
    if not mine:
        return None
    if daily:
        first = min(e.interval.start for e in mine)
        last = max(e.interval.end for e in mine)
        segments = daily_segments(segment, first, last)
    else:
        segments = [segment]
    seen = set()
    values = []
    for seg in segments:
        for ev in overlapping_service_events(mine, seg, location, strict=strict).events:
            if id(ev) in seen:
                continue
            seen.add(id(ev))
            v = ev.quality(attribute)
            if v is not None:
                values.append(v)
    return _band_from_values(user, attribute, values, eps, min_pts, coverage_p)


BAND_CSV_HEADER = ("user", "attribute", "lo", "hi", "support", "coverage")


def write_bands_csv(bands: Sequence[PreferenceBand], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BAND_CSV_HEADER)
    for b in bands:
        w.writerow([b.user, b.attribute, repr(b.lo), repr(b.hi), b.support, repr(b.coverage)])
