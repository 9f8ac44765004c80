"""Piecewise-linear environment signals and the always-at-setpoint requirement.

All measures are computed exactly per linear piece after splitting the pieces
where they cross the tolerance band ``[setpoint - tol, setpoint + tol]``.
Deviation areas are reported in property-unit x minutes.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, TextIO, Tuple

from .model import TimeInterval, format_ts, to_seconds

PROPERTIES = ("temperature", "illumination", "sound", "humidity")
UNITS = {"temperature": "degC", "illumination": "lux", "sound": "dB", "humidity": "%RH"}

MAGNITUDE = "magnitude"
LITERAL = "literal"


def positive_part(v: float) -> float:
    return max(v, 0.0)


def negative_part(v: float) -> float:
    return min(v, 0.0)


@dataclass(frozen=True)
class Signal:
    """Linear interpolation between breakpoints, constant extension outside them."""

    property: str
    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if not times or len(times) != len(values):
            raise ValueError("signal needs at least one (time, value) sample")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("signal timestamps must be strictly increasing")
        if not all(math.isfinite(v) for v in values):
            raise ValueError("signal values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_samples(cls, prop: str, samples: Iterable[Tuple[float, float]]) -> "Signal":
        samples = list(samples)
        return cls(prop, tuple(s[0] for s in samples), tuple(s[1] for s in samples))

    @classmethod
    def constant(cls, prop: str, value: float, at: float) -> "Signal":
        return cls(prop, (at,), (value,))

    @property
    def samples(self) -> List[Tuple[float, float]]:
        return list(zip(self.times, self.values))

    @property
    def span(self) -> Tuple[float, float]:
        return self.times[0], self.times[-1]

    def __call__(self, t: float) -> float:
        times, values = self.times, self.values
        if t <= times[0]:
            return values[0]
        if t >= times[-1]:
            return values[-1]
        i = bisect.bisect_right(times, t)
        t0, t1 = times[i - 1], times[i]
        v0, v1 = values[i - 1], values[i]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def breakpoints_in(self, start: float, end: float) -> List[float]:
        """Window edges plus every breakpoint strictly inside the window."""
        lo = bisect.bisect_right(self.times, start)
        hi = bisect.bisect_left(self.times, end)
        return [start, *self.times[lo:hi], end]

    def value_range(self, window: TimeInterval) -> Tuple[float, float]:
        vals = [self(t) for t in self.breakpoints_in(window.start, window.end)]
        return min(vals), max(vals)

    def shifted(self, offset: float) -> "Signal":
        return Signal(self.property, self.times, tuple(v + offset for v in self.values))


@dataclass(frozen=True)
class StlRequirement:
    """Hold ``property`` at ``setpoint`` (within +/- ``tolerance``) throughout ``window``."""

    property: str
    setpoint: float
    window: TimeInterval
    tolerance: float = 0.0

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")


def _check(sig: Signal, req: StlRequirement) -> None:
    if sig.property != req.property:
        raise ValueError(
            f"property mismatch: signal is {sig.property!r}, requirement is {req.property!r}"
        )
    t0, t1 = sig.span
    if req.window.end < t0 or req.window.start > t1:
        raise ValueError("signal does not cover window")


def _deviation(x: float, setpoint: float, tol: float, mode: str) -> float:
    """Signed excess beyond the band; positive means violating."""
    if mode == LITERAL:
        return -negative_part(x - setpoint) - tol
    return abs(x - setpoint) - tol


def _pieces(sig: Signal, req: StlRequirement, mode: str):
    """Yield ``(t0, t1, d0, d1)`` sub-pieces on which the excess ``d`` is linear and sign-stable."""
    lam, tol = req.setpoint, req.tolerance
    levels = (lam - tol, lam, lam + tol)
    grid = sig.breakpoints_in(req.window.start, req.window.end)
    for a, b in zip(grid, grid[1:]):
        if b <= a:
            continue
        xa, xb = sig(a), sig(b)
        cuts = [a]
        if xa != xb:
            for level in levels:
                s = (level - xa) / (xb - xa)
                if 0.0 < s < 1.0:
                    cuts.append(a + s * (b - a))
        cuts.append(b)
        cuts.sort()
        for c0, c1 in zip(cuts, cuts[1:]):
            if c1 > c0:
                yield (
                    c0,
                    c1,
                    _deviation(sig(c0), lam, tol, mode),
                    _deviation(sig(c1), lam, tol, mode),
                )


def robustness(sig: Signal, req: StlRequirement, mode: str = MAGNITUDE) -> float:
    """Worst-case deviation from the setpoint over the window.

    ``mode="magnitude"`` gives ``sup |x(t) - setpoint|``; ``mode="literal"``
    gives the one-sided ``sup (x(t) - setpoint)``. Piecewise-linear signals
    attain the supremum at a breakpoint or a window edge.
    """
    _check(sig, req)
    pts = sig.breakpoints_in(req.window.start, req.window.end)
    if mode == LITERAL:
        return max(sig(t) - req.setpoint for t in pts)
    return max(abs(sig(t) - req.setpoint) for t in pts)


def _violation_stats(sig: Signal, req: StlRequirement, mode: str):
    violated_time = 0.0
    area = 0.0
    spans: List[Tuple[float, float]] = []
    for t0, t1, d0, d1 in _pieces(sig, req, mode):
        # sign-stable piece: strict violation iff the midpoint excess is positive
        if (d0 + d1) / 2.0 > 0.0:
            violated_time += t1 - t0
            area += (max(d0, 0.0) + max(d1, 0.0)) / 2.0 * (t1 - t0)
            if spans and spans[-1][1] == t0:
                spans[-1] = (spans[-1][0], t1)
            else:
                spans.append((t0, t1))
    return violated_time, area / 60.0, spans


def violation_fraction(sig: Signal, req: StlRequirement, mode: str = MAGNITUDE) -> float:
    """Fraction of the window during which the signal is strictly outside the band."""
    _check(sig, req)
    width = req.window.duration
    if width <= 0:
        return 0.0
    violated, _, _ = _violation_stats(sig, req, mode)
    return min(violated / width, 1.0)


def deviation_area(sig: Signal, req: StlRequirement, mode: str = MAGNITUDE) -> float:
    """Integral of the positive excess beyond the band, in unit x minutes."""
    _check(sig, req)
    return _violation_stats(sig, req, mode)[1]


def deviation_integral(sig: Signal, req: StlRequirement, mode: str = MAGNITUDE) -> float:
    """Violation fraction times the accumulated excess area (unit x minutes)."""
    _check(sig, req)
    width = req.window.duration
    if width <= 0:
        return 0.0
    violated, area, _ = _violation_stats(sig, req, mode)
    return min(violated / width, 1.0) * area


def violation_intervals(
    sig: Signal, req: StlRequirement, mode: str = MAGNITUDE
) -> List[TimeInterval]:
    """Maximal sub-intervals of the window on which the band is violated."""
    _check(sig, req)
    return [TimeInterval(a, b) for a, b in _violation_stats(sig, req, mode)[2]]


SIGNAL_CSV_HEADER = ("timestamp", "property", "value")


def write_signal_csv(sig: Signal, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SIGNAL_CSV_HEADER)
    for t, v in sig.samples:
        w.writerow([format_ts(t), sig.property, repr(v)])


def read_signal_csv(fh: TextIO) -> List[Signal]:
    """Read one or more signals (grouped by property, in file order)."""
    rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    by_prop: dict = {}
    for r in rows:
        by_prop.setdefault(r["property"], []).append((to_seconds(r["timestamp"]), float(r["value"])))
    return [Signal.from_samples(p, s) for p, s in by_prop.items()]


def merge_samples(samples: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Drop duplicate timestamps (last value wins) and collinear interior points."""
    out: List[Tuple[float, float]] = []
    for t, v in samples:
        if out and out[-1][0] == t:
            out[-1] = (t, v)
        else:
            out.append((t, v))
    pruned = out[:1]
    for i in range(1, len(out) - 1):
        (ta, va), (tb, vb), (tc, vc) = pruned[-1], out[i], out[i + 1]
        if abs((vb - va) * (tc - ta) - (vc - va) * (tb - ta)) > 1e-9 * max(1.0, abs(tc - ta)):
            pruned.append(out[i])
    if len(out) > 1:
        pruned.append(out[-1])
    return pruned
