"""Ambient environment prediction for concurrent service requests.

Services influence environment properties through affinity rules. A
progressive rule moves the ambient value linearly at a finite rate (AC
cooling, a window letting warm air in); an instantaneous rule changes it
at once (a light switching on, a blind admitting daylight). Instantaneous
jumps are realised as ramps one millisecond long so that every prediction
is an ordinary continuous piecewise-linear :class:`Signal`.
"""
from __future__ import annotations

import fnmatch
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

from .model import ServiceRequest, TimeInterval, normalize_location
from .signal import PROPERTIES, Signal, merge_samples

PROGRESSIVE = "progressive"
INSTANTANEOUS = "instantaneous"
MODES = (PROGRESSIVE, INSTANTANEOUS)

SETPOINT = "setpoint"  # drive the property to the request's own attribute value
OFFSET = "offset"  # add a fixed amount while active
COUPLING = "coupling"  # let the outdoor value leak in, scaled by ``coupling``
SOURCE = "source"  # an emitter combined by energy sum (sound)
EFFECTS = (SETPOINT, OFFSET, COUPLING, SOURCE)

STEP = 0.001  # seconds; width of an instantaneous change

AIR_DENSITY = 1.2  # kg/m^3
SPECIFIC_HEAT = 1.005  # kJ/(kg K)
LATENT_HEAT = 334.0  # kJ/kg

SILENCE = float("-inf")


def cooling_time_hours(
    volume_m3: float,
    air_density: float,
    delta_t: float,
    specific_heat: float,
    latent_heat: float,
    ac_tons: float,
) -> float:
    """Hours needed to shift a room's temperature by ``delta_t``.

    ``(volume * density * delta_t * specific_heat) / (latent_heat * tons * 1000 / 24)``,
    evaluated as written (no unit conversion). ``delta_t == 0`` takes no time.
    """
    for name, v in (
        ("volume_m3", volume_m3),
        ("air_density", air_density),
        ("specific_heat", specific_heat),
        ("latent_heat", latent_heat),
        ("ac_tons", ac_tons),
    ):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v!r}")
    if delta_t < 0:
        raise ValueError(f"delta_t must be non-negative, got {delta_t!r}")
    return (volume_m3 * air_density * delta_t * specific_heat) / (
        latent_heat * ac_tons * 1000.0 / 24.0
    )


def combine_sound_db(levels: Sequence[float]) -> float:
    """Energy sum of sound pressure levels: ``10 log10(sum 10^(L/10))``."""
    if not levels:
        raise ValueError("no sound levels to combine")
    energy = sum(10.0 ** (lv / 10.0) for lv in levels if lv != SILENCE)
    if energy == 0.0:
        return SILENCE
    return 10.0 * math.log10(energy)


@dataclass(frozen=True)
class AffinityRule:
    service_name_pattern: str
    property: str
    mode: str
    effect: str
    rate: Optional[float] = None  # property units per hour
    ac_tons: Optional[float] = None  # derive the rate from the cooling-time formula
    offset: Optional[float] = None
    value: Optional[float] = None  # fallback level when the request has no attribute
    coupling: float = 0.5

    def __post_init__(self):
        if self.property not in PROPERTIES:
            raise ValueError(f"unknown property {self.property!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.effect not in EFFECTS:
            raise ValueError(f"unknown effect {self.effect!r}")
        if self.mode == PROGRESSIVE and self.rate is None and self.ac_tons is None:
            raise ValueError(f"{self.service_name_pattern}: progressive rule needs rate or ac_tons")
        if self.rate is not None and self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.ac_tons is not None and self.ac_tons <= 0:
            raise ValueError("ac_tons must be positive")
        if self.effect == OFFSET and self.offset is None:
            raise ValueError(f"{self.service_name_pattern}: offset rule needs an offset")
        if not 0.0 <= self.coupling <= 1.0:
            raise ValueError("coupling must lie in [0, 1]")

    def matches(self, service_id: str) -> bool:
        return fnmatch.fnmatchcase(service_id.casefold(), self.service_name_pattern.casefold())


@dataclass(frozen=True)
class RoomContext:
    location: str = ""
    volume: float = 40.0
    baseline: Dict[str, float] = field(default_factory=dict)
    outdoor: Dict[str, float] = field(default_factory=dict)
    air_density: float = AIR_DENSITY
    specific_heat: float = SPECIFIC_HEAT
    latent_heat: float = LATENT_HEAT

    def __post_init__(self):
        if not self.volume > 0:
            raise ValueError("room volume must be positive")
        for k, v in {**self.baseline, **self.outdoor}.items():
            if not math.isfinite(v):
                raise ValueError(f"context value for {k!r} must be finite")

    def baseline_for(self, prop: str) -> float:
        if prop in self.baseline:
            return self.baseline[prop]
        return DEFAULT_BASELINE[prop]

    def with_outdoor(self, **values: float) -> "RoomContext":
        return RoomContext(
            self.location, self.volume, dict(self.baseline), {**self.outdoor, **values},
            self.air_density, self.specific_heat, self.latent_heat,
        )


DEFAULT_BASELINE = {"temperature": 25.0, "illumination": 0.0, "sound": 30.0, "humidity": 50.0}


def default_rules() -> List[AffinityRule]:
    """Canonical profile: AC, heater, window, blind, light, TV, humidifier."""
    return [
        AffinityRule("ac*", "temperature", PROGRESSIVE, SETPOINT, ac_tons=0.1),
        AffinityRule("heater*", "temperature", PROGRESSIVE, SETPOINT, ac_tons=0.1),
        AffinityRule("thermostat*", "temperature", PROGRESSIVE, SETPOINT, ac_tons=0.1),
        AffinityRule("window*", "temperature", PROGRESSIVE, COUPLING, rate=20.0, coupling=0.5),
        AffinityRule("window*", "sound", INSTANTANEOUS, COUPLING, coupling=0.3),
        AffinityRule("blind*", "illumination", INSTANTANEOUS, COUPLING, coupling=1.0),
        AffinityRule("light*", "illumination", INSTANTANEOUS, SETPOINT),
        AffinityRule("tv*", "sound", INSTANTANEOUS, SOURCE, value=60.0),
        AffinityRule("humidifier*", "humidity", INSTANTANEOUS, OFFSET, offset=10.0),
    ]


def rule_for(request: ServiceRequest, prop: str, rules: Iterable[AffinityRule]) -> Optional[AffinityRule]:
    for rule in rules:
        if rule.property == prop and rule.matches(request.service_id):
            return rule
    return None


def affected_properties(request: ServiceRequest, rules: Iterable[AffinityRule]) -> set:
    return {r.property for r in rules if r.matches(request.service_id)}


def controls_property(request: ServiceRequest, prop: str, rules: Iterable[AffinityRule]) -> bool:
    """True when the request asks for a level of ``prop`` (it carries that attribute)."""
    rule = rule_for(request, prop, rules)
    return rule is not None and rule.effect in (SETPOINT, SOURCE) and request.quality(prop) is not None


def ramp_rate(rule: AffinityRule, ctx: RoomContext) -> float:
    """Progressive change rate in property units per hour."""
    if rule.rate is not None:
        return rule.rate
    # the cooling-time formula is linear in delta_t, so the rate is constant
    return 1.0 / cooling_time_hours(
        ctx.volume, ctx.air_density, 1.0, ctx.specific_heat, ctx.latent_heat, rule.ac_tons
    )


@dataclass
class _Active:
    request: ServiceRequest
    rule: AffinityRule
    order: int

    @property
    def start(self) -> float:
        return self.request.interval.start

    @property
    def end(self) -> float:
        return self.request.interval.end

    def level(self) -> Optional[float]:
        v = self.request.quality(self.rule.property)
        return v if v is not None else self.rule.value


def _step_component(prop: str, active: List[_Active], ctx: RoomContext):
    """Instantaneous part on a segment: ``(override level or None, additive term)``."""
    if prop == "sound":
        levels = [ctx.baseline_for("sound")]
        for a in active:
            if a.rule.effect == SOURCE and a.level() is not None:
                levels.append(a.level())
            elif a.rule.effect == COUPLING and "sound" in ctx.outdoor and a.rule.coupling > 0:
                levels.append(ctx.outdoor["sound"] + 10.0 * math.log10(a.rule.coupling))
            elif a.rule.effect == OFFSET:
                levels.append(a.rule.offset)
        combined = combine_sound_db(levels)
        return (combined if combined != SILENCE else 0.0), 0.0

    override = None
    setters = [a for a in active if a.rule.mode == INSTANTANEOUS and a.rule.effect == SETPOINT and a.level() is not None]
    if setters:
        override = max(setters, key=lambda a: (a.start, a.request.request_id)).level()
    add = 0.0
    for a in active:
        if a.rule.mode != INSTANTANEOUS:
            continue
        if a.rule.effect == OFFSET:
            add += a.rule.offset
        elif a.rule.effect == COUPLING and prop in ctx.outdoor:
            reference = 0.0 if prop == "illumination" else ctx.baseline_for(prop)
            add += a.rule.coupling * (ctx.outdoor[prop] - reference)
        elif a.rule.effect == SOURCE and a.level() is not None:
            add += a.level()
    return override, add


class _Progressive:
    """Target-chasing state for progressive rules.

    A disturbance (coupling or offset) that starts pulls the value to its
    shifted equilibrium at its own rate; afterwards the latest active
    setpoint controller re-converges the value at the controller's rate.
    """

    def __init__(self, prop: str, ctx: RoomContext, t0: float):
        self.prop = prop
        self.ctx = ctx
        self.t = t0
        self.v = ctx.baseline_for(prop)
        self.pending = None  # (target, rate, request_id)
        self.samples = [(t0, self.v)]

    def on_segment(self, started: List[_Active], active: List[_Active]) -> None:
        for a in started:
            rule = a.rule
            if rule.mode != PROGRESSIVE or rule.effect == SETPOINT:
                continue
            if rule.effect == COUPLING:
                if self.prop not in self.ctx.outdoor:
                    continue
                target = self.v + rule.coupling * (self.ctx.outdoor[self.prop] - self.v)
            elif rule.effect == OFFSET:
                target = self.v + rule.offset
            else:
                continue
            self.pending = (target, ramp_rate(rule, self.ctx), a.request.request_id)
        ids = {a.request.request_id for a in active}
        if self.pending and self.pending[2] not in ids:
            self.pending = None
        controllers = [
            a for a in active
            if a.rule.mode == PROGRESSIVE and a.rule.effect == SETPOINT and a.level() is not None
        ]
        self.controller = None
        if controllers:
            c = max(controllers, key=lambda a: (a.start, a.request.request_id))
            self.controller = (c.level(), ramp_rate(c.rule, self.ctx))

    def advance(self, until: float) -> None:
        while self.t < until:
            if self.pending:
                target, rate = self.pending[0], self.pending[1]
            elif self.controller:
                target, rate = self.controller
            else:
                break
            if self.v == target:
                if self.pending:
                    self.pending = None
                    continue
                break
            needed = abs(target - self.v) / rate * 3600.0
            if self.t + needed < until:
                self.t += needed
                self.v = target
                self.samples.append((self.t, self.v))
                self.pending = None
            else:
                step = rate * (until - self.t) / 3600.0
                self.v += step if target > self.v else -step
                self.t = until
        self.t = until
        self.samples.append((self.t, self.v))

    def signal(self) -> Signal:
        return Signal.from_samples(self.prop, merge_samples(self.samples))


def predict_signal(
    prop: str,
    requests: Sequence[ServiceRequest],
    ctx: RoomContext,
    rules: Sequence[AffinityRule],
    window: TimeInterval,
) -> Signal:
    """Predicted ambient trace of ``prop`` over ``window``.

    Requests that started before the window are simulated from their start so
    that ramps already in progress carry into the window.
    """
    if prop not in PROPERTIES:
        raise ValueError(f"unknown property {prop!r}")
    here = normalize_location(ctx.location) if ctx.location else None
    matched: List[_Active] = []
    for i, req in enumerate(requests):
        if here is not None and normalize_location(req.location) != here:
            continue
        rule = rule_for(req, prop, rules)
        if rule is not None and req.interval.end > req.interval.start:
            matched.append(_Active(req, rule, i))

    baseline = ctx.baseline_for(prop)
    if not matched:
        return _clip(Signal.constant(prop, baseline, window.start), window)

    t0 = min([window.start] + [a.start for a in matched])
    t1 = window.end
    cuts = sorted({t0, t1} | {a.start for a in matched if t0 < a.start < t1} | {a.end for a in matched if t0 < a.end < t1})

    engine = _Progressive(prop, ctx, t0)
    segments = []  # (start, end, override, additive)
    for s, e in zip(cuts, cuts[1:]):
        active = [a for a in matched if a.start <= s < a.end]
        started = [a for a in active if a.start == s]
        engine.on_segment(started, active)
        engine.advance(e)
        override, add = _step_component(prop, active, ctx)
        segments.append((s, e, override, add))
    if len(cuts) == 1:
        segments.append((t0, t1, *_step_component(prop, [a for a in matched if a.start <= t0 < a.end], ctx)))
    progressive = engine.signal()

    samples = []
    prev = None
    for s, e, override, add in segments:
        key = (override, add)
        first = s
        if prev is not None and prev != key and e - s > STEP:
            first = s + STEP
        pts = [first] + [t for t in progressive.times if first < t < e] + [e]
        for t in pts:
            base = override if override is not None else progressive(t)
            samples.append((t, base + add))
        prev = key
    return _clip(Signal.from_samples(prop, merge_samples(samples)), window)


def _clip(sig: Signal, window: TimeInterval) -> Signal:
    pts = sig.breakpoints_in(window.start, window.end)
    samples = [(t, sig(t)) for t in pts]
    if window.end == window.start:
        samples = samples[:1]
    return Signal.from_samples(sig.property, merge_samples(samples))
