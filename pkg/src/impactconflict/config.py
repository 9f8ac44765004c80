"""Run configuration: a YAML document covering every tunable of a run.

Loading never stops at the first problem. Each field is checked and all
errors are reported together as ``path: message`` strings.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml

from .detection import DetectionConfig
from .dynamics import AffinityRule, RoomContext, default_rules
from .evaluation import DEFAULT_BINS, EvaluationConfig, corpus_detection_config
from .ingest import DEFAULT_HORIZON, AugmentationSpec, SensorBinding
from .synth import SyntheticSpec


class ConfigError(ValueError):
    def __init__(self, errors: List[str]):
        super().__init__("\n".join(errors))
        self.errors = list(errors)


DEFAULT_SENSOR_MAP = {
    "AC*": SensorBinding("ac", "living"),
    "T1*": SensorBinding("ac", "living"),
    "LL*": SensorBinding("light", "living"),
    "D0*": SensorBinding("window", "living"),
    "TV*": SensorBinding("tv", "living"),
}
DEFAULT_ROOMS = {"living": RoomContext("living", 40.0, {"temperature": 25.0}, {"temperature": 30.0, "illumination": 20.0})}
DEFAULT_GRID = ((0.5, 0.6, 0.7, 0.8, 0.9), (0.1, 0.3, 0.5, 0.7, 0.9))

_SYNTH_KEYS = ("days", "history_per_day", "episodes_per_day", "room_volume", "min_violation", "shared_share", "agree_share")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    rules: Tuple[AffinityRule, ...] = field(default_factory=lambda: tuple(default_rules()))
    rooms: Mapping[str, RoomContext] = field(default_factory=lambda: dict(DEFAULT_ROOMS))
    sensor_map: Mapping[str, SensorBinding] = field(default_factory=lambda: dict(DEFAULT_SENSOR_MAP))
    value_map: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    horizon_hours: float = DEFAULT_HORIZON / 3600.0
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    synthetic: Mapping[str, float] = field(default_factory=dict)
    # detector settings for evaluate and sweep, which run on the synthetic corpus
    benchmark: DetectionConfig = field(default_factory=corpus_detection_config)
    grid: Tuple[Tuple[float, ...], Tuple[float, ...]] = DEFAULT_GRID

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        return replace(self, seed=seed, augmentation=replace(self.augmentation, seed=seed))

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(seed=self.seed, **self.synthetic)

    def to_dict(self) -> Dict[str, Any]:
        def rule(r: AffinityRule) -> dict:
            d = {"service": r.service_name_pattern, "property": r.property, "mode": r.mode, "effect": r.effect}
            for k in ("rate", "ac_tons", "offset", "value"):
                if getattr(r, k) is not None:
                    d[k] = getattr(r, k)
            d["coupling"] = r.coupling
            return d

        def room(c: RoomContext) -> dict:
            return {
                "volume": c.volume, "baseline": dict(c.baseline), "outdoor": dict(c.outdoor),
                "air_density": c.air_density, "specific_heat": c.specific_heat, "latent_heat": c.latent_heat,
            }

        aug = asdict(self.augmentation)
        aug.pop("seed")
        return {
            "seed": self.seed,
            "rules": [rule(r) for r in self.rules],
            "rooms": {name: room(c) for name, c in self.rooms.items()},
            "sensor_map": {k: asdict(b) for k, b in self.sensor_map.items()},
            "value_map": {k: dict(v) for k, v in self.value_map.items()},
            "horizon_hours": self.horizon_hours,
            "augmentation": {k: list(v) if isinstance(v, tuple) else v for k, v in aug.items()},
            "detection": asdict(self.detection),
            "evaluation": asdict(self.evaluation),
            "synthetic": {**self.synthetic, "detection": asdict(self.benchmark)},
            "grid": {"temporal": list(self.grid[0]), "preferential": list(self.grid[1])},
        }

    @property
    def hash(self) -> str:
        """Short digest of the canonical form; stable across runs and key order."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def header(self) -> Dict[str, Any]:
        return {"seed": self.seed, "config_hash": self.hash}


def default_yaml() -> str:
    return yaml.safe_dump(RunConfig().to_dict(), sort_keys=False)


class _Checker:
    def __init__(self):
        self.errors: List[str] = []

    def err(self, path: str, msg: str) -> None:
        self.errors.append(f"{path}: {msg}")

    def mapping(self, value, path: str) -> Optional[dict]:
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.err(path, "expected a mapping")
            return None
        return value

    def unknown(self, data: dict, allowed, path: str) -> None:
        for k in data:
            if k not in allowed:
                self.err(f"{path}.{k}" if path else str(k), "unknown key")

    def number(self, data: dict, key: str, path: str, default, *, integer=False, minimum=None, positive=False):
        if key not in data:
            return default
        v = data[key]
        p = f"{path}.{key}" if path else key
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
            self.err(p, "expected an integer" if integer else "expected a number")
            return default
        if positive and not v > 0:
            self.err(p, "must be > 0")
            return default
        if minimum is not None and v < minimum:
            self.err(p, f"must be >= {minimum}")
            return default
        return v

    def number_map(self, data: dict, key: str, path: str, default: dict, positive=False) -> dict:
        raw = self.mapping(data.get(key), f"{path}.{key}")
        if raw is None:
            return dict(default)
        out = dict(default)
        for k, v in raw.items():
            got = self.number(raw, k, f"{path}.{key}", None, positive=positive)
            if got is not None:
                out[str(k)] = float(got)
        return out

    def pair(self, data: dict, key: str, path: str, default):
        if key not in data:
            return default
        v = data[key]
        p = f"{path}.{key}"
        if (
            not isinstance(v, (list, tuple)) or len(v) != 2
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)
        ):
            self.err(p, "expected [lo, hi]")
            return default
        if v[0] > v[1]:
            self.err(p, "lo must not exceed hi")
            return default
        return (float(v[0]), float(v[1]))

    def build(self, path: str, factory, **kwargs):
        try:
            return factory(**kwargs)
        except (ValueError, TypeError) as exc:
            for part in str(exc).split("; "):
                name, sep, msg = part.partition(": ")
                if sep and name.replace(".", "_").isidentifier():
                    self.err(f"{path}.{name}", msg)
                else:
                    self.err(path, part)
            return None


def _rules(c: _Checker, raw) -> Tuple[AffinityRule, ...]:
    if raw is None:
        return tuple(default_rules())
    if not isinstance(raw, list):
        c.err("rules", "expected a list")
        return tuple(default_rules())
    out = []
    for i, item in enumerate(raw):
        path = f"rules[{i}]"
        if not isinstance(item, dict):
            c.err(path, "expected a mapping")
            continue
        c.unknown(item, ("service", "property", "mode", "effect", "rate", "ac_tons", "offset", "value", "coupling"), path)
        missing = [k for k in ("service", "property", "mode", "effect") if k not in item]
        for k in missing:
            c.err(f"{path}.{k}", "required")
        if missing:
            continue
        kwargs = {k: c.number(item, k, path, None, positive=k in ("rate", "ac_tons")) for k in ("rate", "ac_tons", "offset", "value")}
        coupling = c.number(item, "coupling", path, 0.5)
        rule = c.build(
            path, AffinityRule, service_name_pattern=str(item["service"]), property=str(item["property"]),
            mode=str(item["mode"]), effect=str(item["effect"]), coupling=float(coupling), **kwargs,
        )
        if rule is not None:
            out.append(rule)
    return tuple(out)


def _rooms(c: _Checker, raw) -> Dict[str, RoomContext]:
    data = c.mapping(raw, "rooms")
    if not data:
        return dict(DEFAULT_ROOMS)
    out = {}
    for name, spec in data.items():
        path = f"rooms.{name}"
        spec = c.mapping(spec, path)
        if spec is None:
            continue
        c.unknown(spec, ("volume", "baseline", "outdoor", "air_density", "specific_heat", "latent_heat"), path)
        room = c.build(
            path, RoomContext, location=str(name),
            volume=float(c.number(spec, "volume", path, 40.0, positive=True)),
            baseline=c.number_map(spec, "baseline", path, {}),
            outdoor=c.number_map(spec, "outdoor", path, {}),
            air_density=float(c.number(spec, "air_density", path, 1.2, positive=True)),
            specific_heat=float(c.number(spec, "specific_heat", path, 1.005, positive=True)),
            latent_heat=float(c.number(spec, "latent_heat", path, 334.0, positive=True)),
        )
        if room is not None:
            out[str(name)] = room
    return out


def _sensor_map(c: _Checker, raw) -> Dict[str, SensorBinding]:
    data = c.mapping(raw, "sensor_map")
    if not data:
        return dict(DEFAULT_SENSOR_MAP)
    out = {}
    for sensor, spec in data.items():
        path = f"sensor_map.{sensor}"
        spec = c.mapping(spec, path)
        if spec is None:
            continue
        c.unknown(spec, ("service", "location", "user"), path)
        for k in ("service", "location"):
            if k not in spec:
                c.err(f"{path}.{k}", "required")
        if "service" in spec and "location" in spec:
            out[str(sensor)] = SensorBinding(str(spec["service"]), str(spec["location"]), str(spec.get("user", "R1")))
    return out


def _value_map(c: _Checker, raw) -> Dict[str, Dict[str, str]]:
    data = c.mapping(raw, "value_map") or {}
    out = {}
    for actuator, spec in data.items():
        spec = c.mapping(spec, f"value_map.{actuator}")
        if spec is not None:
            out[str(actuator)] = {str(k): str(v) for k, v in spec.items()}
    return out


def _augmentation(c: _Checker, raw, seed: int) -> AugmentationSpec:
    data = c.mapping(raw, "augmentation") or {}
    d = AugmentationSpec()
    c.unknown(data, [f.name for f in fields(AugmentationSpec) if f.name != "seed"], "augmentation")
    kwargs = {
        "seed": seed,
        "window_blind_event_rate": float(c.number(data, "window_blind_event_rate", "augmentation", d.window_blind_event_rate, minimum=0)),
        "tv_service": str(data.get("tv_service", d.tv_service)),
    }
    for k in ("sound_range", "outdoor_lux_range", "outdoor_temperature_range", "duration_range"):
        kwargs[k] = c.pair(data, k, "augmentation", getattr(d, k))
    return c.build("augmentation", AugmentationSpec, **kwargs) or d


def _detection(c: _Checker, raw, p: str = "detection", d: Optional[DetectionConfig] = None) -> DetectionConfig:
    data = c.mapping(raw, p) or {}
    d = d or DetectionConfig()
    c.unknown(data, [f.name for f in fields(DetectionConfig)], p)
    kwargs = dict(
        impact_normalization_cap=c.number_map(data, "impact_normalization_cap", p, d.impact_normalization_cap, positive=True),
        temporal_threshold=float(c.number(data, "temporal_threshold", p, d.temporal_threshold)),
        preferential_threshold=float(c.number(data, "preferential_threshold", p, d.preferential_threshold)),
        default_tolerance=c.number_map(data, "default_tolerance", p, d.default_tolerance),
        eps=c.number_map(data, "eps", p, d.eps, positive=True),
        min_pts=int(c.number(data, "min_pts", p, d.min_pts, integer=True)),
        coverage_p=float(c.number(data, "coverage_p", p, d.coverage_p)),
        deviation_mode=str(data.get("deviation_mode", d.deviation_mode)),
    )
    for k in ("use_preference", "strict_overlap"):
        v = data.get(k, getattr(d, k))
        if not isinstance(v, bool):
            c.err(f"{p}.{k}", "expected true or false")
            v = getattr(d, k)
        kwargs[k] = v
    if kwargs["deviation_mode"] not in ("magnitude", "literal"):
        c.err(f"{p}.deviation_mode", "expected 'magnitude' or 'literal'")
        kwargs["deviation_mode"] = d.deviation_mode
    # DetectionConfig reports all of its own range errors at once
    return c.build(p, DetectionConfig, **kwargs) or d


def _evaluation(c: _Checker, raw) -> EvaluationConfig:
    data = c.mapping(raw, "evaluation") or {}
    p = "evaluation"
    c.unknown(data, ("label_threshold", "bins", "repetitions"), p)
    lt = float(c.number(data, "label_threshold", p, 0.5))
    if not 0.0 <= lt <= 1.0:
        c.err(f"{p}.label_threshold", "must lie in [0, 1]")
        lt = 0.5
    return c.build(
        p, EvaluationConfig, label_threshold=lt,
        bins=c.number_map(data, "bins", p, DEFAULT_BINS, positive=True),
        repetitions=int(c.number(data, "repetitions", p, 5, integer=True, minimum=1)),
    ) or EvaluationConfig()


def _synthetic(c: _Checker, raw) -> Dict[str, float]:
    data = c.mapping(raw, "synthetic") or {}
    c.unknown(data, _SYNTH_KEYS + ("detection",), "synthetic")
    out = {}
    for k in _SYNTH_KEYS:
        integer = k in ("days", "history_per_day", "episodes_per_day")
        v = c.number(data, k, "synthetic", None, integer=integer, minimum=0)
        if v is not None:
            out[k] = v
    for k in ("shared_share", "agree_share"):
        if k in out and out[k] > 1:
            c.err(f"synthetic.{k}", "must lie in [0, 1]")
            del out[k]
    return out


def _grid(c: _Checker, raw):
    data = c.mapping(raw, "grid") or {}
    c.unknown(data, ("temporal", "preferential"), "grid")
    out = []
    for i, k in enumerate(("temporal", "preferential")):
        v = data.get(k, DEFAULT_GRID[i])
        if not isinstance(v, (list, tuple)) or not v or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) or not 0 <= x <= 1 for x in v
        ):
            c.err(f"grid.{k}", "expected a non-empty list of numbers in [0, 1]")
            v = DEFAULT_GRID[i]
        out.append(tuple(float(x) for x in v))
    return tuple(out)


TOP_LEVEL = (
    "seed", "rules", "rooms", "sensor_map", "value_map", "horizon_hours",
    "augmentation", "detection", "evaluation", "synthetic", "grid",
)


def parse_config(data: Any) -> RunConfig:
    """Build a :class:`RunConfig`; raises :class:`ConfigError` listing every bad field."""
    c = _Checker()
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a mapping"])
    c.unknown(data, TOP_LEVEL, "")
    seed = int(c.number(data, "seed", "", 0, integer=True, minimum=0))
    cfg = RunConfig(
        seed=seed,
        rules=_rules(c, data.get("rules")),
        rooms=_rooms(c, data.get("rooms")),
        sensor_map=_sensor_map(c, data.get("sensor_map")),
        value_map=_value_map(c, data.get("value_map")),
        horizon_hours=float(c.number(data, "horizon_hours", "", 4.0, positive=True)),
        augmentation=_augmentation(c, data.get("augmentation"), seed),
        detection=_detection(c, data.get("detection")),
        evaluation=_evaluation(c, data.get("evaluation")),
        synthetic=_synthetic(c, data.get("synthetic")),
        benchmark=_detection(
            c, (data.get("synthetic") or {}).get("detection") if isinstance(data.get("synthetic"), dict) else None,
            "synthetic.detection", corpus_detection_config(),
        ),
        grid=_grid(c, data.get("grid")),
    )
    if c.errors:
        raise ConfigError(c.errors)
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"<root>: not valid YAML ({exc})"]) from None
    return parse_config(data)
