"""Ground truth, metrics and threshold sweeps for conflict detection."""
from __future__ import annotations

import csv
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple

from .detection import Assessment, DetectionConfig, assess_pair
from .synth import Corpus, Episode, SyntheticSpec, generate_corpus

CONFLICT = "conflict"
NO_CONFLICT = "no-conflict"

DEFAULT_BINS = {"temperature": 2.0, "illumination": 10.0, "sound": 5.0, "humidity": 5.0, "hour": 3.0}


@dataclass(frozen=True)
class EvaluationConfig:
    label_threshold: float = 0.5
    bins: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BINS))
    repetitions: int = 5

    def __post_init__(self):
        if not 0.0 <= self.label_threshold <= 1.0:
            raise ValueError("label_threshold must lie in [0, 1]")
        if any(not w > 0 for w in self.bins.values()):
            raise ValueError("bin widths must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class Observation:
    """One co-occurrence of two residents' services, with its observed outcome."""

    affected_user: str
    other_user: str
    attribute: str
    location: str
    hour: float
    context: Mapping[str, float]
    conflict: bool
    services: Tuple[str, str] = ("", "")


def _bin(value: float, width: float) -> int:
    return int(math.floor(value / width))


def scenario_key(obs: Observation, bins: Mapping[str, float]) -> tuple:
    ctx = tuple(sorted((k, _bin(v, bins.get(k, 1.0))) for k, v in obs.context.items()))
    hour = _bin(obs.hour, bins.get("hour", 3.0))
    return (obs.affected_user, obs.other_user), obs.services, obs.attribute, obs.location, hour, ctx


@dataclass
class ContextScenario:
    key: tuple
    occurrences: int = 0
    conflicts: int = 0

    @property
    def likelihood(self) -> float:
        return self.conflicts / self.occurrences if self.occurrences else 0.0


@dataclass
class GroundTruthTable:
    scenarios: Dict[tuple, ContextScenario]
    bins: Mapping[str, float]

    def likelihood(self, obs: Observation) -> float:
        sc = self.scenarios.get(scenario_key(obs, self.bins))
        return sc.likelihood if sc else 0.0

    def __len__(self):
        return len(self.scenarios)


def build_ground_truth(observations: Iterable[Observation], bins: Optional[Mapping[str, float]] = None) -> GroundTruthTable:
    """Tally occurrences and conflicts per discretized context scenario."""
    bins = dict(DEFAULT_BINS if bins is None else bins)
    table: Dict[tuple, ContextScenario] = {}
    for obs in observations:
        key = scenario_key(obs, bins)
        sc = table.setdefault(key, ContextScenario(key))
        sc.occurrences += 1
        sc.conflicts += int(obs.conflict)
    return GroundTruthTable(table, bins)


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def classification_metrics(predicted: Sequence[bool], truth: Sequence[bool]) -> Dict[str, float]:
    """Accuracy and per-class precision/recall/F1 for conflict (True) vs no-conflict."""
    if len(predicted) != len(truth):
        raise ValueError("predicted and truth must have equal length")
    if not truth:
        raise ValueError("no samples to score")
    tp = sum(1 for p, t in zip(predicted, truth) if p and t)
    fp = sum(1 for p, t in zip(predicted, truth) if p and not t)
    fn = sum(1 for p, t in zip(predicted, truth) if not p and t)
    tn = len(truth) - tp - fp - fn
    pc, rc = _safe_div(tp, tp + fp), _safe_div(tp, tp + fn)
    pn, rn = _safe_div(tn, tn + fn), _safe_div(tn, tn + fp)
    return {
        "accuracy": (tp + tn) / len(truth),
        "precision_c": pc, "recall_c": rc, "f1_c": _f1(pc, rc),
        "precision_nc": pn, "recall_nc": rn, "f1_nc": _f1(pn, rn),
        "tp": tp, "fp": fp, "fn": fn, "tn": tn,
    }


def mean_absolute_error(estimated: Sequence[float], truth: Sequence[float]) -> float:
    if len(estimated) != len(truth):
        raise ValueError("estimated and truth must have equal length")
    if not truth:
        raise ValueError("no samples")
    return sum(abs(o - e) for e, o in zip(estimated, truth)) / len(truth)


def observation_of(ep: Episode) -> Observation:
    return Observation(
        ep.affected.user, ep.other.user, ep.attribute, ep.affected.location, ep.hour,
        {ep.attribute: ep.outdoor}, ep.conflict, (ep.affected.service_id, ep.other.service_id),
    )


@dataclass(frozen=True)
class SampleResult:
    episode: Episode
    assessment: Optional[Assessment]

    @property
    def truth(self) -> bool:
        return self.episode.conflict

    def likelihood(self, cfg: Optional[DetectionConfig] = None) -> float:
        a = self.assessment
        if a is None or a.impact <= 0:
            return 0.0
        if cfg is not None and cfg.use_preference:
            if a.temp_prox < cfg.temporal_threshold or a.pref_prox > cfg.preferential_threshold:
                return 0.0
        elif a.pruned:
            return 0.0
        return a.likelihood


def assess_corpus(corpus: Corpus, cfg: DetectionConfig) -> List[SampleResult]:
    """Run the detector on every episode; thresholds are applied later."""
    loose = cfg.with_thresholds(0.0, 1.0)
    out = []
    for ep in corpus.episodes:
        found = [
            a for a in assess_pair(ep.affected, ep.other, corpus.history, ep.context, corpus.rules, loose)
            if a.affected.request_id == ep.affected.request_id and a.attribute == ep.attribute
        ]
        out.append(SampleResult(ep, found[0] if found else None))
    return out


def score(results: Sequence[SampleResult], cfg: DetectionConfig, eval_cfg: EvaluationConfig, table: GroundTruthTable) -> dict:
    el = [r.likelihood(cfg) for r in results]
    predicted = [p >= eval_cfg.label_threshold and p > 0 for p in el]
    truth = [r.truth for r in results]
    metrics = classification_metrics(predicted, truth)
    ol = [table.likelihood(observation_of(r.episode)) for r in results]
    metrics["mae"] = mean_absolute_error(el, ol)
    metrics["n"] = len(results)
    metrics["predicted_positive"] = sum(predicted)
    return metrics


def mae_by_property(results: Sequence[SampleResult], cfg: DetectionConfig, table: GroundTruthTable) -> Dict[str, Dict[str, float]]:
    """MAE per property split by ground-truth class, as Conflict / No Conflict / Overall."""
    groups: Dict[str, Dict[str, List[Tuple[float, float]]]] = defaultdict(lambda: defaultdict(list))
    for r in results:
        pair = (r.likelihood(cfg), table.likelihood(observation_of(r.episode)))
        prop = r.episode.attribute
        groups[prop]["conflict" if r.truth else "no_conflict"].append(pair)
        groups[prop]["overall"].append(pair)
    out = {}
    for prop, g in sorted(groups.items()):
        out[prop] = {
            k: mean_absolute_error([e for e, _ in v], [o for _, o in v]) if v else float("nan")
            for k, v in g.items()
        }
    return out


def evaluate(
    corpus: Corpus,
    cfg: Optional[DetectionConfig] = None,
    eval_cfg: Optional[EvaluationConfig] = None,
) -> dict:
    cfg = cfg or corpus_detection_config()
    eval_cfg = eval_cfg or EvaluationConfig()
    table = build_ground_truth((observation_of(ep) for ep in corpus.episodes), eval_cfg.bins)
    results = assess_corpus(corpus, cfg)
    metrics = score(results, cfg, eval_cfg, table)
    metrics["mae_by_property"] = mae_by_property(results, cfg, table)
    metrics["scenarios"] = len(table)
    return metrics


SWEEP_HEADER = ("tau_t", "tau_p", "accuracy", "precision_c", "recall_c", "f1_c", "precision_nc", "recall_nc", "f1_nc")


def threshold_sweep(
    corpus: Corpus,
    temporal: Sequence[float],
    preferential: Sequence[float],
    cfg: Optional[DetectionConfig] = None,
    eval_cfg: Optional[EvaluationConfig] = None,
) -> List[dict]:
    """Metrics for every (temporal, preferential) threshold pair.

    Each episode is assessed once; a grid point only changes which conflicts
    are pruned, so applying the thresholds afterwards is equivalent to
    re-running detection per grid point.
    """
    if not temporal or not preferential:
        raise ValueError("threshold grid must be non-empty")
    cfg = cfg or corpus_detection_config()
    eval_cfg = eval_cfg or EvaluationConfig()
    table = build_ground_truth((observation_of(ep) for ep in corpus.episodes), eval_cfg.bins)
    results = assess_corpus(corpus, cfg)
    rows = []
    for tt in temporal:
        for tp in preferential:
            m = score(results, cfg.with_thresholds(tt, tp), eval_cfg, table)
            rows.append({"tau_t": tt, "tau_p": tp, **m})
    return rows


def write_sweep_csv(rows: Sequence[dict], fh: TextIO, header: Optional[str] = None) -> None:
    if header:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([f"{r[k]:.6g}" for k in SWEEP_HEADER])


def write_mae_csv(per_rep: Sequence[Dict[str, Dict[str, float]]], fh: TextIO, header: Optional[str] = None) -> None:
    """Rows per property with mean and sample std over repetitions."""
    if header:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    cols = ("conflict", "no_conflict", "overall")
    w.writerow(["property"] + [f"{c}_{s}" for c in cols for s in ("mean", "std")])
    props = sorted({p for rep in per_rep for p in rep})
    for prop in props:
        row = [prop]
        for c in cols:
            vals = [rep[prop][c] for rep in per_rep if prop in rep and c in rep[prop] and not math.isnan(rep[prop][c])]
            mean = statistics.fmean(vals) if vals else float("nan")
            std = statistics.stdev(vals) if len(vals) > 1 else 0.0
            row += [f"{mean:.4f}", f"{std:.4f}"]
        w.writerow(row)


def corpus_detection_config(**overrides) -> DetectionConfig:
    """Detector settings used for the synthetic corpus."""
    # per-episode deviations are minutes-long, so the caps sit well below the library defaults
    base = dict(impact_normalization_cap={"temperature": 10.0, "illumination": 100.0, "sound": 200.0, "humidity": 300.0})
    base.update(overrides)
    return DetectionConfig(**base)


def repeated_evaluation(
    spec: SyntheticSpec,
    cfg: Optional[DetectionConfig] = None,
    eval_cfg: Optional[EvaluationConfig] = None,
) -> List[dict]:
    """Evaluate ``eval_cfg.repetitions`` corpora with consecutive seeds."""
    eval_cfg = eval_cfg or EvaluationConfig()
    return [
        evaluate(generate_corpus(replace(spec, seed=spec.seed + i)), cfg, eval_cfg)
        for i in range(eval_cfg.repetitions)
    ]
