"""``impactconflict`` command line.

Exit codes: 0 on success, 1 when ``detect --gate`` finds a conflict,
2 on usage, input or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

from . import __version__
from .config import ConfigError, RunConfig, default_yaml, load_config
from .detection import assess_pair, candidate_pairs, detect, write_report
from .evaluation import evaluate, threshold_sweep, write_sweep_csv
from .ingest import (
    augment,
    merge_residents,
    parse_casas,
    read_events_csv,
    read_requests_csv,
    reconstruct_events,
    write_events_csv,
    write_rejects_csv,
)
from .signal import write_signal_csv
from .synth import generate_corpus

EXIT_OK, EXIT_GATE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _header_line(cfg: RunConfig) -> str:
    return f"seed={cfg.seed} config_hash={cfg.hash}"


def _need_file(path: Optional[str], flag: str) -> str:
    if not path:
        raise UsageError(f"{flag} is required")
    if not os.path.isfile(path):
        raise UsageError(f"{flag}: no such file: {path}")
    return path


def _open_out(path: Optional[str]):
    if path is None:
        return sys.stdout, False
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline=""), True


def _write_text(path: Optional[str], writer) -> None:
    fh, close = _open_out(path)
    try:
        writer(fh)
    finally:
        if close:
            fh.close()


def _json_dump(obj, fh) -> None:
    fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _parse_grid(text: str) -> Tuple[List[float], List[float]]:
    """``"0.5,0.7,0.9:0.1,0.5,0.9"`` -> temporal and preferential threshold lists."""
    try:
        left, right = text.split(":")
        temporal = [float(x) for x in left.split(",") if x.strip()]
        preferential = [float(x) for x in right.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--grid: expected 'T1,T2,...:P1,P2,...', got {text!r}") from None
    if not temporal or not preferential or any(not 0 <= v <= 1 for v in temporal + preferential):
        raise UsageError("--grid: thresholds must be non-empty lists of numbers in [0, 1]")
    return temporal, preferential


def _load_inputs(args, cfg: RunConfig):
    history = []
    if args.events:
        with open(_need_file(args.events, "--events"), encoding="utf-8") as fh:
            history = read_events_csv(fh)
    with open(_need_file(args.requests, "--requests"), encoding="utf-8") as fh:
        requests = read_requests_csv(fh)
    return history, requests


def _detection_cfg(args, cfg: RunConfig, benchmark: bool = False):
    det = cfg.benchmark if benchmark else cfg.detection
    if getattr(args, "no_preference", False):
        det = replace(det, use_preference=False)
    return det


def cmd_ingest(args, cfg: RunConfig) -> int:
    datasets = []
    rejects = []
    for spec in args.logs:
        label, sep, path = spec.partition("=")
        if not sep:
            label, path = "", spec
        with open(_need_file(path, "log"), encoding="utf-8") as fh:
            parsed = parse_casas(fh)
        events, bad = reconstruct_events(parsed.lines, cfg.sensor_map, cfg.value_map, cfg.horizon_hours * 3600.0)
        rejects += parsed.rejects + sorted(bad, key=lambda r: r.line_no)
        datasets.append((label, events))
    if len(datasets) > 1:
        if not all(label for label, _ in datasets):
            raise UsageError("several logs need LABEL=PATH resident labels")
        events = merge_residents(datasets)
    else:
        events = datasets[0][1]
        if datasets[0][0]:
            events = merge_residents(datasets)
    if args.augment:
        events = augment(events, cfg.augmentation)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "events.csv"), "w", encoding="utf-8", newline="") as fh:
        n = write_events_csv(events, fh, header=_header_line(cfg))
    with open(os.path.join(out, "rejects.csv"), "w", encoding="utf-8", newline="") as fh:
        write_rejects_csv(rejects, fh)
    print(f"events={n} rejects={len(rejects)} out={out}")
    return EXIT_OK


def cmd_detect(args, cfg: RunConfig) -> int:
    history, requests = _load_inputs(args, cfg)
    det = _detection_cfg(args, cfg)
    conflicts = detect(requests, history, dict(cfg.rooms), list(cfg.rules), det)
    header = {**cfg.header(), "use_preference": det.use_preference}
    _write_text(args.out, lambda fh: write_report(conflicts, fh, header))
    if args.out:
        print(f"conflicts={len(conflicts)} out={args.out}")
    if args.gate and conflicts:
        return EXIT_GATE
    return EXIT_OK


def _metrics_view(m: dict) -> dict:
    keep = (
        "accuracy", "precision_c", "recall_c", "f1_c", "precision_nc", "recall_nc", "f1_nc",
        "tp", "fp", "fn", "tn", "mae", "n", "scenarios", "mae_by_property",
    )
    return {k: m[k] for k in keep if k in m}


def cmd_evaluate(args, cfg: RunConfig) -> int:
    corpus = generate_corpus(cfg.synthetic_spec())
    det = _detection_cfg(args, cfg, benchmark=True)
    result = {"_meta": cfg.header(), "with_preference" if det.use_preference else "baseline": _metrics_view(
        evaluate(corpus, det, cfg.evaluation)
    )}
    if det.use_preference:
        result["baseline"] = _metrics_view(evaluate(corpus, replace(det, use_preference=False), cfg.evaluation))
    _write_text(args.out, lambda fh: _json_dump(result, fh))
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    temporal, preferential = _parse_grid(args.grid) if args.grid else (list(cfg.grid[0]), list(cfg.grid[1]))
    corpus = generate_corpus(cfg.synthetic_spec())
    rows = threshold_sweep(corpus, temporal, preferential, _detection_cfg(args, cfg, benchmark=True), cfg.evaluation)
    _write_text(args.out, lambda fh: write_sweep_csv(rows, fh, header=_header_line(cfg)))
    return EXIT_OK


def cmd_explain(args, cfg: RunConfig) -> int:
    history, requests = _load_inputs(args, cfg)
    rules = list(cfg.rules)
    det = _detection_cfg(args, cfg)
    if args.pair:
        ids = args.pair.split(",")
        by_id = {r.request_id: r for r in requests}
        if len(ids) != 2 or any(i not in by_id for i in ids):
            raise UsageError(f"--pair: expected two known request ids, got {args.pair!r}")
        pairs = [(by_id[ids[0]], by_id[ids[1]])]
    else:
        pairs = list(candidate_pairs(requests, rules))[:1]
    if not pairs:
        raise UsageError("no request pair shares an environment property")
    a, b = pairs[0]
    assessments = assess_pair(a, b, history, dict(cfg.rooms), rules, det)
    if not assessments:
        raise UsageError(f"requests {a.request_id} and {b.request_id} cannot impact each other")
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    summary = {"_meta": cfg.header(), "assessments": []}
    written = set()
    for x in assessments:
        name = f"signal_{x.attribute}.csv"
        if name not in written:
            with open(os.path.join(out, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(f"# {_header_line(cfg)}\n")
                write_signal_csv(x.signal, fh)
            written.add(name)
        summary["assessments"].append({
            "affected_request": x.affected.request_id,
            "affected_user": x.affected.user,
            "other_request": x.other.request_id,
            "attribute": x.attribute,
            "band": list(x.band),
            "segment": [x.segment.start, x.segment.end],
            "impact": x.impact,
            "pref_prox": x.pref_prox,
            "temp_prox": x.temp_prox,
            "raw_cl": x.raw_cl,
            "likelihood": x.likelihood,
            "conflict": x.is_conflict,
            "signal_csv": name,
        })
    with open(os.path.join(out, "explain.json"), "w", encoding="utf-8") as fh:
        _json_dump(summary, fh)
    print(f"assessments={len(assessments)} out={out}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "explain": cmd_explain,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output file (detect, evaluate, sweep) or directory (ingest, explain)")

    p = argparse.ArgumentParser(prog="impactconflict", description="Impact conflict detection for shared smart homes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-config", action="store_true", help="print the default configuration and exit")
    sub = p.add_subparsers(dest="command")

    ing = sub.add_parser("ingest", parents=[common], help="CASAS logs to canonical event CSV")
    ing.add_argument("logs", nargs="+", metavar="[LABEL=]LOG")
    ing.add_argument("--augment", action="store_true", help="insert seeded window/blind events and TV volumes")

    for name, text in (("detect", "report impact conflicts"), ("explain", "trace one request pair")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--events", help="historical service events CSV")
        sp.add_argument("--requests", help="current service requests CSV")
        sp.add_argument("--no-preference", action="store_true", help="baseline without mined preferences")
        if name == "detect":
            sp.add_argument("--gate", action="store_true", help="exit 1 when any conflict is found")
        else:
            sp.add_argument("--pair", help="two request ids, comma separated")

    ev = sub.add_parser("evaluate", parents=[common], help="metrics on the seeded synthetic corpus")
    ev.add_argument("--no-preference", action="store_true")
    sw = sub.add_parser("sweep", parents=[common], help="threshold grid on the synthetic corpus")
    sw.add_argument("--grid", help="'T1,T2,...:P1,P2,...' temporal and preferential thresholds")
    sw.add_argument("--no-preference", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.print_config:
        sys.stdout.write(default_yaml())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.config:
            _need_file(args.config, "--config")
        cfg = load_config(args.config).with_seed(args.seed)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
