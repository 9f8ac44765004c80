import csv
import json

import pytest
import yaml

from impactconflict.cli import EXIT_GATE, EXIT_OK, EXIT_USAGE, main
from impactconflict.config import default_yaml, parse_config
from impactconflict.ingest import write_events_csv
from impactconflict.model import to_seconds

from scenarios import scenario1, scenario2

CASAS = """\
2011-06-15 08:00:00.000 LL001 ON
2011-06-15 08:30:00.000 D001 OPEN
2011-06-15 09:00:00.000 D001 CLOSE
2011-06-15 09:45:00.000 LL001 OFF
"""


def write_fixture(tmp_path, scenario):
    reqs, history, ctx, _ = scenario
    ev, rq, cf = tmp_path / "events.csv", tmp_path / "requests.csv", tmp_path / "run.yaml"
    with open(ev, "w", newline="") as fh:
        write_events_csv(history, fh)
    with open(rq, "w", newline="") as fh:
        write_events_csv(reqs, fh)
    room = {"volume": ctx.volume, "baseline": dict(ctx.baseline), "outdoor": dict(ctx.outdoor)}
    cf.write_text(yaml.safe_dump({"rooms": {"living": room}}))
    return str(ev), str(rq), str(cf)


def report_lines(path):
    with open(path) as fh:
        rows = [json.loads(line) for line in fh]
    return rows[0], rows[1:]


def test_ingest_valid(tmp_path):
    log = tmp_path / "log.txt"
    log.write_text(CASAS)
    out = tmp_path / "out"
    assert main(["ingest", str(log), "--out", str(out)]) == EXIT_OK
    events = (out / "events.csv").read_text().splitlines()
    assert events[0].startswith("# seed=0 config_hash=")
    assert len(events) == 2 + 2
    assert (out / "rejects.csv").read_text().splitlines() == ["line_no,reason,text"]


def test_ingest_three_bad_lines(tmp_path):
    log = tmp_path / "log.txt"
    log.write_text(CASAS + "2011-06-15 10:00:00 LL001\nnot a line at all\n2011-13-40 10:00:00 LL001 ON\n")
    out = tmp_path / "out"
    assert main(["ingest", str(log), "--out", str(out)]) == EXIT_OK
    with open(out / "rejects.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_ingest_missing_path(tmp_path, capsys):
    assert main(["ingest", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "no such file" in capsys.readouterr().err


def test_ingest_labelled_residents(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    a.write_text(CASAS)
    b.write_text(CASAS)
    out = tmp_path / "out"
    assert main(["ingest", f"R1={a}", f"R2={b}", "--out", str(out)]) == EXIT_OK
    with open(out / "events.csv") as fh:
        users = {r["user"] for r in csv.DictReader(line for line in fh if not line.startswith("#"))}
    assert users == {"R1", "R2"}


def test_detect_scenario1(tmp_path):
    ev, rq, cf = write_fixture(tmp_path, scenario1())
    out = tmp_path / "report.jsonl"
    assert main(["detect", "--events", ev, "--requests", rq, "--config", cf, "--out", str(out)]) == EXIT_OK
    meta, rows = report_lines(out)
    assert set(meta["_meta"]) >= {"seed", "config_hash"}
    assert len(rows) == 1
    assert rows[0]["user"] == "R1" and rows[0]["attribute"] == "temperature"
    assert rows[0]["likelihood"] > 0


def test_detect_gate(tmp_path):
    ev, rq, cf = write_fixture(tmp_path, scenario1())
    args = ["detect", "--events", ev, "--requests", rq, "--config", cf, "--out", str(tmp_path / "r.jsonl")]
    assert main(args + ["--gate"]) == EXIT_GATE


def test_detect_empty_requests(tmp_path):
    ev, _, cf = write_fixture(tmp_path, scenario1())
    empty = tmp_path / "empty.csv"
    with open(empty, "w", newline="") as fh:
        write_events_csv([], fh)
    out = tmp_path / "r.jsonl"
    assert main(["detect", "--events", ev, "--requests", str(empty), "--config", cf, "--out", str(out), "--gate"]) == EXIT_OK
    _, rows = report_lines(out)
    assert rows == []


def test_detect_requires_requests(tmp_path):
    assert main(["detect", "--out", str(tmp_path / "r.jsonl")]) == EXIT_USAGE


def test_malformed_config(tmp_path, capsys):
    ev, rq, _ = write_fixture(tmp_path, scenario1())
    bad = tmp_path / "bad.yaml"
    bad.write_text("detection:\n  temporal_threshold: 3\n  coverage_p: 0\nrooms:\n  living:\n    volume: -1\n")
    assert main(["detect", "--events", ev, "--requests", rq, "--config", str(bad)]) == EXIT_USAGE
    err = capsys.readouterr().err
    for path in ("detection.temporal_threshold", "detection.coverage_p", "rooms.living"):
        assert path in err


def test_unparsable_yaml(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [unclosed\n")
    assert main(["evaluate", "--config", str(bad)]) == EXIT_USAGE


def test_unknown_flag():
    assert main(["detect", "--frobnicate"]) == EXIT_USAGE


def test_no_preference_flag(tmp_path):
    ev, rq, cf = write_fixture(tmp_path, scenario1())
    out = tmp_path / "r.jsonl"
    assert main(["detect", "--events", ev, "--requests", rq, "--config", cf, "--out", str(out), "--no-preference"]) == EXIT_OK
    meta, rows = report_lines(out)
    assert meta["_meta"]["use_preference"] is False
    assert rows and all(r["likelihood"] == 1.0 for r in rows)


def small_config(tmp_path):
    cf = tmp_path / "small.yaml"
    cf.write_text("synthetic:\n  days: 10\n")
    return str(cf)


def test_evaluate_writes_metrics(tmp_path):
    out = tmp_path / "metrics.json"
    assert main(["evaluate", "--config", small_config(tmp_path), "--seed", "3", "--out", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["_meta"]["seed"] == 3
    assert 0 <= data["with_preference"]["accuracy"] <= 1
    assert "accuracy" in data["baseline"]


def test_sweep_three_by_three(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", small_config(tmp_path), "--grid", "0.5,0.7,0.9:0.1,0.5,0.9", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# seed=0 config_hash=")
    assert lines[1].startswith("tau_t,tau_p,accuracy")
    assert len(lines) == 2 + 9


@pytest.mark.parametrize("grid", ["0.5,0.7", "a:b", "0.5:1.5", ":0.5"])
def test_sweep_bad_grid(tmp_path, grid):
    assert main(["sweep", "--config", small_config(tmp_path), "--grid", grid, "--out", str(tmp_path / "s.csv")]) == EXIT_USAGE


def test_explain_scenario2(tmp_path):
    ev, rq, cf = write_fixture(tmp_path, scenario2())
    out = tmp_path / "explain"
    assert main(["explain", "--events", ev, "--requests", rq, "--config", cf, "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "explain.json").read_text())
    (a,) = summary["assessments"]
    assert a["affected_user"] == "R1" and a["attribute"] == "illumination"
    assert set(a) >= {"impact", "pref_prox", "temp_prox", "raw_cl", "likelihood"}
    with open(out / a["signal_csv"]) as fh:
        assert fh.readline().startswith("# seed=")
        rows = list(csv.DictReader(fh))
    samples = [(to_seconds(r["timestamp"]), float(r["value"])) for r in rows]
    t830 = to_seconds("2011-07-15T08:30")
    # the trace covers the overlap segment: 10 lux at 08:30, 30 lux right after
    assert samples[0] == (t830, 10.0)
    after = [v for t, v in samples if t830 < t <= t830 + 60]
    assert after and after[0] == pytest.approx(30.0)
    assert max(v for _, v in samples) == pytest.approx(30.0)


def test_explain_unknown_pair(tmp_path):
    ev, rq, cf = write_fixture(tmp_path, scenario2())
    assert main(["explain", "--events", ev, "--requests", rq, "--config", cf, "--pair", "x,y", "--out", str(tmp_path)]) == EXIT_USAGE


def test_outputs_byte_identical(tmp_path):
    ev, rq, cf = write_fixture(tmp_path, scenario1())
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.jsonl"
        main(["detect", "--events", ev, "--requests", rq, "--config", cf, "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    sweeps = []
    for i in range(2):
        out = tmp_path / f"s{i}.csv"
        main(["sweep", "--config", small_config(tmp_path), "--grid", "0.5:0.5", "--out", str(out)])
        sweeps.append(out.read_bytes())
    assert sweeps[0] == sweeps[1]


def test_print_config_parses_back(capsys):
    assert main(["--print-config"]) == EXIT_OK
    text = capsys.readouterr().out
    assert text == default_yaml()
    assert parse_config(yaml.safe_load(text)).seed == 0


def test_no_command():
    assert main([]) == EXIT_USAGE
