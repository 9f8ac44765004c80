import io

import pytest
from hypothesis import given, strategies as st

from impactconflict.evaluation import (
    SWEEP_HEADER,
    EvaluationConfig,
    Observation,
    assess_corpus,
    build_ground_truth,
    classification_metrics,
    corpus_detection_config,
    evaluate,
    mean_absolute_error,
    threshold_sweep,
    write_mae_csv,
    write_sweep_csv,
)
from impactconflict.synth import SyntheticSpec, generate_corpus


def obs(conflict, hour=20.0, outdoor=30.0, pair=("R1", "R2")):
    return Observation(pair[0], pair[1], "temperature", "living", hour, {"temperature": outdoor}, conflict)


def test_ground_truth_ratio():
    table = build_ground_truth([obs(True), obs(False), obs(False), obs(False)])
    assert len(table) == 1
    assert table.likelihood(obs(False)) == 0.25


def test_ground_truth_zero_and_one():
    table = build_ground_truth([obs(False, hour=8), obs(True, hour=20), obs(True, hour=20)])
    assert table.likelihood(obs(False, hour=8)) == 0.0
    assert table.likelihood(obs(False, hour=20)) == 1.0


def test_bins_separate_scenarios():
    table = build_ground_truth([obs(True, outdoor=30.0), obs(False, outdoor=33.0)])
    assert len(table) == 2


def test_metrics_perfect_and_wrong():
    truth = [True, False, True, False]
    assert classification_metrics(truth, truth)["accuracy"] == 1.0
    assert all(classification_metrics(truth, truth)[k] == 1.0 for k in ("precision_c", "recall_c", "f1_nc"))
    assert classification_metrics([not t for t in truth], truth)["accuracy"] == 0.0


def test_metrics_confusion_arithmetic():
    predicted = [True] * 8 + [True] * 2 + [False] * 2 + [False] * 8
    truth = [True] * 8 + [False] * 2 + [True] * 2 + [False] * 8
    m = classification_metrics(predicted, truth)
    assert (m["tp"], m["fp"], m["fn"], m["tn"]) == (8, 2, 2, 8)
    assert m["accuracy"] == pytest.approx(0.8)
    assert m["precision_c"] == pytest.approx(0.8)
    assert m["recall_c"] == pytest.approx(0.8)


def test_metrics_errors():
    with pytest.raises(ValueError):
        classification_metrics([], [])
    with pytest.raises(ValueError):
        classification_metrics([True], [True, False])


def test_mae_examples():
    assert mean_absolute_error([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert mean_absolute_error([0.0, 1.0], [1.0, 0.0]) == 1.0
    assert mean_absolute_error([0.6], [0.8]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        mean_absolute_error([0.1], [0.1, 0.2])


def test_evaluation_config_validation():
    with pytest.raises(ValueError):
        EvaluationConfig(label_threshold=1.5)
    with pytest.raises(ValueError):
        EvaluationConfig(bins={"hour": 0.0})


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(SyntheticSpec(seed=0))


def test_single_grid_point_matches_metrics(corpus):
    cfg = corpus_detection_config()
    (row,) = threshold_sweep(corpus, [0.6], [0.5], cfg)
    direct = evaluate(corpus, cfg.with_thresholds(0.6, 0.5))
    for k in SWEEP_HEADER[2:]:
        assert row[k] == pytest.approx(direct[k])


def test_baseline_flags_every_positive_impact(corpus):
    cfg = corpus_detection_config(use_preference=False)
    for r in assess_corpus(corpus, cfg):
        impact = r.assessment.impact if r.assessment else 0.0
        assert (r.likelihood(cfg) == 1.0) == (impact > 0)


def test_baseline_overpredicts(corpus):
    ours = evaluate(corpus, corpus_detection_config())
    base = evaluate(corpus, corpus_detection_config(use_preference=False))
    assert base["recall_c"] >= ours["recall_c"]
    assert base["precision_c"] <= ours["precision_c"]


def test_sweep_positive_count_monotone(corpus):
    temporal = [0.5, 0.7, 0.9]
    preferential = [0.1, 0.5, 0.9]
    rows = {(r["tau_t"], r["tau_p"]): r["predicted_positive"] for r in threshold_sweep(corpus, temporal, preferential)}
    for (tt, tp), n in rows.items():
        for (tt2, tp2), n2 in rows.items():
            if tt2 <= tt and tp2 >= tp:
                assert n2 >= n


def test_sweep_csv_shape(corpus):
    rows = threshold_sweep(corpus, [0.5, 0.7, 0.9], [0.1, 0.5, 0.9])
    buf = io.StringIO()
    write_sweep_csv(rows, buf, header="seed=0 config_hash=x")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# seed=0 config_hash=x"
    assert lines[1] == ",".join(SWEEP_HEADER)
    assert len(lines) == 2 + 9


def test_sweep_rejects_empty_grid(corpus):
    with pytest.raises(ValueError):
        threshold_sweep(corpus, [], [0.5])


def test_mae_csv():
    reps = [
        {"temperature": {"conflict": 0.1, "no_conflict": 0.2, "overall": 0.15}},
        {"temperature": {"conflict": 0.3, "no_conflict": 0.2, "overall": 0.25}},
    ]
    buf = io.StringIO()
    write_mae_csv(reps, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0].startswith("property,conflict_mean,conflict_std")
    assert rows[1].startswith("temperature,0.2000,0.1414")


# -- properties --------------------------------------------------------------

labels = st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=100)


@given(labels)
def test_accuracy_and_f1_definitions(pairs):
    predicted, truth = zip(*pairs)
    m = classification_metrics(list(predicted), list(truth))
    assert m["accuracy"] == (m["tp"] + m["tn"]) / len(pairs)
    for cls in ("c", "nc"):
        p, r = m[f"precision_{cls}"], m[f"recall_{cls}"]
        assert m[f"f1_{cls}"] == pytest.approx(2 * p * r / (p + r) if p + r else 0.0)


unit = st.floats(0.0, 1.0)


@given(st.lists(st.tuples(unit, unit), min_size=1, max_size=100))
def test_mae_in_unit_interval(pairs):
    est, truth = zip(*pairs)
    assert 0.0 <= mean_absolute_error(list(est), list(truth)) <= 1.0


observations = st.lists(
    st.builds(
        obs, st.booleans(), st.integers(0, 23).map(float), st.integers(10, 40).map(float),
        st.sampled_from([("R1", "R2"), ("R2", "R1")]),
    ),
    max_size=60,
)


@given(observations)
def test_ground_truth_counts(items):
    table = build_ground_truth(items)
    assert sum(sc.occurrences for sc in table.scenarios.values()) == len(items)
    for sc in table.scenarios.values():
        assert 0 <= sc.conflicts <= sc.occurrences
        assert sc.likelihood == sc.conflicts / sc.occurrences
