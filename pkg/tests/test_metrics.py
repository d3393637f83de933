import csv
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairscaling.core import MetricsReport, ScoredPrediction
from fairscaling.metrics import (
    EvalSet,
    UndefinedMetricError,
    auc,
    deo,
    deodds,
    dpd,
    full_report,
    group_auc,
    max_psd,
    mean_psd,
    midranks,
    overall_auc,
    recompute_psd,
    selection_rates,
    write_report_csv,
    write_report_json,
)

GOLDEN = Path(__file__).parent / "data" / "psd_golden.csv"


def pair_count_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    credit = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return credit / (len(pos) * len(neg))


def golden_rows():
    with open(GOLDEN, newline="") as fh:
        return list(csv.DictReader(fh))


def ev_from_rates(rates, n=10, **kw):
    """One group per entry; rate r means round(r*n) of n samples score 1.0."""
    scores, groups = [], []
    for g, r in enumerate(rates):
        k = round(r * n)
        scores += [1.0] * k + [0.0] * (n - k)
        groups += [g] * n
    labels = [i % 2 for i in range(len(scores))]
    return EvalSet(np.array(scores), np.array(labels), np.array(groups), len(rates), **kw)


def ev_from_tables(tables):
    """tables: per group (tp, fn, fp, tn)."""
    scores, labels, groups = [], [], []
    for g, (tp, fn, fp, tn) in enumerate(tables):
        for s, y, n in ((0.9, 1, tp), (0.1, 1, fn), (0.9, 0, fp), (0.1, 0, tn)):
            scores += [s] * n
            labels += [y] * n
            groups += [g] * n
    return EvalSet(np.array(scores), np.array(labels), np.array(groups), len(tables))


# AUC -------------------------------------------------------------------


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.4] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert auc([0.8, 0.6, 0.6, 0.2], [1, 1, 0, 0]) == 0.875


def test_auc_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [1, 1])


def test_midranks_share_ties():
    np.testing.assert_array_equal(midranks([3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0])


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 120))
        scores = rng.integers(0, 8, n) / 8.0 if rng.uniform() < 0.5 else rng.uniform(size=n)
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert abs(auc(scores, labels) - pair_count_auc(scores, labels)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 60))
def test_auc_invariant_under_monotone_transform(seed, n):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 10, n) / 10.0
    labels = np.arange(n) % 2
    base = auc(scores, labels)
    assert auc(np.exp(3 * scores) - 7, labels) == base
    assert auc(scores**3, labels) == base


# groups and PSD --------------------------------------------------------


def test_single_group_equals_overall():
    rng = np.random.default_rng(1)
    ev = EvalSet(rng.uniform(size=30), np.arange(30) % 2, np.zeros(30, int), 1)
    assert group_auc(ev) == {0: overall_auc(ev)}


def test_symmetric_groups_have_equal_auc():
    rng = np.random.default_rng(2)
    s = rng.uniform(size=20)
    y = np.arange(20) % 2
    ev = EvalSet(np.concatenate([s, s[::-1]]), np.concatenate([y, y[::-1]]), np.repeat([0, 1], 20), 2)
    ga = group_auc(ev)
    assert ga[0] == ga[1]


def test_group_lacking_positives_is_none():
    ev = EvalSet(np.array([0.2, 0.8, 0.3, 0.4]), np.array([0, 1, 0, 0]), np.array([0, 0, 1, 1]), 2)
    assert group_auc(ev)[1] is None


@pytest.mark.parametrize(
    "groups, overall, mean_expected, max_expected",
    [
        ((0.7642, 0.6855, 0.7857), 0.7910, 5.45, 12.67),
        ((0.8058, 0.7661), 0.7910, 2.51, 5.02),
    ],
)
def test_psd_reference_values(groups, overall, mean_expected, max_expected):
    assert mean_psd(groups, overall) == pytest.approx(mean_expected, abs=0.01)
    assert max_psd(groups, overall) == pytest.approx(max_expected, abs=0.01)


def test_psd_equal_groups_is_zero():
    assert mean_psd([0.7, 0.7, 0.7], 0.7) == 0.0
    assert max_psd([0.7, 0.7], 0.7) == 0.0


def test_psd_uses_population_std():
    # sample std would give 100 * 0.1414 / 0.5
    assert mean_psd([0.4, 0.6], 0.5) == pytest.approx(20.0)


def test_psd_preconditions():
    with pytest.raises(ValueError):
        mean_psd([0.7], 0.7)
    with pytest.raises(ValueError):
        max_psd([0.7, 0.6], 0.0)


@pytest.mark.parametrize("row", golden_rows(), ids=lambda r: f"t{r['table']}-{r['disease']}-{r['method']}")
def test_golden_psd_rows(row):
    perfs = [float(v) for v in row["group_aucs"].split(";")]
    overall = float(row["overall_auc"])
    assert mean_psd(perfs, overall) == pytest.approx(float(row["mean_psd"]), abs=0.02)
    assert max_psd(perfs, overall) == pytest.approx(float(row["max_psd"]), abs=0.02)


def test_golden_file_covers_all_tables():
    rows = golden_rows()
    assert {r["table"] for r in rows} == {"2", "3", "4", "5", "6", "7"}
    assert len(rows) == 63


# parity ----------------------------------------------------------------


def test_dpd_examples():
    assert dpd(ev_from_rates([0.4, 0.4])) == 0.0
    assert dpd(ev_from_rates([0.2, 0.5, 0.3])) == pytest.approx(0.3)
    assert dpd(ev_from_rates([1.0, 0.0])) == 1.0
    assert selection_rates(ev_from_rates([0.2, 0.5]))[1] == pytest.approx(0.5)


def test_threshold_is_inclusive():
    ev = EvalSet(np.array([0.5, 0.49]), np.array([1, 0]), np.array([0, 1]), 2)
    assert selection_rates(ev) == {0: 1.0, 1: 0.0}


def test_deo_examples():
    same = ev_from_tables([(3, 1, 1, 3), (3, 1, 1, 3)])
    assert deo(same) == 0.0
    assert deo(ev_from_tables([(9, 1, 0, 5), (6, 4, 0, 5)])) == pytest.approx(0.3)
    assert deo(ev_from_tables([(9, 1, 0, 5)])) == 0.0


def test_deodds_examples():
    assert deodds(ev_from_tables([(3, 1, 1, 3), (3, 1, 1, 3)])) == 0.0
    # TPR 0.9 vs 0.8 and FPR 0.25 vs 0.5
    assert deodds(ev_from_tables([(9, 1, 1, 3), (8, 2, 2, 2)])) == pytest.approx(0.25)
    assert deodds(ev_from_tables([(2, 0, 0, 2), (1, 1, 1, 1)])) == pytest.approx(0.5)


def test_deo_needs_positives_in_every_group():
    ev = ev_from_tables([(2, 1, 1, 1), (0, 0, 1, 2)])
    with pytest.raises(UndefinedMetricError):
        deo(ev)
    assert deo(ev, skip_undefined=True) == 0.0


# full report -----------------------------------------------------------


def test_symmetric_report_is_all_zero():
    base = [0.9, 0.8, 0.3, 0.2]
    ev = EvalSet(np.array(base * 2), np.array([1, 1, 0, 0] * 2), np.repeat([0, 1], 4), 2)
    rep = full_report(ev)
    assert (rep.dpd, rep.deo, rep.deodds, rep.mean_psd, rep.max_psd) == (0.0, 0.0, 0.0, 0.0, 0.0)
    assert rep.flags == ()


def test_report_on_constructed_scores_reproduces_reference_group_aucs():
    # 100 positives and 100 negatives per group; positive i outranks exactly c_i negatives,
    # so the group AUC is sum(c_i) / 10000 exactly
    def group_scores(pairs):
        counts = [pairs // 100 + (i < pairs % 100) for i in range(100)]
        return np.array([c - 0.5 for c in counts] + list(range(100)), dtype=float)

    targets = (7642, 6855, 7857)
    raw = np.concatenate([group_scores(t) for t in targets])
    scores = (raw + 0.5) / 100.0
    labels = np.tile([1] * 100 + [0] * 100, 3)
    rep = full_report(EvalSet(scores, labels, np.repeat([0, 1, 2], 200), 3))
    perfs = [rep.group_auc[g] for g in range(3)]
    assert perfs == pytest.approx([t / 10000 for t in targets], abs=1e-12)
    assert (rep.mean_psd, rep.max_psd) == recompute_psd(rep)
    assert mean_psd(perfs, 0.7910) == pytest.approx(5.45, abs=0.01)
    assert max_psd(perfs, 0.7910) == pytest.approx(12.67, abs=0.01)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), groups=st.integers(1, 4), n=st.integers(4, 80))
def test_report_psd_is_internally_consistent(seed, groups, n):
    rng = np.random.default_rng(seed)
    ev = EvalSet(rng.uniform(size=n), rng.integers(0, 2, n), rng.integers(0, groups, n), groups)
    rep = full_report(ev)
    assert (rep.mean_psd, rep.max_psd) == recompute_psd(rep)


def test_report_flags_undefined_group():
    ev = EvalSet(
        np.array([0.9, 0.2, 0.7, 0.1, 0.6, 0.4]),
        np.array([1, 0, 1, 0, 0, 0]),
        np.array([0, 0, 0, 0, 1, 1]),
        2,
    )
    rep = full_report(ev)
    assert rep.group_auc[1] is None
    assert "group_auc_undefined:g1" in rep.flags
    assert rep.mean_psd is None and any(f.startswith("psd_undefined") for f in rep.flags)
    assert "deo_excluded:g1" in rep.flags


def test_multiclass_report_uses_macro_reduction():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(60, 3))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    labels = np.arange(60) % 3
    ev = EvalSet(probs, labels, np.arange(60) % 2, 2)
    rep = full_report(ev)
    expected = np.mean([auc(probs[:, k], labels == k) for k in range(3)])
    assert rep.overall_auc == pytest.approx(expected, abs=1e-15)
    assert "multiclass_reduction" in rep.metadata


def test_from_predictions():
    preds = [ScoredPrediction(i, s, y, g) for i, (s, y, g) in enumerate([(0.9, 1, 0), (0.1, 0, 0), (0.6, 1, 1), (0.7, 0, 1)])]
    ev = EvalSet.from_predictions(preds, num_groups=2)
    assert group_auc(ev) == {0: 1.0, 1: 0.0}


def test_report_serialization(tmp_path):
    rng = np.random.default_rng(9)
    ev = EvalSet(rng.uniform(size=40), np.arange(40) % 2, np.arange(40) % 2, 2, group_names=("a", "b"))
    rep = full_report(ev)
    loaded = MetricsReport.from_dict(json.loads(write_report_json(rep, tmp_path / "r.json").read_text()))
    assert loaded.metric_values() == rep.metric_values()
    with open(write_report_csv(rep, tmp_path / "r.csv"), newline="") as fh:
        header, row = list(csv.reader(fh))
    assert header == rep.csv_header()
    assert float(row[0]) == rep.overall_auc
