import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairscaling.core import Dataset, MetricsReport, Sample, ScoredPrediction, split_dataset


def make_dataset(n, d=3, groups=2, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        ids=np.arange(100, 100 + n),
        features=rng.normal(size=(n, d)),
        labels=rng.integers(0, 2, n),
        groups=np.arange(n) % groups,
        num_classes=2,
        num_groups=groups,
    )


def test_dataset_is_read_only():
    ds = make_dataset(10)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0
    with pytest.raises(Exception):
        ds.num_groups = 3


def test_dataset_validation():
    with pytest.raises(ValueError, match="unique"):
        Dataset(ids=[1, 1], features=[[0.0], [1.0]], labels=[0, 1], groups=[0, 0], num_classes=2, num_groups=1)
    with pytest.raises(ValueError, match="labels"):
        Dataset(ids=[1, 2], features=[[0.0], [1.0]], labels=[0, 2], groups=[0, 0], num_classes=2, num_groups=1)
    with pytest.raises(ValueError, match="groups"):
        Dataset(ids=[1, 2], features=[[0.0], [1.0]], labels=[0, 1], groups=[0, 1], num_classes=2, num_groups=1)
    with pytest.raises(ValueError, match="matching"):
        Dataset(ids=[1, 2], features=[[0.0]], labels=[0, 1], groups=[0, 0], num_classes=2, num_groups=1)


def test_from_samples_roundtrip_and_dimension_check():
    samples = [Sample(5, (1.0, 2.0), 1, 0), Sample(7, (3.0, 4.0), 0, 1)]
    ds = Dataset.from_samples(samples, num_classes=2, num_groups=2, group_names=("A", "B"))
    assert ds.samples == tuple(samples)
    assert ds.feature_dim == 2
    assert ds.group_names == ("A", "B")
    with pytest.raises(ValueError, match="feature dimension"):
        Dataset.from_samples([Sample(1, (1.0,), 0, 0), Sample(2, (1.0, 2.0), 1, 0)], 2, 1)


def test_require_all_groups():
    ds = Dataset(ids=[1, 2], features=[[0.0], [1.0]], labels=[0, 1], groups=[0, 0], num_classes=2, num_groups=2)
    assert ds.missing_groups() == [1]
    with pytest.raises(ValueError):
        ds.require_all_groups()


@pytest.mark.parametrize(
    "n, expected",
    [(10_000, (6000, 1000, 3000)), (10, (6, 1, 3))],
)
def test_split_sizes(n, expected):
    train, val, test = split_dataset(make_dataset(n), (0.6, 0.1, 0.3), seed=0)
    assert (len(train), len(val), len(test)) == expected


def test_split_remainder_goes_to_train():
    train, val, test = split_dataset(make_dataset(7), (0.6, 0.1, 0.3), seed=0)
    # floor(0.7) = 0 validation, floor(2.1) = 2 test
    assert (len(train), len(val), len(test)) == (5, 0, 2)


def test_split_determinism():
    ds = make_dataset(50)
    a = split_dataset(ds, (0.6, 0.1, 0.3), seed=11)
    b = split_dataset(ds, (0.6, 0.1, 0.3), seed=11)
    c = split_dataset(ds, (0.6, 0.1, 0.3), seed=12)
    assert all(np.array_equal(x.ids, y.ids) for x, y in zip(a, b))
    assert any(set(x.ids) != set(y.ids) for x, y in zip(a, c))


def test_split_errors():
    ds = make_dataset(10)
    with pytest.raises(ValueError, match="sum to 1"):
        split_dataset(ds, (0.6, 0.1, 0.2), seed=0)
    with pytest.raises(ValueError, match="positive"):
        split_dataset(ds, (1.2, -0.1, -0.1), seed=0)
    with pytest.raises(ValueError, match="empty"):
        split_dataset(ds.subset(np.array([], dtype=np.int64)), (0.6, 0.1, 0.3), seed=0)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 300), seed=st.integers(0, 2**31))
def test_split_is_a_partition(n, seed):
    ds = make_dataset(n)
    parts = split_dataset(ds, (0.6, 0.1, 0.3), seed=seed)
    ids = [set(p.ids.tolist()) for p in parts]
    assert set().union(*ids) == set(ds.ids.tolist())
    assert sum(len(p) for p in parts) == n
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])


def test_scored_prediction_invariants():
    ScoredPrediction(1, 0.3, 1, 0)
    ScoredPrediction(1, (0.2, 0.3, 0.5), 2, 0)
    with pytest.raises(ValueError):
        ScoredPrediction(1, 1.3, 1, 0)
    with pytest.raises(ValueError):
        ScoredPrediction(1, (0.2, 0.3, 0.6), 2, 0)


def test_metrics_report_dict_roundtrip_and_csv_columns():
    rep = MetricsReport(
        overall_auc=0.8,
        group_auc={0: 0.7, 1: None},
        mean_psd=None,
        max_psd=None,
        dpd=0.1,
        deo=0.2,
        deodds=0.3,
        threshold_used=0.5,
        flags=("group_auc_undefined:g1",),
    )
    again = MetricsReport.from_dict(rep.to_dict())
    assert again.to_dict() == rep.to_dict()
    assert rep.csv_header() == [
        "overall_auc", "auc_g0", "auc_g1", "mean_psd", "max_psd", "dpd", "deo", "deodds", "threshold", "flags",
    ]
    assert rep.csv_row()[2] == ""
