from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedids.data import (
    CIC_SCHEMA,
    FlowDataset,
    SplitSpec,
    SynthSpec,
    load_flow_csv,
    map_label,
    split,
    synth_generate,
    synthetic_schema,
)
from fedids.errors import (
    CapacityError,
    ConfigError,
    EmptyInputError,
    SchemaError,
)

FIXTURES = Path(__file__).parent / "fixtures"


class TestSchema:
    def test_cic_schema_width(self):
        assert len(CIC_SCHEMA.column_names) == 80
        assert CIC_SCHEMA.feature_count == 75
        assert set(CIC_SCHEMA.dropped_columns) == {
            "Dst Port", "Timestamp", "Flow Byts/s", "Flow Pkts/s", "Label",
        }

    def test_synthetic_schema(self):
        schema = synthetic_schema(75)
        assert schema.feature_count == 75
        assert schema.label_column == "Label"

    def test_dropped_must_exist(self):
        from fedids.data import FeatureSchema

        with pytest.raises(SchemaError):
            FeatureSchema(("a", "b"), ("missing",))


class TestLoadCsv:
    def test_label_mapping(self):
        ds = load_flow_csv(FIXTURES / "cic2018_small.csv")
        assert ds.features.shape == (6, 75)
        np.testing.assert_array_equal(ds.labels, [0, 1, 0, 1, 0, 0])
        assert ds.dropped_rows == 0

    def test_2017_aliases_resolve(self):
        ds = load_flow_csv(FIXTURES / "cic2017_alias.csv")
        assert ds.features.shape == (3, 75)
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])

    def test_dirty_rows_dropped_and_counted(self):
        ds = load_flow_csv(FIXTURES / "cic_dirty.csv")
        assert ds.features.shape == (2, 75)
        assert ds.dropped_rows == 2
        assert np.isfinite(ds.features).all()

    def test_unlabeled_file(self):
        ds = load_flow_csv(FIXTURES / "mawi_unlabeled.csv")
        assert ds.labels is None
        assert ds.features.shape == (5, 75)

    def test_missing_feature_column(self, tmp_path):
        p = tmp_path / "short.csv"
        p.write_text("Flow Duration,Label\n1.0,Benign\n")
        with pytest.raises(SchemaError):
            load_flow_csv(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(EmptyInputError):
            load_flow_csv(p)

    def test_idempotent(self):
        a = load_flow_csv(FIXTURES / "cic2018_small.csv")
        b = load_flow_csv(FIXTURES / "cic2018_small.csv")
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    @given(st.text(min_size=1, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_label_mapping_is_total_binary(self, label):
        assert map_label(label) in (0, 1)
        if label.strip().lower() != "benign":
            assert map_label(label) == 1

    def test_benign_spellings(self):
        assert map_label("Benign") == 0
        assert map_label("BENIGN") == 0
        assert map_label(" benign ") == 0
        assert map_label("DoS Hulk") == 1


def toy_dataset(n_benign=10, n_attack=10, seed=0):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n_benign + n_attack, 4))
    labels = np.concatenate([np.zeros(n_benign, int), np.ones(n_attack, int)])
    return FlowDataset(features, labels, synthetic_schema(4), name="toy")


class TestSplit:
    def test_counts_and_disjoint(self):
        ds = toy_dataset(4, 2)
        parts = split(ds, SplitSpec(2, 1, 1, 1, 1, seed=5))
        assert parts.ae_train.n_rows == 2
        assert parts.clf_train.n_rows == 2
        assert parts.test.n_rows == 2
        assert np.all(parts.ae_train.labels == 0)
        fp = np.vstack(
            [parts.ae_train.features, parts.clf_train.features, parts.test.features]
        )
        # all six source rows used exactly once
        assert len({tuple(r) for r in fp}) == 6

    def test_deterministic_under_seed(self):
        ds = toy_dataset(20, 20)
        spec = SplitSpec(5, 4, 4, 3, 3, seed=9)
        a, b = split(ds, spec), split(ds, spec)
        np.testing.assert_array_equal(a.ae_train.features, b.ae_train.features)
        np.testing.assert_array_equal(a.clf_train.features, b.clf_train.features)
        np.testing.assert_array_equal(a.test.features, b.test.features)

    def test_capacity_error_names_class(self):
        ds = toy_dataset(5, 2)
        with pytest.raises(CapacityError, match="attack"):
            split(ds, SplitSpec(1, 1, 5, 0, 0))
        with pytest.raises(CapacityError, match="benign"):
            split(ds, SplitSpec(10, 0, 0, 0, 0))

    def test_clf_split_balanced_when_counts_equal(self):
        ds = toy_dataset(30, 30)
        parts = split(ds, SplitSpec(5, 10, 10, 0, 0, seed=1))
        assert int((parts.clf_train.labels == 0).sum()) == 10
        assert int((parts.clf_train.labels == 1).sum()) == 10

    def test_unlabeled_source(self):
        ds = FlowDataset(np.ones((6, 3)), None, synthetic_schema(3), "u")
        parts = split(ds, SplitSpec(ae_train_benign=4, test_benign=2))
        assert parts.ae_train.labels is None
        assert parts.clf_train is None
        # test rows materialize as benign for evaluation
        np.testing.assert_array_equal(parts.test.labels, [0, 0])

    def test_unlabeled_cannot_give_clf_rows(self):
        ds = FlowDataset(np.ones((6, 3)), None, synthetic_schema(3), "u")
        with pytest.raises(CapacityError):
            split(ds, SplitSpec(ae_train_benign=1, clf_train_benign=2))

    def test_zero_clf_returns_none(self):
        ds = toy_dataset(4, 4)
        parts = split(ds, SplitSpec(ae_train_benign=2))
        assert parts.clf_train is None
        assert parts.test is None


class TestSynth:
    def test_zero_attack_fraction_all_benign(self):
        (ds,) = synth_generate([SynthSpec("a", n_benign=50, n_features=5)], seed=3)
        assert ds.n_rows == 50
        assert np.all(ds.labels == 0)

    def test_labels_and_width(self):
        (ds,) = synth_generate(
            [SynthSpec("a", n_benign=30, n_attack=20, attack_offset=1.0)], seed=3
        )
        assert ds.features.shape == (50, 75)
        assert int(ds.labels.sum()) == 20

    def test_deterministic_per_name(self):
        spec = SynthSpec("alpha", n_benign=40, n_attack=10, attack_offset=0.5)
        (a,) = synth_generate([spec], seed=11)
        (b,) = synth_generate([spec], seed=11)
        np.testing.assert_array_equal(a.features, b.features)
        # independent of sibling specs in the same call
        (c, _) = synth_generate(
            [spec, SynthSpec("other", n_benign=5, n_features=75)], seed=11
        )
        np.testing.assert_array_equal(a.features, c.features)

    def test_disjoint_centers_shift_feature_means(self):
        n = 10_000
        a, b = synth_generate(
            [
                SynthSpec("a", n_benign=n, center=0.0, scale=1.0, n_features=8),
                SynthSpec("b", n_benign=n, center=2.5, scale=1.0, n_features=8),
            ],
            seed=21,
        )
        diff = b.features.mean(axis=0) - a.features.mean(axis=0)
        # sample means differ by the configured offset within 3 sigma/sqrt(n)
        tol = 3.0 * np.sqrt(2.0) / np.sqrt(n)
        assert np.all(np.abs(diff - 2.5) < tol)

    def test_zero_offset_is_indistinguishable(self):
        # degenerate case: attack distribution identical to benign, so a
        # linear separator cannot beat chance
        (ds,) = synth_generate(
            [SynthSpec("a", n_benign=4000, n_attack=4000, attack_offset=0.0,
                       n_features=10)],
            seed=5,
        )
        from numpy.linalg import lstsq

        x = np.hstack([ds.features, np.ones((ds.n_rows, 1))])
        y = ds.labels.astype(float)
        w, *_ = lstsq(x, y - y.mean(), rcond=None)
        scores = x @ w
        # AUC by rank comparison
        pos = scores[ds.labels == 1]
        neg = scores[ds.labels == 0]
        auc = np.mean(pos[None, :] > neg[:, None])
        assert abs(auc - 0.5) < 0.05

    def test_unlabeled_spec(self):
        (ds,) = synth_generate(
            [SynthSpec("m", n_benign=10, labeled=False, n_features=5)], seed=1
        )
        assert ds.labels is None

    def test_bad_covariance_rejected(self):
        bad = [[1.0, 2.0], [2.0, 1.0]]  # not positive definite
        with pytest.raises(ConfigError):
            synth_generate(
                [SynthSpec("a", n_benign=5, cov=bad, n_features=2)], seed=0
            )

    def test_unlabeled_with_attacks_rejected(self):
        with pytest.raises(ConfigError):
            SynthSpec("a", n_benign=5, n_attack=5, labeled=False)

    def test_cluster_mixture(self):
        (ds,) = synth_generate(
            [SynthSpec("a", n_benign=99, n_clusters=3, cluster_spread=5.0,
                       scale=0.1, n_features=6)],
            seed=2,
        )
        assert ds.n_rows == 99
        # spread clusters push the per-feature variance well above noise
        assert ds.features.var(axis=0).mean() > 1.0
