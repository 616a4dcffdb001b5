"""Tests for dataset loading, synthesis, splitting, and submission files."""

import math

import numpy as np
import pytest

from amscascade.data import (
    CsvSchema,
    SplitSpec,
    SynthConfig,
    WeightedDataset,
    default_synth_config,
    load_csv,
    read_submission,
    split,
    synthesize,
    write_csv,
    write_submission,
)
from amscascade.errors import ConfigError, DataError


def tiny_dataset():
    return WeightedDataset(
        features=np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]),
        labels=np.array([1, -1, 1, -1]),
        weights=np.array([2.0, 3.0, 1.0, 5.0]),
        event_ids=np.array([10, 11, 12, 13]),
        column_names=("a", "b"),
    )


CSV_TEXT = """EventId,a,b,Weight,Label
100,1.5,2.5,1.0,s
101,-999.0,0.25,2.0,b
"""


class TestWeightedDataset:
    def test_totals(self):
        data = tiny_dataset()
        assert data.signal_total == 3.0
        assert data.background_total == 8.0
        assert data.n == 4
        assert data.d == 2

    def test_arrays_are_read_only(self):
        data = tiny_dataset()
        with pytest.raises(ValueError):
            data.weights[0] = 9.0
        with pytest.raises(ValueError):
            data.features[0, 0] = 9.0

    def test_invariants_enforced(self):
        good = tiny_dataset()
        with pytest.raises(DataError):
            WeightedDataset(
                features=good.features,
                labels=np.array([1, -1, 2, -1]),
                weights=good.weights,
                event_ids=good.event_ids,
                column_names=good.column_names,
            )
        with pytest.raises(DataError):
            WeightedDataset(
                features=good.features,
                labels=good.labels,
                weights=np.array([2.0, 0.0, 1.0, 5.0]),
                event_ids=good.event_ids,
                column_names=good.column_names,
            )
        with pytest.raises(DataError):
            WeightedDataset(
                features=good.features,
                labels=good.labels,
                weights=good.weights,
                event_ids=np.array([10, 10, 12, 13]),
                column_names=good.column_names,
            )
        with pytest.raises(DataError):
            WeightedDataset(
                features=good.features,
                labels=good.labels,
                weights=good.weights,
                event_ids=good.event_ids,
                column_names=("a",),
            )


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        path = tmp_path / "toy.csv"
        path.write_text(CSV_TEXT)
        data = load_csv(str(path))
        assert data.n == 2
        assert data.column_names == ("a", "b")
        assert list(data.labels) == [1, -1]
        assert list(data.event_ids) == [100, 101]
        assert data.signal_total == 1.0
        # -999.0 is the missing marker
        assert math.isnan(data.features[1, 0])
        assert data.features[1, 1] == 0.25

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("EventId,a,Label\n1,2.0,s\n")
        with pytest.raises(DataError, match="weight column"):
            load_csv(str(path))

    def test_nonpositive_weight_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("EventId,a,Weight,Label\n1,2.0,1.0,s\n2,3.0,0.0,b\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv(str(path))

    def test_unparseable_numeric_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("EventId,a,Weight,Label\n1,oops,1.0,s\n")
        with pytest.raises(DataError, match="line 2"):
            load_csv(str(path))

    def test_bad_label_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("EventId,a,Weight,Label\n1,2.0,1.0,signal\n")
        with pytest.raises(DataError, match="'s' or 'b'"):
            load_csv(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(str(tmp_path / "absent.csv"))

    def test_explicit_feature_subset(self, tmp_path):
        path = tmp_path / "toy.csv"
        path.write_text(CSV_TEXT)
        data = load_csv(str(path), CsvSchema(feature_columns=("b",)))
        assert data.column_names == ("b",)
        assert data.features.shape == (2, 1)

    def test_round_trip_is_content_stable(self, tmp_path):
        first = tmp_path / "one.csv"
        second = tmp_path / "two.csv"
        first.write_text(CSV_TEXT)
        data = load_csv(str(first))
        write_csv(data, str(second))
        again = load_csv(str(second))
        np.testing.assert_array_equal(again.labels, data.labels)
        np.testing.assert_array_equal(again.event_ids, data.event_ids)
        np.testing.assert_array_equal(again.weights, data.weights)
        np.testing.assert_array_equal(again.features, data.features)
        # a second write produces identical bytes
        third = tmp_path / "three.csv"
        write_csv(again, str(third))
        assert second.read_bytes() == third.read_bytes()


class TestSplit:
    def test_partition_disjoint_exhaustive(self):
        data = synthesize(SynthConfig(n_signal=50, n_background=70), seed=3)
        train, val = split(data, SplitSpec(validation_fraction=0.3, seed=9))
        ids = np.concatenate([train.event_ids, val.event_ids])
        assert np.array_equal(np.sort(ids), np.sort(data.event_ids))
        assert np.intersect1d(train.event_ids, val.event_ids).size == 0

    def test_renormalization_preserves_class_totals(self):
        data = synthesize(
            SynthConfig(n_signal=40, n_background=60, signal_total=100.0, background_total=200.0),
            seed=5,
        )
        train, val = split(data, SplitSpec(validation_fraction=0.5, seed=1))
        for part in (train, val):
            np.testing.assert_allclose(part.signal_total, 100.0, rtol=1e-9)
            np.testing.assert_allclose(part.background_total, 200.0, rtol=1e-9)

    def test_without_renormalization_totals_split(self):
        data = synthesize(SynthConfig(n_signal=40, n_background=60), seed=5)
        train, val = split(
            data, SplitSpec(validation_fraction=0.5, seed=1, renormalize=False)
        )
        np.testing.assert_allclose(
            train.signal_total + val.signal_total, data.signal_total, rtol=1e-12
        )

    def test_deterministic(self):
        data = synthesize(SynthConfig(n_signal=30, n_background=30), seed=2)
        spec = SplitSpec(validation_fraction=0.4, seed=77)
        t1, v1 = split(data, spec)
        t2, v2 = split(data, spec)
        np.testing.assert_array_equal(t1.event_ids, t2.event_ids)
        np.testing.assert_array_equal(v1.event_ids, v2.event_ids)

    def test_both_classes_on_both_sides_extreme_fraction(self):
        data = synthesize(SynthConfig(n_signal=2, n_background=2), seed=1)
        train, val = split(data, SplitSpec(validation_fraction=0.99, seed=4))
        for part in (train, val):
            assert np.any(part.labels == 1)
            assert np.any(part.labels == -1)

    def test_too_few_examples(self):
        data = WeightedDataset(
            features=np.array([[0.0], [1.0], [2.0]]),
            labels=np.array([1, -1, -1]),
            weights=np.ones(3),
            event_ids=np.arange(3),
            column_names=("x",),
        )
        with pytest.raises(DataError):
            split(data, SplitSpec(validation_fraction=0.5, seed=0))

    def test_bad_fraction(self):
        with pytest.raises(ConfigError):
            SplitSpec(validation_fraction=1.0, seed=0)
        with pytest.raises(ConfigError):
            SplitSpec(validation_fraction=0.0, seed=0)


class TestSynthesize:
    def test_per_class_weights_from_totals(self):
        config = SynthConfig(
            n_signal=1000, n_background=1000, signal_total=691.0, background_total=410999.0
        )
        data = synthesize(config, seed=0)
        sig_w = np.unique(data.weights[data.labels == 1])
        bg_w = np.unique(data.weights[data.labels == -1])
        np.testing.assert_allclose(sig_w, [0.691], rtol=1e-15)
        np.testing.assert_allclose(bg_w, [410.999], rtol=1e-15)

    def test_deterministic(self):
        config = default_synth_config()
        a = synthesize(config, seed=11)
        b = synthesize(config, seed=11)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.weights, b.weights)
        c = synthesize(config, seed=12)
        assert not np.array_equal(a.features, c.features)

    def test_mean_separation(self):
        config = SynthConfig(n_signal=20000, n_background=20000, separation=2.0)
        data = synthesize(config, seed=6)
        mu_s = data.features[data.labels == 1].mean(axis=0)
        mu_b = data.features[data.labels == -1].mean(axis=0)
        gap = float(np.linalg.norm(mu_s - mu_b))
        assert abs(gap - 2.0) < 0.05

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SynthConfig(n_signal=0)
        with pytest.raises(ConfigError):
            SynthConfig(signal_total=-1.0)
        with pytest.raises(ConfigError):
            SynthConfig(d=0)
        with pytest.raises(ConfigError):
            SynthConfig(separation=-0.1)


class TestSubmission:
    def test_rank_by_ascending_score(self, tmp_path):
        path = tmp_path / "sub.csv"
        write_submission(
            str(path), [7, 8, 9], [0.1, 0.9, 0.5], [-1, 1, 1]
        )
        ids, ranks, sel = read_submission(str(path))
        np.testing.assert_array_equal(ids, [7, 8, 9])
        np.testing.assert_array_equal(ranks, [1, 3, 2])
        np.testing.assert_array_equal(sel, [-1, 1, 1])

    def test_ties_break_to_lower_event_id(self, tmp_path):
        path = tmp_path / "sub.csv"
        write_submission(str(path), [20, 10, 30], [0.5, 0.5, 0.5], [1, 1, 1])
        ids, ranks, _ = read_submission(str(path))
        by_id = dict(zip(ids.tolist(), ranks.tolist()))
        assert by_id[10] == 1 and by_id[20] == 2 and by_id[30] == 3

    def test_exact_bytes(self, tmp_path):
        path = tmp_path / "sub.csv"
        write_submission(str(path), [1, 2], [0.25, 0.125], [1, -1])
        assert path.read_bytes() == b"EventId,RankOrder,Class\n1,2,s\n2,1,b\n"

    def test_duplicate_ids_rejected(self, tmp_path):
        with pytest.raises(DataError):
            write_submission(str(tmp_path / "s.csv"), [1, 1], [0.1, 0.2], [1, -1])

    def test_round_trip_ranks(self, tmp_path):
        rng = np.random.default_rng(42)
        ids = rng.permutation(500) + 1000
        scores = rng.standard_normal(500)
        sel = rng.choice([-1, 1], 500)
        path = tmp_path / "sub.csv"
        write_submission(str(path), ids, scores, sel)
        back_ids, back_ranks, back_sel = read_submission(str(path))
        np.testing.assert_array_equal(back_ids, ids)
        np.testing.assert_array_equal(back_sel, sel)
        # ranks agree with an independent argsort
        order = np.lexsort((ids, scores))
        expect = np.empty(500, dtype=int)
        expect[order] = np.arange(1, 501)
        np.testing.assert_array_equal(back_ranks, expect)
