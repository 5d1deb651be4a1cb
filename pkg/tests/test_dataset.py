import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from epl.dataset import (Dataset, DatasetError, LabelVector, Role, SplitError,
                         UNLABELED, generate_blobs, load_features, load_split,
                         merge_labels, save_features, save_split, split_replicas,
                         stratified_split)


def random_dataset(rng, n_classes=None, per_class=None, d=None):
    n_classes = n_classes or int(rng.integers(2, 5))
    per_class = per_class or int(rng.integers(5, 30))
    d = d or int(rng.integers(1, 6))
    feats = rng.normal(size=(n_classes * per_class, d))
    labels = np.repeat(np.arange(n_classes), per_class)
    return Dataset(feats, labels, n_classes)


class TestIngestion:
    def test_parse_small_file_with_labels(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("# d=2 labels=1 k=2\n0.0,1.0,0\n1.5,2.5,1\n3.0,4.0,0\n5.0,6.0,1\n")
        ds = load_features(path)
        assert ds.sample_count == 4 and ds.dim == 2 and ds.class_count == 2
        assert ds.labels.tolist() == [0, 1, 0, 1]
        assert ds.features[1].tolist() == [1.5, 2.5]

    def test_nan_cell_reports_position(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# d=2 labels=0 k=0\n0.0,1.0\nNaN,2.0\n3.0,4.0\n")
        with pytest.raises(DatasetError, match="row 1, column 0"):
            load_features(path)

    def test_inconsistent_column_count_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# d=2 labels=0 k=0\n0.0,1.0\n1.0\n")
        with pytest.raises(DatasetError, match="line 3"):
            load_features(path)

    def test_missing_file(self):
        with pytest.raises(DatasetError, match="no such file"):
            load_features("/nonexistent/nowhere.csv")

    @pytest.mark.parametrize("fmt", ["text", "binary"])
    def test_round_trip_100_random_datasets(self, tmp_path, fmt):
        rng = np.random.default_rng(0)
        for trial in range(100):
            ds = random_dataset(rng)
            path = tmp_path / f"ds_{fmt}_{trial}"
            save_features(ds, path, fmt)
            back = load_features(path, fmt)
            assert np.array_equal(back.features, ds.features)
            assert np.array_equal(back.labels, ds.labels)

    def test_round_trip_unlabeled(self, tmp_path):
        rng = np.random.default_rng(1)
        ds = Dataset(rng.normal(size=(7, 3)), None, 0)
        for fmt in ("text", "binary"):
            path = tmp_path / f"u.{fmt}"
            save_features(ds, path, fmt)
            back = load_features(path)  # sniffed format
            assert np.array_equal(back.features, ds.features)
            assert back.labels is None


class TestBlobs:
    def test_separated_blob_construction(self):
        ds = generate_blobs(2, 50, 2, 0.1, 10.0, seed=7)
        assert ds.sample_count == 100 and ds.class_count == 2
        centers = np.array([ds.features[ds.labels == c].mean(axis=0) for c in range(2)])
        assert np.linalg.norm(centers[0] - centers[1]) >= 10.0 - 1.0

    def test_determinism(self):
        a = generate_blobs(3, 20, 4, 0.5, 8.0, seed=13)
        b = generate_blobs(3, 20, 4, 0.5, 8.0, seed=13)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_overlapping_blobs_confuse_nearest_neighbour(self):
        # 1-NN leave-one-out oracle on heavily overlapped classes
        ds = generate_blobs(3, 60, 2, 5.0, 1.0, seed=5)
        dist = cdist(ds.features, ds.features)
        np.fill_diagonal(dist, np.inf)
        nearest = ds.labels[np.argmin(dist, axis=1)]
        assert (nearest == ds.labels).mean() < 0.9

    def test_invalid_parameters(self):
        with pytest.raises(DatasetError):
            generate_blobs(1, 10, 2, 0.5, 5.0, seed=0)
        with pytest.raises(DatasetError):
            generate_blobs(2, 10, 2, -1.0, 5.0, seed=0)

    def test_finiteness_required(self):
        feats = np.ones((3, 2))
        feats[2, 1] = np.inf
        with pytest.raises(DatasetError, match="row 2, column 1"):
            Dataset(feats, None, 0)


class TestStratifiedSplit:
    def test_paper_scale_supervised_count(self):
        # 8 classes, 1668 samples: ceil(0.01 * 1668) = 17 supervised
        counts = [348, 80, 148, 122, 337, 375, 122, 136]
        assert sum(counts) == 1668
        labels = np.repeat(np.arange(8), counts)
        rng = np.random.default_rng(3)
        ds = Dataset(rng.normal(size=(1668, 4)), labels, 8)
        split = stratified_split(ds, 0.01, 0.69, 0.30, seed=1)
        assert split.supervised.size == 17
        assert split.supervised.size + split.unsupervised.size + split.test.size == 1668

    def test_balanced_300_counts(self):
        labels = np.repeat(np.arange(3), 100)
        ds = Dataset(np.random.default_rng(0).normal(size=(300, 2)), labels, 3)
        split = stratified_split(ds, 0.01, 0.69, 0.30, seed=9)
        assert split.supervised.size == 3
        assert split.test.size == 90
        assert split.unsupervised.size == 207
        # one supervised sample per class
        assert sorted(ds.labels[split.supervised].tolist()) == [0, 1, 2]

    def test_determinism(self):
        rng = np.random.default_rng(4)
        ds = random_dataset(rng, n_classes=4, per_class=25)
        a = stratified_split(ds, 0.05, 0.65, 0.30, seed=21)
        b = stratified_split(ds, 0.05, 0.65, 0.30, seed=21)
        assert np.array_equal(a.roles, b.roles)
        c = stratified_split(ds, 0.05, 0.65, 0.30, seed=22)
        assert not np.array_equal(a.roles, c.roles)

    def test_properties_over_200_random_datasets(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            k = int(rng.integers(2, 6))
            counts = rng.integers(12, 60, k)
            labels = np.repeat(np.arange(k), counts)
            n = labels.size
            ds = Dataset(rng.normal(size=(n, 3)), labels, k)
            split = stratified_split(ds, 0.05, 0.65, 0.30, int(rng.integers(0, 1 << 30)))
            roles = split.roles
            # roles partition all indices
            assert roles.size == n
            assert np.isin(roles, [0, 1, 2]).all()
            # every class supervised at least once, present in every part
            for c in range(k):
                mask = ds.labels == c
                for role in Role:
                    assert (roles[mask] == int(role)).sum() >= 1
            # stratification bound per class and part
            for role in Role:
                part = np.flatnonzero(roles == int(role))
                for c in range(k):
                    part_frac = (ds.labels[part] == c).mean()
                    global_frac = (ds.labels == c).mean()
                    assert abs(part_frac - global_frac) <= 1.0 / part.size + 1.0 / n

    def test_replicas_use_consecutive_seeds(self):
        rng = np.random.default_rng(5)
        ds = random_dataset(rng, n_classes=3, per_class=30)
        reps = split_replicas(ds, 0.05, 0.65, 0.30, base_seed=100, replicas=3)
        assert [r.seed for r in reps] == [100, 101, 102]
        single = stratified_split(ds, 0.05, 0.65, 0.30, seed=101)
        assert np.array_equal(reps[1].roles, single.roles)

    def test_class_too_small(self):
        labels = np.array([0, 0, 1, 1, 1, 1, 1, 1, 1, 1])
        ds = Dataset(np.random.default_rng(0).normal(size=(10, 2)), labels, 2)
        with pytest.raises(SplitError, match="at least 3"):
            stratified_split(ds, 0.1, 0.6, 0.30, seed=0)

    def test_unlabeled_dataset_rejected(self):
        ds = Dataset(np.zeros((10, 2)), None, 0)
        with pytest.raises(SplitError):
            stratified_split(ds, 0.1, 0.6, 0.3, seed=0)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_fraction_validation(self, seed):
        ds = Dataset(np.arange(60, dtype=float).reshape(30, 2),
                     np.repeat([0, 1, 2], 10), 3)
        with pytest.raises(SplitError):
            stratified_split(ds, 0.5, 0.5, 0.5, seed=seed)

    def test_split_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        ds = random_dataset(rng, n_classes=3, per_class=20)
        split = stratified_split(ds, 0.05, 0.65, 0.30, seed=17)
        path = tmp_path / "split.csv"
        save_split(split, path)
        back = load_split(path)
        assert np.array_equal(back.roles, split.roles)
        assert back.seed == split.seed
        assert back.fractions == pytest.approx(split.fractions)


class TestMergeLabels:
    def test_direct_merge(self):
        from epl.dataset import SplitAssignment
        split = SplitAssignment(np.array([0, 1, 1], dtype=np.uint8), 0, (0.34, 0.33, 0.33))
        true_s = LabelVector(np.array([0, UNLABELED, UNLABELED]), np.zeros(3, dtype=np.uint8))
        pseudo = LabelVector(np.array([UNLABELED, 1, 0]), np.ones(3, dtype=np.uint8))
        merged = merge_labels(split, true_s, pseudo)
        assert merged.values.tolist() == [0, 1, 0]
        assert merged.provenance.tolist() == [0, 1, 1]

    def test_empty_unsupervised(self):
        from epl.dataset import SplitAssignment
        split = SplitAssignment(np.array([0, 0, 2], dtype=np.uint8), 0, (0.4, 0.3, 0.3))
        true_s = LabelVector(np.array([1, 0, UNLABELED]), np.zeros(3, dtype=np.uint8))
        pseudo = LabelVector.unlabeled(3)
        merged = merge_labels(split, true_s, pseudo)
        assert merged.values.tolist() == [1, 0, UNLABELED]

    def test_test_indices_stay_unlabeled(self):
        from epl.dataset import SplitAssignment
        split = SplitAssignment(np.array([0, 1, 2], dtype=np.uint8), 0, (0.34, 0.33, 0.33))
        true_s = LabelVector(np.array([0, UNLABELED, UNLABELED]), np.zeros(3, dtype=np.uint8))
        pseudo = LabelVector(np.array([UNLABELED, 1, 1]), np.ones(3, dtype=np.uint8))
        merged = merge_labels(split, true_s, pseudo)
        assert merged.values[2] == UNLABELED

    def test_missing_pseudo_label_is_an_error(self):
        from epl.dataset import SplitAssignment
        split = SplitAssignment(np.array([0, 1, 1], dtype=np.uint8), 0, (0.34, 0.33, 0.33))
        true_s = LabelVector(np.array([0, UNLABELED, UNLABELED]), np.zeros(3, dtype=np.uint8))
        pseudo = LabelVector(np.array([UNLABELED, 1, UNLABELED]), np.ones(3, dtype=np.uint8))
        with pytest.raises(DatasetError, match="unsupervised index 2"):
            merge_labels(split, true_s, pseudo)
