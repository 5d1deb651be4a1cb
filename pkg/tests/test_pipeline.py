import hashlib

import numpy as np
import pytest

import epl.pipeline as pipeline
from epl.config import ExperimentConfig
from epl.dataset import (LabelVector, Role, SplitAssignment, UNLABELED,
                         generate_blobs, merge_labels, stratified_split)
from epl.pipeline import (PipelineError, ResultRow, RunState, aggregate_rows,
                          correlation_report, read_results_csv, run_c1, run_c2,
                          run_c3, run_experiment, spearman, write_results_csv)
from epl.probe import SoftmaxConfig, predict, train_softmax


def small_config(out_dir, **overrides):
    base = dict(classes=3, per_class=50, dims=6, spread=0.8, center_dist=10.0,
                s_frac=0.06, u_frac=0.64, t_frac=0.30,
                base_seed=7, replicas=3, epochs=4, batch_size=32,
                iterations=120, exaggeration_iters=30, momentum_switch=30,
                perplexity=12.0, out_dir=str(out_dir))
    base.update(overrides)
    return ExperimentConfig(**base)


def rank_sum_spearman_oracle(a, b):
    """Rank by counting, average ties, then the Pearson formula by sums."""
    def ranks(v):
        out = []
        for x in v:
            below = sum(1 for y in v if y < x)
            equal = sum(1 for y in v if y == x)
            out.append(below + (equal + 1) / 2.0)
        return out

    ra, rb = ranks(a), ranks(b)
    n = len(ra)
    ma = sum(ra) / n
    mb = sum(rb) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    den = (sum((x - ma) ** 2 for x in ra) * sum((y - mb) ** 2 for y in rb)) ** 0.5
    return num / den


class TestRunC1:
    def test_row_counting_and_determinism(self, tmp_path):
        cfg = small_config(tmp_path / "o1", replicas=3)
        rows, code = run_experiment("c1", cfg)
        assert code == 0
        # 2 modes x 2 classifiers x 3 replicas
        assert len(rows) == 12
        assert {r.experiment for r in rows} == {"C1a", "C1b"}
        assert {r.classifier for r in rows} == {"linear", "opfsup"}
        csv_a = (tmp_path / "o1" / "results.csv").read_bytes()
        run_experiment("c1", small_config(tmp_path / "o2", replicas=3))
        csv_b = (tmp_path / "o2" / "results.csv").read_bytes()
        assert csv_a == csv_b

    def test_aggregation_matches_independent_recompute(self, tmp_path):
        cfg = small_config(tmp_path / "agg", replicas=3)
        rows, _ = run_experiment("c1", cfg, write_artifacts=False)
        agg = aggregate_rows(rows)
        for entry in agg:
            members = [r for r in rows if (r.dataset, r.experiment, r.classifier)
                       == (entry["dataset"], entry["experiment"], entry["classifier"])]
            accs = [m.accuracy for m in members]
            assert entry["replicas"] == 3
            assert entry["accuracy_mean"] == pytest.approx(sum(accs) / len(accs))
            mean = sum(accs) / len(accs)
            std = (sum((a - mean) ** 2 for a in accs) / (len(accs) - 1)) ** 0.5
            assert entry["accuracy_std"] == pytest.approx(std)


class TestRunC2:
    def test_artifacts_and_row_count(self, tmp_path):
        out = tmp_path / "c2"
        cfg = small_config(out, replicas=2)
        rows, code = run_experiment("c2", cfg)
        assert code == 0
        assert len(rows) == 6  # 3 modes x 2 replicas
        assert all(r.consistency is not None for r in rows)
        data = generate_blobs(cfg.classes, cfg.per_class, cfg.dims, cfg.spread,
                              cfg.center_dist, cfg.dataset_seed)
        split = stratified_split(data, cfg.s_frac, cfg.u_frac, cfg.t_frac, cfg.base_seed)
        expected_rows = split.supervised.size + split.unsupervised.size
        emb_lines = (out / "embedding_simclr_7.csv").read_text().splitlines()
        assert len(emb_lines) - 1 == expected_rows
        assert (out / "scatter_combined_8.svg").exists()

    def test_degenerate_seed_coverage_rejected(self):
        data = generate_blobs(3, 30, 4, 0.5, 9.0, seed=2)
        roles = np.full(data.sample_count, int(Role.UNSUPERVISED), dtype=np.uint8)
        roles[:2] = int(Role.SUPERVISED)  # both supervised samples in class 0
        roles[-5:] = int(Role.TEST)
        bad_split = SplitAssignment(roles, 0, (0.02, 0.88, 0.1))
        cfg = small_config("unused")
        state = RunState(cfg, data, None, None)
        state.splits[0] = bad_split
        from epl.contrastive import TrainConfig, train
        params = train("simclr", data, bad_split, TrainConfig(epochs=0, seed=1))
        from epl.pipeline import propagate_embedding, projection_config_from
        with pytest.raises(PipelineError, match="every class needs a seed"):
            propagate_embedding(data, bad_split, params,
                                projection_config_from(cfg, 1), cfg.knn_k)


class TestRunC3:
    def test_row_count_and_baseline(self, tmp_path):
        cfg = small_config(tmp_path / "c3", replicas=3)
        rows, code = run_experiment("c3", cfg)
        assert code == 0
        assert len(rows) == 12  # 4 arms x 3 replicas
        baseline = [r for r in rows if r.experiment == "C3a"]
        assert len(baseline) == 3

    def test_perfect_pseudo_labels_beat_or_match_baseline(self):
        # oracle injection: pseudo-labels equal the ground truth
        data = generate_blobs(3, 80, 6, 2.0, 10.0, seed=5)
        split = stratified_split(data, 0.02, 0.68, 0.30, seed=9)
        softmax_cfg = SoftmaxConfig(seed=9)
        test_idx = split.test
        base = train_softmax(data.features[split.supervised],
                             data.labels[split.supervised], softmax_cfg,
                             data.class_count)
        base_acc = (predict(base, data.features[test_idx]) == data.labels[test_idx]).mean()
        true_s = LabelVector.from_true(np.where(
            split.roles == int(Role.SUPERVISED), data.labels, UNLABELED))
        oracle_pseudo = LabelVector(
            np.where(split.roles == int(Role.UNSUPERVISED), data.labels, UNLABELED),
            np.ones(data.sample_count, dtype=np.uint8))
        merged = merge_labels(split, true_s, oracle_pseudo)
        train_idx = np.sort(np.concatenate([split.supervised, split.unsupervised]))
        boosted = train_softmax(data.features[train_idx], merged.values[train_idx],
                                softmax_cfg, data.class_count)
        boosted_acc = (predict(boosted, data.features[test_idx])
                       == data.labels[test_idx]).mean()
        assert boosted_acc >= base_acc

    def test_baseline_survives_arm_failure(self, tmp_path, monkeypatch):
        import epl.contrastive as contrastive_module
        real_train = contrastive_module.train

        def broken_train(mode, data, split, config):
            if mode == "simclr":
                raise RuntimeError("injected failure")
            return real_train(mode, data, split, config)

        monkeypatch.setattr(pipeline.contrastive, "train", broken_train)
        cfg = small_config(tmp_path / "fail", replicas=1)
        rows, code = run_experiment("c3", cfg)
        assert code == 2
        experiments = {r.experiment for r in rows}
        assert "C3a" in experiments          # baseline always present
        assert "C3c" in experiments          # supcon arm unaffected
        assert "C3b" not in experiments      # simclr arm failed
        manifest = (tmp_path / "fail" / "manifest.txt").read_text()
        assert "injected failure" in manifest
        assert "status = partial" in manifest


class TestManifest:
    def test_every_output_file_digested(self, tmp_path):
        out = tmp_path / "man"
        run_experiment("c2", small_config(out, replicas=1))
        manifest = (out / "manifest.txt").read_text().splitlines()
        digest_lines = manifest[manifest.index("[digests]") + 1:]
        listed = {}
        for line in digest_lines:
            name, digest = line.split(" = ")
            listed[name] = digest.removeprefix("sha256:")
        on_disk = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                   for p in out.iterdir() if p.name != "manifest.txt"}
        assert listed == on_disk


class TestResultsCsv:
    def test_round_trip(self, tmp_path):
        rows = [ResultRow("ds", "C1a", "linear", 7, 0.5, 0.25),
                ResultRow("ds", "C2b", "propagation", 8, 0.75, 0.5, 0.9)]
        path = tmp_path / "results.csv"
        write_results_csv(rows, path)
        back = read_results_csv(path)
        assert back == rows


class TestSpearman:
    def test_monotone_series(self):
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0

    def test_reversed_series(self):
        assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0

    def test_constant_series_undefined(self):
        assert spearman([1.0, 1.0, 1.0], [1, 2, 3]) is None

    def test_matches_rank_sum_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(3, 20))
            a = rng.integers(0, 8, n).astype(float)  # integer grid forces ties
            b = rng.normal(size=n)
            if np.unique(a).size < 2:
                continue
            assert spearman(a, b) == pytest.approx(
                rank_sum_spearman_oracle(list(a), list(b)), abs=1e-12)


class TestCorrelationReport:
    def _rows(self, cells):
        rows = []
        for i, (consistency, kp, kc) in enumerate(cells):
            ds = f"d{i}"
            rows.append(ResultRow(ds, "C2b", "propagation", 1, 0.5, kp, consistency))
            rows.append(ResultRow(ds, "C3c", "softmax", 1, 0.5, kc))
        return rows

    def test_perfectly_monotone_chain(self):
        cells = [(0.1 * i, 0.05 * i, 0.07 * i) for i in range(1, 9)]
        report = correlation_report(self._rows(cells))
        assert report["rho_propagation"] == 1.0
        assert report["rho_classifier"] == 1.0
        assert report["cells"] == 8

    def test_reversed_chain(self):
        cells = [(0.1 * i, -0.05 * i, -0.07 * i) for i in range(1, 9)]
        report = correlation_report(self._rows(cells))
        assert report["rho_propagation"] == -1.0

    def test_too_few_cells(self):
        with pytest.raises(PipelineError, match="at least 5"):
            correlation_report(self._rows([(0.1, 0.1, 0.1)] * 3))

    def test_constant_reported_as_undefined(self):
        cells = [(0.5, 0.1 * i, 0.1 * i) for i in range(1, 9)]
        report = correlation_report(self._rows(cells))
        assert report["rho_propagation"] is None
