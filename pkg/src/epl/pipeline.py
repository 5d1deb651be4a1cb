"""Experiment orchestration: feature quality, propagation quality, and
pseudo-label training, with manifests and deterministic artifacts.

Three experiment families are wired here. The first trains contrastive
encoders and probes their latent spaces with a linear classifier and the
supervised forest classifier. The second projects the latent space to 2D,
propagates the few true labels to the unsupervised points, and scores the
pseudo-labels. The third trains the softmax probe on raw inputs four
ways: supervised-only baseline and once per pseudo-label source. Every
stage is a pure function of (config, base seed); replica r uses seed
base + r throughout.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import contrastive
from .config import ExperimentConfig, format_config
from .contrastive import EncoderParams, TrainConfig, AugmentConfig
from .dataset import (Dataset, LabelVector, Role, SplitAssignment, UNLABELED,
                      generate_blobs, load_features, merge_labels, stratified_split)
from .metrics import ScoreReport, confusion, knn_consistency
from .opf import opfsemi_propagate, opfsup_classify_batch, opfsup_train
from .probe import SoftmaxConfig, predict, train_linear, train_softmax
from .projection import Embedding2D, ProjectionConfig, tsne_project
from .scatter import emit_scatter


class PipelineError(ValueError):
    """Raised for invalid experiment inputs."""


RESULTS_HEADER = "dataset,experiment,classifier,seed,accuracy,kappa,consistency"

# Experiment ids per arm, following the a/b/c(/d) lettering of the designs.
C1_IDS = {"simclr": "C1a", "supcon": "C1b"}
C2_IDS = {"simclr": "C2a", "supcon": "C2b", "combined": "C2c"}
C3_IDS = {"baseline": "C3a", "simclr": "C3b", "supcon": "C3c", "combined": "C3d"}
EXPERIMENT_MODE = {exp: mode for table in (C1_IDS, C2_IDS, C3_IDS)
                   for mode, exp in table.items()}


@dataclass
class ResultRow:
    dataset: str
    experiment: str
    classifier: str
    seed: int
    accuracy: float
    kappa: float
    consistency: float | None = None

    def to_csv(self) -> str:
        cons = "" if self.consistency is None else repr(self.consistency)
        return (f"{self.dataset},{self.experiment},{self.classifier},{self.seed},"
                f"{self.accuracy!r},{self.kappa!r},{cons}")

    @classmethod
    def from_csv(cls, line: str) -> "ResultRow":
        parts = line.split(",")
        if len(parts) != 7:
            raise PipelineError(f"bad result row: {line!r}")
        cons = float(parts[6]) if parts[6] else None
        return cls(parts[0], parts[1], parts[2], int(parts[3]),
                   float(parts[4]), float(parts[5]), cons)


def write_results_csv(rows, path) -> None:
    lines = [RESULTS_HEADER] + [row.to_csv() for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_results_csv(path) -> list[ResultRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != RESULTS_HEADER:
        raise PipelineError(f"{path}: missing results header")
    return [ResultRow.from_csv(line) for line in lines[1:] if line.strip()]


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------

class RunManifest:
    """Resolved config, per-stage wall clock, failures, and output digests."""

    def __init__(self, command: str, config_echo: str):
        self.command = command
        self.config_echo = config_echo
        self.timings: list[tuple[str, float]] = []
        self.errors: list[tuple[str, str]] = []
        self.notes: list[str] = []

    def add_timing(self, stage: str, seconds: float) -> None:
        self.timings.append((stage, seconds))

    def add_error(self, stage: str, message: str) -> None:
        self.errors.append((stage, message))

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        lines = [
            "# run manifest",
            f"version = {__version__}",
            f"command = {self.command}",
            f"status = {'partial' if self.errors else 'ok'}",
            f"wall_clock_unix = {time.time()!r}",
            "",
            "[config]",
            self.config_echo.rstrip("\n"),
            "",
            "[timing]",
        ]
        lines += [f"{stage} = {seconds:.3f}" for stage, seconds in self.timings]
        lines += ["", "[errors]"]
        lines += [f"{stage} = {message}" for stage, message in self.errors]
        lines += ["", "[digests]"]
        manifest_path = out_dir / "manifest.txt"
        for file in sorted(out_dir.rglob("*")):
            if file.is_dir() or file == manifest_path:
                continue
            digest = hashlib.sha256(file.read_bytes()).hexdigest()
            lines.append(f"{file.relative_to(out_dir)} = sha256:{digest}")
        manifest_path.write_text("\n".join(lines) + "\n")
        return manifest_path


# ---------------------------------------------------------------------------
# Stage helpers
# ---------------------------------------------------------------------------

def dataset_from_config(cfg: ExperimentConfig) -> Dataset:
    if cfg.source == "blobs":
        name = cfg.dataset_name or None
        return generate_blobs(cfg.classes, cfg.per_class, cfg.dims, cfg.spread,
                              cfg.center_dist, cfg.dataset_seed, name)
    ds = load_features(cfg.source)
    if not ds.has_labels:
        raise PipelineError("experiment datasets need ground-truth labels")
    return ds


def train_config_from(cfg: ExperimentConfig, seed: int,
                      warm_start: EncoderParams | None = None) -> TrainConfig:
    init_mode = "scratch"
    ws = None
    if warm_start is not None:
        init_mode, ws = "warm_start", warm_start
    elif cfg.init_mode == "warm_start":
        init_mode, ws = "warm_start", EncoderParams.load(cfg.warm_start_checkpoint)
    return TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch_size, temperature=cfg.temperature,
        learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay,
        validation_fraction=cfg.validation_fraction, seed=seed,
        init_mode=init_mode, warm_start=ws,
        augment=AugmentConfig(noise=cfg.noise, dropout=cfg.dropout),
    )


def projection_config_from(cfg: ExperimentConfig, seed: int) -> ProjectionConfig:
    return ProjectionConfig(
        perplexity=cfg.perplexity, iterations=cfg.iterations,
        learning_rate=cfg.projection_learning_rate,
        early_exaggeration=cfg.early_exaggeration,
        exaggeration_iters=cfg.exaggeration_iters,
        momentum_start=cfg.momentum_start, momentum_final=cfg.momentum_final,
        momentum_switch=cfg.momentum_switch, seed=seed,
        entropy_tolerance=cfg.entropy_tolerance,
    )


def train_arm(mode: str, data: Dataset, split: SplitAssignment,
              cfg: ExperimentConfig, seed: int) -> EncoderParams:
    """Train one contrastive arm; "combined" fine-tunes a fresh simclr run."""
    if mode == "combined":
        base = contrastive.train("simclr", data, split, train_config_from(cfg, seed))
        return contrastive.finetune_supcon(base, data, split, train_config_from(cfg, seed))
    return contrastive.train(mode, data, split, train_config_from(cfg, seed))


@dataclass
class _Propagation:
    embedding: Embedding2D
    indices: np.ndarray        # dataset indices of the embedded rows (S then U, ascending)
    pseudo: LabelVector        # full-length, pseudo labels on U only
    merged_values: np.ndarray  # row-aligned labels: true on S rows, propagated on U rows
    seed_values: np.ndarray    # row-aligned labels: true on S rows, UNLABELED on U rows
    consistency: float
    report: ScoreReport


def propagate_embedding(data: Dataset, split: SplitAssignment, params: EncoderParams,
                        proj_cfg: ProjectionConfig, knn_k: int = 10) -> _Propagation:
    """Project latent features of S and U to 2D and propagate the S labels."""
    sup = split.supervised
    uns = split.unsupervised
    sup_classes = np.unique(data.labels[sup])
    if sup_classes.size < data.class_count:
        raise PipelineError(
            f"supervised set covers {sup_classes.size} of {data.class_count} classes;"
            " every class needs a seed"
        )
    idx = np.sort(np.concatenate([sup, uns]))
    latent = contrastive.extract_features(params, data, idx)
    embedding = tsne_project(latent, proj_cfg)

    seed_values = np.full(idx.size, UNLABELED, dtype=np.int64)
    is_sup = np.isin(idx, sup)
    seed_values[is_sup] = data.labels[idx[is_sup]]
    forest = opfsemi_propagate(embedding.coordinates, seed_values)

    pseudo = LabelVector.unlabeled(data.sample_count)
    u_rows = ~is_sup
    pseudo.values[idx[u_rows]] = forest.label[u_rows]
    pseudo.provenance[idx[u_rows]] = 1

    report = ScoreReport.from_confusion(
        confusion(pseudo.values, data.labels, uns, data.class_count)
    )
    consistency = knn_consistency(embedding.coordinates, data.labels[idx], knn_k)
    merged_values = np.where(is_sup, seed_values, forest.label)
    return _Propagation(embedding, idx, pseudo, merged_values, seed_values,
                        consistency, report)


def write_embedding_csv(path, indices, coordinates, labels=None) -> None:
    header = "node,x,y" + (",label" if labels is not None else "")
    lines = [header]
    for row in range(len(indices)):
        x, y = float(coordinates[row][0]), float(coordinates[row][1])
        line = f"{int(indices[row])},{x!r},{y!r}"
        if labels is not None:
            line += f",{int(labels[row])}"
        lines.append(line)
    Path(path).write_text("\n".join(lines) + "\n")


def read_embedding_csv(path):
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("node,x,y"):
        raise PipelineError(f"{path}: missing embedding header")
    has_label = lines[0] == "node,x,y,label"
    nodes, coords, labels = [], [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        nodes.append(int(parts[0]))
        coords.append((float(parts[1]), float(parts[2])))
        if has_label:
            labels.append(int(parts[3]))
    return (np.asarray(nodes), np.asarray(coords, dtype=np.float64),
            np.asarray(labels, dtype=np.int64) if has_label else None)


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------

@dataclass
class RunState:
    """Shared per-run cache so the experiment families reuse trained arms."""

    cfg: ExperimentConfig
    data: Dataset
    out_dir: Path | None
    manifest: RunManifest | None
    encoders: dict = field(default_factory=dict)
    propagations: dict = field(default_factory=dict)
    splits: dict = field(default_factory=dict)

    def split(self, r: int) -> SplitAssignment:
        if r not in self.splits:
            self.splits[r] = stratified_split(
                self.data, self.cfg.s_frac, self.cfg.u_frac, self.cfg.t_frac,
                self.cfg.base_seed + r)
        return self.splits[r]

    def timed(self, stage: str, fn):
        start = time.perf_counter()
        try:
            return fn()
        finally:
            if self.manifest is not None:
                self.manifest.add_timing(stage, time.perf_counter() - start)

    def encoder(self, r: int, mode: str) -> EncoderParams:
        key = (r, mode)
        if key not in self.encoders:
            seed = self.cfg.base_seed + r
            if mode == "combined":
                base = self.encoder(r, "simclr")
                params = self.timed(f"r{r}.combined.finetune", lambda: contrastive.finetune_supcon(
                    base, self.data, self.split(r), train_config_from(self.cfg, seed)))
            else:
                params = self.timed(f"r{r}.{mode}.train", lambda: contrastive.train(
                    mode, self.data, self.split(r), train_config_from(self.cfg, seed)))
            self.encoders[key] = params
            if self.out_dir is not None:
                cfg_lines = {"mode": mode, "seed": seed, "epochs": self.cfg.epochs,
                             "batch_size": self.cfg.batch_size,
                             "temperature": self.cfg.temperature,
                             "learning_rate": self.cfg.learning_rate,
                             "weight_decay": self.cfg.weight_decay,
                             "init": self.cfg.init_mode}
                params.save(self.out_dir / f"ckpt_{mode}_{seed}.bin", cfg_lines)
        return self.encoders[key]

    def propagation(self, r: int, mode: str) -> _Propagation:
        key = (r, mode)
        if key not in self.propagations:
            seed = self.cfg.base_seed + r
            params = self.encoder(r, mode)
            proj_cfg = projection_config_from(self.cfg, seed)
            prop = self.timed(f"r{r}.{mode}.project", lambda: propagate_embedding(
                self.data, self.split(r), params, proj_cfg, self.cfg.knn_k))
            self.propagations[key] = prop
        return self.propagations[key]


def _c1_modes(cfg: ExperimentConfig):
    return [m for m in cfg.modes if m in C1_IDS]


def run_c1(state: RunState) -> list[ResultRow]:
    """Latent-space separability: linear and forest probes on S, scored on T."""
    cfg = state.cfg
    rows = []
    for r in range(cfg.replicas):
        seed = cfg.base_seed + r
        split = state.split(r)
        for mode in _c1_modes(cfg):
            stage = f"r{r}.{mode}.c1"
            try:
                params = state.encoder(r, mode)
                feats_s = contrastive.extract_features(params, state.data, split.supervised)
                feats_t = contrastive.extract_features(params, state.data, split.test)
                labels_s = state.data.labels[split.supervised]
                labels_t = state.data.labels[split.test]

                linear = train_linear(feats_s, labels_s, cfg.linear_lambda,
                                      cfg.linear_epochs, seed, state.data.class_count)
                pred_lin = predict(linear, feats_t)
                rep = ScoreReport.from_confusion(
                    confusion(pred_lin, labels_t, class_count=state.data.class_count))
                rows.append(ResultRow(state.data.name, C1_IDS[mode], "linear", seed,
                                      rep.accuracy, rep.kappa))

                forest_model = opfsup_train(feats_s, labels_s)
                pred_opf = opfsup_classify_batch(forest_model, feats_t)
                rep = ScoreReport.from_confusion(
                    confusion(pred_opf, labels_t, class_count=state.data.class_count))
                rows.append(ResultRow(state.data.name, C1_IDS[mode], "opfsup", seed,
                                      rep.accuracy, rep.kappa))
            except Exception as exc:  # arm isolation: record, move on
                if state.manifest is not None:
                    state.manifest.add_error(stage, f"{type(exc).__name__}: {exc}")
                else:
                    raise
    return rows


def run_c2(state: RunState) -> list[ResultRow]:
    """Propagation quality of the 2D embeddings, plus their consistency score."""
    cfg = state.cfg
    rows = []
    for r in range(cfg.replicas):
        seed = cfg.base_seed + r
        for mode in cfg.modes:
            stage = f"r{r}.{mode}.c2"
            try:
                prop = state.propagation(r, mode)
                rows.append(ResultRow(state.data.name, C2_IDS[mode], "propagation",
                                      seed, prop.report.accuracy, prop.report.kappa,
                                      prop.consistency))
                if state.out_dir is not None:
                    write_embedding_csv(state.out_dir / f"embedding_{mode}_{seed}.csv",
                                        prop.indices, prop.embedding.coordinates,
                                        prop.merged_values)
                    emit_scatter(prop.embedding, prop.seed_values,
                                 state.out_dir / f"scatter_{mode}_{seed}.svg")
            except Exception as exc:
                if state.manifest is not None:
                    state.manifest.add_error(stage, f"{type(exc).__name__}: {exc}")
                else:
                    raise
    return rows


def run_c3(state: RunState) -> list[ResultRow]:
    """Softmax probe on raw inputs: S-only baseline, then each pseudo-label source."""
    cfg = state.cfg
    data = state.data
    rows = []

    def softmax_cfg(seed):
        return SoftmaxConfig(
            epochs=cfg.softmax_epochs, learning_rate=cfg.softmax_learning_rate,
            momentum=cfg.softmax_momentum, batch_size=cfg.softmax_batch,
            hidden_dim=cfg.softmax_hidden, seed=seed)
    for r in range(cfg.replicas):
        seed = cfg.base_seed + r
        split = state.split(r)
        test_idx = split.test
        labels_t = data.labels[test_idx]
        try:
            model = state.timed(f"r{r}.baseline.softmax", lambda: train_softmax(
                data.features[split.supervised], data.labels[split.supervised],
                softmax_cfg(seed), data.class_count))
            pred = predict(model, data.features[test_idx])
            rep = ScoreReport.from_confusion(
                confusion(pred, labels_t, class_count=data.class_count))
            rows.append(ResultRow(data.name, C3_IDS["baseline"], "softmax", seed,
                                  rep.accuracy, rep.kappa))
        except Exception as exc:
            if state.manifest is not None:
                state.manifest.add_error(f"r{r}.baseline.c3", f"{type(exc).__name__}: {exc}")
            else:
                raise
        for mode in cfg.modes:
            stage = f"r{r}.{mode}.c3"
            try:
                prop = state.propagation(r, mode)
                true_s = LabelVector.from_true(np.where(
                    split.roles == int(Role.SUPERVISED), data.labels, UNLABELED))
                merged = merge_labels(split, true_s, prop.pseudo)
                train_idx = np.sort(np.concatenate([split.supervised, split.unsupervised]))
                model = state.timed(f"r{r}.{mode}.softmax", lambda: train_softmax(
                    data.features[train_idx], merged.values[train_idx],
                    softmax_cfg(seed), data.class_count))
                pred = predict(model, data.features[test_idx])
                rep = ScoreReport.from_confusion(
                    confusion(pred, labels_t, class_count=data.class_count))
                rows.append(ResultRow(data.name, C3_IDS[mode], "softmax", seed,
                                      rep.accuracy, rep.kappa))
            except Exception as exc:
                if state.manifest is not None:
                    state.manifest.add_error(stage, f"{type(exc).__name__}: {exc}")
                else:
                    raise
    return rows


def run_experiment(kind: str, cfg: ExperimentConfig, write_artifacts: bool = True) -> tuple[list[ResultRow], int]:
    """Run one experiment family (or all) and write results + manifest.

    Returns (rows, exit code): 0 on full success, 2 when any arm failed.
    """
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    if write_artifacts:
        out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(f"experiment {kind}", format_config(cfg.to_sections()))
    data = dataset_from_config(cfg)
    state = RunState(cfg, data, out_dir if write_artifacts else None, manifest)

    rows: list[ResultRow] = []
    try:
        if kind in ("c1", "all"):
            rows += run_c1(state)
        if kind in ("c2", "all"):
            rows += run_c2(state)
        if kind in ("c3", "all"):
            rows += run_c3(state)
        if kind not in ("c1", "c2", "c3", "all"):
            raise PipelineError(f"unknown experiment kind {kind!r}")
    finally:
        if write_artifacts:
            write_results_csv(rows, out_dir / "results.csv")
            manifest.write(out_dir)
    return rows, (2 if manifest.errors else 0)


# ---------------------------------------------------------------------------
# Aggregation and the separation / propagation / performance correlation
# ---------------------------------------------------------------------------

def aggregate_rows(rows) -> list[dict]:
    """Mean and sample standard deviation per (dataset, experiment, classifier)."""
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.dataset, row.experiment, row.classifier), []).append(row)
    out = []
    for key in sorted(groups):
        members = groups[key]
        accs = np.array([m.accuracy for m in members])
        kappas = np.array([m.kappa for m in members])
        out.append({
            "dataset": key[0], "experiment": key[1], "classifier": key[2],
            "replicas": len(members),
            "accuracy_mean": float(accs.mean()),
            "accuracy_std": float(accs.std(ddof=1)) if len(members) > 1 else 0.0,
            "kappa_mean": float(kappas.mean()),
            "kappa_std": float(kappas.std(ddof=1)) if len(members) > 1 else 0.0,
        })
    return out


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    ranks[order] = np.arange(1, len(values) + 1, dtype=np.float64)
    for v in np.unique(values):
        mask = values == v
        if mask.sum() > 1:
            ranks[mask] = ranks[mask].mean()
    return ranks


def spearman(a, b) -> float | None:
    """Spearman rank correlation with average ranks; None when undefined."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise PipelineError("need two equal-length series of at least 2 values")
    if np.unique(a).size < 2 or np.unique(b).size < 2:
        return None
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra ** 2).sum() * (rb ** 2).sum())
    return float((ra * rb).sum() / denom)


def correlation_report(rows, min_cells: int = 5) -> dict:
    """Rank-correlate embedding consistency with propagation and classifier kappa.

    Cells are (dataset, mode) pairs averaged over replicas. The embedding
    consistency comes from the propagation rows; the classifier kappa from
    the matching pseudo-label-trained softmax rows.
    """
    cells: dict[tuple, dict] = {}
    for row in rows:
        mode = EXPERIMENT_MODE.get(row.experiment)
        if mode is None or mode == "baseline":
            continue
        cell = cells.setdefault((row.dataset, mode),
                                {"consistency": [], "prop": [], "clf": []})
        if row.experiment.startswith("C2"):
            cell["prop"].append(row.kappa)
            if row.consistency is not None:
                cell["consistency"].append(row.consistency)
        elif row.experiment.startswith("C3"):
            cell["clf"].append(row.kappa)
    complete = {key: c for key, c in cells.items()
                if c["consistency"] and c["prop"] and c["clf"]}
    if len(complete) < min_cells:
        raise PipelineError(
            f"need at least {min_cells} complete (dataset, mode) cells, have {len(complete)}"
        )
    keys = sorted(complete)
    vs = np.array([np.mean(complete[k]["consistency"]) for k in keys])
    prop = np.array([np.mean(complete[k]["prop"]) for k in keys])
    clf = np.array([np.mean(complete[k]["clf"]) for k in keys])
    return {
        "cells": len(keys),
        "rho_propagation": spearman(vs, prop),
        "rho_classifier": spearman(vs, clf),
    }


def write_report(rows, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agg = aggregate_rows(rows)
    lines = ["dataset,experiment,classifier,replicas,"
             "accuracy_mean,accuracy_std,kappa_mean,kappa_std"]
    for entry in agg:
        lines.append(
            f"{entry['dataset']},{entry['experiment']},{entry['classifier']},"
            f"{entry['replicas']},{entry['accuracy_mean']!r},{entry['accuracy_std']!r},"
            f"{entry['kappa_mean']!r},{entry['kappa_std']!r}")
    (out_dir / "summary.csv").write_text("\n".join(lines) + "\n")

    corr_lines = ["series,rho,cells"]
    try:
        corr = correlation_report(rows)
        for name, rho in (("consistency_vs_propagation_kappa", corr["rho_propagation"]),
                          ("consistency_vs_classifier_kappa", corr["rho_classifier"])):
            text = "undefined" if rho is None else repr(rho)
            corr_lines.append(f"{name},{text},{corr['cells']}")
    except PipelineError as exc:
        corr_lines.append(f"unavailable,{exc},0")
    (out_dir / "correlation.csv").write_text("\n".join(corr_lines) + "\n")
