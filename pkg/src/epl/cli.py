"""Command-line entry points for every pipeline stage.

Stages write plain files (datasets, splits, checkpoints, embeddings,
forest dumps) so any step can be rerun from a previous step's output.
The experiment subcommand reproduces the full designs with replicas,
a results table, scatterplots, and a manifest. Exit codes: 0 on full
success, 1 on configuration or usage errors, 2 when some experimental
arms failed but others completed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, contrastive
from .checkpoint import CheckpointError
from .config import ConfigError, ExperimentConfig, load_config
from .contrastive import ContrastiveError, EncoderParams
from .dataset import (Dataset, DatasetError, Role, SplitError, UNLABELED,
                      LabelVector, generate_blobs, load_features, load_split,
                      merge_labels, save_features, save_split, stratified_split)
from .metrics import MetricError, ScoreReport, confusion
from .opf import OpfError, opfsemi_propagate
from .pipeline import (PipelineError, read_embedding_csv, read_results_csv,
                       run_experiment, write_embedding_csv, write_report)
from .probe import ProbeError, SoftmaxConfig, predict, train_linear, train_softmax
from .projection import ProjectionConfig, ProjectionError, tsne_project

_USER_ERRORS = (ConfigError, DatasetError, SplitError, MetricError, OpfError,
                ProjectionError, ContrastiveError, ProbeError, PipelineError,
                CheckpointError)

_MODE_SETS = {
    "simclr": ("simclr",),
    "supcon": ("supcon",),
    "both": ("simclr", "supcon"),
    "combined": ("combined",),
}


def _cmd_gen(args) -> int:
    data = generate_blobs(args.classes, args.per_class, args.dims, args.spread,
                          args.center_dist, args.seed, args.name)
    save_features(data, args.out, args.format)
    print(f"wrote {data.sample_count} samples x {data.dim} dims to {args.out}")
    return 0


def _cmd_split(args) -> int:
    data = load_features(args.data)
    split = stratified_split(data, args.s_frac, args.u_frac, args.t_frac, args.seed)
    save_split(split, args.out)
    print(f"wrote split to {args.out}: |S|={split.supervised.size} "
          f"|U|={split.unsupervised.size} |T|={split.test.size}")
    return 0


def _train_config(args, warm_start=None):
    from .contrastive import AugmentConfig, TrainConfig
    init_mode = "scratch" if warm_start is None else "warm_start"
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       temperature=args.temperature, learning_rate=args.learning_rate,
                       weight_decay=args.weight_decay, seed=args.seed,
                       init_mode=init_mode, warm_start=warm_start,
                       augment=AugmentConfig(noise=args.noise, dropout=args.dropout))


def _cmd_train(args) -> int:
    data = load_features(args.data)
    split = load_split(args.split)
    warm = EncoderParams.load(args.init_from) if args.init_from else None
    cfg = _train_config(args, warm)
    params = contrastive.train(args.mode, data, split, cfg)
    params.save(args.out, {"mode": args.mode, "seed": args.seed,
                           "epochs": args.epochs, "init_from": args.init_from or "scratch"})
    print(f"wrote checkpoint {args.out}")
    return 0


def _roles_from_arg(spec: str):
    table = {"S": Role.SUPERVISED, "U": Role.UNSUPERVISED, "T": Role.TEST}
    try:
        return [table[token.strip()] for token in spec.split(",") if token.strip()]
    except KeyError as exc:
        raise ConfigError(f"unknown role {exc.args[0]!r}; use S, U, T") from exc


def _cmd_extract(args) -> int:
    data = load_features(args.data)
    params = EncoderParams.load(args.checkpoint)
    if args.roles:
        if not args.split:
            raise ConfigError("--roles requires --split")
        split = load_split(args.split)
        mask = np.zeros(data.sample_count, dtype=bool)
        for role in _roles_from_arg(args.roles):
            mask |= split.roles == int(role)
        idx = np.flatnonzero(mask)
    else:
        idx = np.arange(data.sample_count)
    latent = contrastive.extract_features(params, data, idx)
    out = Dataset(latent, None, 0, name=Path(args.out).stem)
    save_features(out, args.out, args.format)
    print(f"wrote {latent.shape[0]} x {latent.shape[1]} features to {args.out}")
    return 0


def _cmd_project(args) -> int:
    feats = load_features(args.features)
    cfg = ProjectionConfig(perplexity=args.perplexity, iterations=args.iterations,
                           seed=args.seed)
    emb = tsne_project(feats.features, cfg)
    write_embedding_csv(args.out, np.arange(len(emb)), emb.coordinates)
    print(f"wrote embedding to {args.out} (final KL {emb.final_kl:.6f})")
    return 0


def _propagation_inputs(args):
    data = load_features(args.data)
    split = load_split(args.split)
    if not data.has_labels:
        raise DatasetError("propagation needs a labeled dataset for its seeds")
    nodes, coords, _ = read_embedding_csv(args.embedding)
    idx = np.sort(np.concatenate([split.supervised, split.unsupervised]))
    if coords.shape[0] != idx.size:
        raise PipelineError(
            f"embedding has {coords.shape[0]} rows but the split has "
            f"{idx.size} supervised + unsupervised samples")
    seed_values = np.full(idx.size, UNLABELED, dtype=np.int64)
    is_sup = np.isin(idx, split.supervised)
    seed_values[is_sup] = data.labels[idx[is_sup]]
    return data, split, coords, idx, seed_values, is_sup


def _cmd_propagate(args) -> int:
    data, split, coords, idx, seed_values, is_sup = _propagation_inputs(args)
    forest = opfsemi_propagate(coords, seed_values)
    forest.to_csv(args.out)
    pseudo = np.asarray(forest.label)
    truth = data.labels[idx]
    rep = ScoreReport.from_confusion(
        confusion(pseudo[~is_sup], truth[~is_sup], class_count=data.class_count))
    print(rep.csv_row(data.name, "propagation", split.seed))
    return 0


def _read_forest_labels(path, expected: int) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "node,cost,pred,root,label":
        raise PipelineError(f"{path}: missing forest header")
    labels = np.full(expected, UNLABELED, dtype=np.int64)
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        node = int(parts[0])
        if node >= expected:
            raise PipelineError(f"{path}: node {node} out of range")
        labels[node] = int(parts[4])
    return labels


def _cmd_probe(args) -> int:
    data = load_features(args.data)
    split = load_split(args.split)
    feats = data.features
    if args.features:
        fset = load_features(args.features)
        if fset.sample_count != data.sample_count:
            raise PipelineError("--features must cover the whole dataset")
        feats = fset.features
    sup, uns, test = split.supervised, split.unsupervised, split.test
    labels_t = data.labels[test]
    if args.kind == "linear":
        model = train_linear(feats[sup], data.labels[sup], seed=args.seed,
                             class_count=data.class_count)
        method = "linear"
        pred = predict(model, feats[test])
    else:
        if args.pseudo:
            idx = np.sort(np.concatenate([sup, uns]))
            row_labels = _read_forest_labels(args.pseudo, idx.size)
            pseudo = LabelVector.unlabeled(data.sample_count)
            u_rows = np.isin(idx, uns)
            pseudo.values[idx[u_rows]] = row_labels[u_rows]
            true_s = LabelVector.from_true(
                np.where(split.roles == int(Role.SUPERVISED), data.labels, UNLABELED))
            merged = merge_labels(split, true_s, pseudo)
            train_idx = idx
            labels_train = merged.values[train_idx]
            method = "softmax+pseudo"
        else:
            train_idx = sup
            labels_train = data.labels[sup]
            method = "softmax-baseline"
        model = train_softmax(feats[train_idx], labels_train,
                              SoftmaxConfig(seed=args.seed), data.class_count)
        pred = predict(model, feats[test])
    rep = ScoreReport.from_confusion(confusion(pred, labels_t,
                                               class_count=data.class_count))
    print(rep.csv_row(data.name, method, args.seed))
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.replicas is not None:
        cfg.replicas = args.replicas
    if args.mode is not None:
        cfg.modes = _MODE_SETS[args.mode]
    rows, code = run_experiment(args.kind, cfg)
    print(f"wrote {len(rows)} result rows to {Path(cfg.out_dir) / 'results.csv'}")
    if code != 0:
        print("some experimental arms failed; see manifest.txt", file=sys.stderr)
    return code


def _cmd_report(args) -> int:
    rows = read_results_csv(args.results)
    write_report(rows, args.out)
    print(f"wrote summary.csv and correlation.csv to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epl", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic blob dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--dims", type=int, default=16)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--center-dist", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--name", default=None)
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("split", help="stratified supervised/unsupervised/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--s-frac", type=float, default=0.01)
    p.add_argument("--u-frac", type=float, default=0.69)
    p.add_argument("--t-frac", type=float, default=0.30)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_split)

    p = sub.add_parser("train", help="train a contrastive encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--mode", choices=("simclr", "supcon"), required=True)
    p.add_argument("--init-from", default=None,
                   help="checkpoint to warm-start from (supcon over a simclr "
                        "checkpoint gives the combined arm)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--temperature", type=float, default=0.07)
    p.add_argument("--learning-rate", type=float, default=5e-4)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("extract", help="extract latent features from a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--roles", default=None, help="comma list of S,U,T")
    p.add_argument("--format", choices=("text", "binary"), default="binary")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_extract)

    p = sub.add_parser("project", help="project features to 2D with exact t-SNE")
    p.add_argument("--features", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_project)

    p = sub.add_parser("propagate", help="propagate supervised labels in an embedding")
    p.add_argument("--embedding", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True, help="forest dump CSV")
    p.set_defaults(fn=_cmd_propagate)

    p = sub.add_parser("probe", help="train and score a downstream classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--kind", choices=("linear", "softmax"), required=True)
    p.add_argument("--features", default=None,
                   help="optional latent features covering the whole dataset")
    p.add_argument("--pseudo", default=None,
                   help="forest dump supplying pseudo-labels (softmax only)")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=_cmd_probe)

    p = sub.add_parser("experiment", help="run the replicated experiment designs")
    p.add_argument("kind", choices=("c1", "c2", "c3", "all"))
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--mode", choices=tuple(_MODE_SETS), default=None)
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("report", help="aggregate results and rank correlations")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
