"""Flat key = value experiment configuration with section headers.

The format is deliberately diffable: '[section]' lines, 'key = value'
pairs, '#' comments, nothing nested. A parsed config resolves against the
defaults below and can be echoed back verbatim into the run manifest.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent configuration."""


VALID_MODES = ("simclr", "supcon", "combined")


def parse_config_text(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = line.split("=", 1)
        sections[current][key.strip()] = value.strip()
    return sections


def format_config(sections: dict[str, dict[str, str]]) -> str:
    chunks = []
    for name, entries in sections.items():
        chunks.append(f"[{name}]")
        for key, value in entries.items():
            chunks.append(f"{key} = {value}")
        chunks.append("")
    return "\n".join(chunks)


@dataclass
class ExperimentConfig:
    # dataset: synthetic blobs or a file on disk
    source: str = "blobs"
    classes: int = 4
    per_class: int = 200
    dims: int = 16
    spread: float = 0.5
    center_dist: float = 10.0
    dataset_seed: int = 1
    dataset_name: str = ""

    # split protocol
    s_frac: float = 0.01
    u_frac: float = 0.69
    t_frac: float = 0.30

    # run
    base_seed: int = 7
    replicas: int = 3
    modes: tuple[str, ...] = VALID_MODES
    out_dir: str = "out"

    # contrastive training
    init_mode: str = "scratch"
    warm_start_checkpoint: str = ""
    epochs: int = 50
    batch_size: int = 64
    temperature: float = 0.07
    learning_rate: float = 5e-4
    weight_decay: float = 1e-4
    validation_fraction: float = 0.1
    noise: float = 0.1
    dropout: float = 0.1

    # projection
    perplexity: float = 30.0
    iterations: int = 1000
    projection_learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    entropy_tolerance: float = 1e-5

    # probes and scoring
    linear_lambda: float = 1.0
    linear_epochs: int = 200
    softmax_epochs: int = 15
    softmax_learning_rate: float = 0.1
    softmax_momentum: float = 0.9
    softmax_hidden: int = 64
    softmax_batch: int = 32
    knn_k: int = 10

    def validate(self) -> None:
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if not self.modes:
            raise ConfigError("at least one contrastive mode is required")
        for mode in self.modes:
            if mode not in VALID_MODES:
                raise ConfigError(f"unknown mode {mode!r}")
        fracs = (self.s_frac, self.u_frac, self.t_frac)
        if any(f <= 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"fractions must be positive and sum to 1, got {fracs}")
        if self.init_mode not in ("scratch", "warm_start"):
            raise ConfigError(f"unknown init mode {self.init_mode!r}")
        if self.init_mode == "warm_start":
            if not self.warm_start_checkpoint:
                raise ConfigError("warm_start requires a checkpoint path")
            if not Path(self.warm_start_checkpoint).exists():
                raise ConfigError(
                    f"warm-start checkpoint not found: {self.warm_start_checkpoint}"
                )
        if self.source != "blobs" and not Path(self.source).exists():
            raise ConfigError(f"dataset file not found: {self.source}")

    def to_sections(self) -> dict[str, dict[str, str]]:
        return {
            "dataset": {
                "source": self.source,
                "classes": str(self.classes),
                "per_class": str(self.per_class),
                "dims": str(self.dims),
                "spread": repr(self.spread),
                "center_dist": repr(self.center_dist),
                "seed": str(self.dataset_seed),
                "name": self.dataset_name,
            },
            "split": {
                "s_frac": repr(self.s_frac),
                "u_frac": repr(self.u_frac),
                "t_frac": repr(self.t_frac),
            },
            "run": {
                "seed": str(self.base_seed),
                "replicas": str(self.replicas),
                "modes": " ".join(self.modes),
                "out": self.out_dir,
            },
            "contrastive": {
                "init": self.init_mode,
                "warm_start_checkpoint": self.warm_start_checkpoint,
                "epochs": str(self.epochs),
                "batch_size": str(self.batch_size),
                "temperature": repr(self.temperature),
                "learning_rate": repr(self.learning_rate),
                "weight_decay": repr(self.weight_decay),
                "validation_fraction": repr(self.validation_fraction),
                "noise": repr(self.noise),
                "dropout": repr(self.dropout),
                "supcon_batch_rule": "paired-views",
            },
            "projection": {
                "perplexity": repr(self.perplexity),
                "iterations": str(self.iterations),
                "learning_rate": repr(self.projection_learning_rate),
                "early_exaggeration": repr(self.early_exaggeration),
                "exaggeration_iters": str(self.exaggeration_iters),
                "momentum_start": repr(self.momentum_start),
                "momentum_final": repr(self.momentum_final),
                "momentum_switch": str(self.momentum_switch),
                "entropy_tolerance": repr(self.entropy_tolerance),
                "init": "random-gaussian",
            },
            "probe": {
                "linear_lambda": repr(self.linear_lambda),
                "linear_epochs": str(self.linear_epochs),
                "softmax_epochs": str(self.softmax_epochs),
                "softmax_learning_rate": repr(self.softmax_learning_rate),
                "softmax_momentum": repr(self.softmax_momentum),
                "softmax_hidden": str(self.softmax_hidden),
                "softmax_batch": str(self.softmax_batch),
                "knn_k": str(self.knn_k),
            },
        }


_PARSERS = {
    ("dataset", "source"): ("source", str),
    ("dataset", "classes"): ("classes", int),
    ("dataset", "per_class"): ("per_class", int),
    ("dataset", "dims"): ("dims", int),
    ("dataset", "spread"): ("spread", float),
    ("dataset", "center_dist"): ("center_dist", float),
    ("dataset", "seed"): ("dataset_seed", int),
    ("dataset", "name"): ("dataset_name", str),
    ("split", "s_frac"): ("s_frac", float),
    ("split", "u_frac"): ("u_frac", float),
    ("split", "t_frac"): ("t_frac", float),
    ("run", "seed"): ("base_seed", int),
    ("run", "replicas"): ("replicas", int),
    ("run", "out"): ("out_dir", str),
    ("contrastive", "init"): ("init_mode", str),
    ("contrastive", "warm_start_checkpoint"): ("warm_start_checkpoint", str),
    ("contrastive", "epochs"): ("epochs", int),
    ("contrastive", "batch_size"): ("batch_size", int),
    ("contrastive", "temperature"): ("temperature", float),
    ("contrastive", "learning_rate"): ("learning_rate", float),
    ("contrastive", "weight_decay"): ("weight_decay", float),
    ("contrastive", "validation_fraction"): ("validation_fraction", float),
    ("contrastive", "noise"): ("noise", float),
    ("contrastive", "dropout"): ("dropout", float),
    ("projection", "perplexity"): ("perplexity", float),
    ("projection", "iterations"): ("iterations", int),
    ("projection", "learning_rate"): ("projection_learning_rate", float),
    ("projection", "early_exaggeration"): ("early_exaggeration", float),
    ("projection", "exaggeration_iters"): ("exaggeration_iters", int),
    ("projection", "momentum_start"): ("momentum_start", float),
    ("projection", "momentum_final"): ("momentum_final", float),
    ("projection", "momentum_switch"): ("momentum_switch", int),
    ("projection", "entropy_tolerance"): ("entropy_tolerance", float),
    ("probe", "linear_lambda"): ("linear_lambda", float),
    ("probe", "linear_epochs"): ("linear_epochs", int),
    ("probe", "softmax_epochs"): ("softmax_epochs", int),
    ("probe", "softmax_learning_rate"): ("softmax_learning_rate", float),
    ("probe", "softmax_momentum"): ("softmax_momentum", float),
    ("probe", "softmax_hidden"): ("softmax_hidden", int),
    ("probe", "softmax_batch"): ("softmax_batch", int),
    ("probe", "knn_k"): ("knn_k", int),
}

_IGNORED_KEYS = {("contrastive", "supcon_batch_rule"), ("projection", "init")}


def config_from_sections(sections: dict[str, dict[str, str]]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for section, entries in sections.items():
        for key, raw in entries.items():
            if (section, key) in _IGNORED_KEYS:
                continue
            if (section, key) == ("run", "modes"):
                modes = tuple(raw.replace(",", " ").split())
                cfg.modes = modes
                continue
            target = _PARSERS.get((section, key))
            if target is None:
                raise ConfigError(f"unknown config key [{section}] {key}")
            attr, cast = target
            try:
                setattr(cfg, attr, cast(raw))
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    return config_from_sections(parse_config_text(path.read_text()))
