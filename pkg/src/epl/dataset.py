"""Dataset construction, file ingestion, and seeded stratified role splitting.

A dataset is a plain feature matrix with optional integer class labels.
Samples are assigned one of three roles (supervised / unsupervised / test)
by a deterministic stratified splitter; the supervised role is guaranteed
to cover every class so that downstream label propagation always has at
least one seed per class.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

# Sentinel for "no label"; never a valid class id.
UNLABELED = -1

# Provenance codes for LabelVector entries.
PROVENANCE_TRUE = 0
PROVENANCE_PSEUDO = 1

_BINARY_MAGIC = b"EPL1"


class DatasetError(ValueError):
    """Raised for malformed dataset files or invalid construction arguments."""


class SplitError(ValueError):
    """Raised when a stratified split cannot satisfy its guarantees."""


class Role(IntEnum):
    SUPERVISED = 0
    UNSUPERVISED = 1
    TEST = 2


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """n x d feature matrix with optional class labels in [0, class_count)."""

    features: np.ndarray
    labels: np.ndarray | None
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        feats = _readonly(np.asarray(self.features, dtype=np.float64))
        if feats.ndim != 2:
            raise DatasetError("features must be a 2-d matrix")
        n, d = feats.shape
        if n < 2 or d < 1:
            raise DatasetError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
        if not np.isfinite(feats).all():
            bad = np.argwhere(~np.isfinite(feats))[0]
            raise DatasetError(f"non-finite feature at row {bad[0]}, column {bad[1]}")
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labs = _readonly(np.asarray(self.labels, dtype=np.int64))
            if labs.shape != (n,):
                raise DatasetError("labels must have one entry per sample")
            if labs.size and (labs.min() < 0 or labs.max() >= self.class_count):
                raise DatasetError("labels must lie in [0, class_count)")
            object.__setattr__(self, "labels", labs)

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None


@dataclass(frozen=True)
class SplitAssignment:
    """Role per sample index plus the seed and fractions that produced it."""

    roles: np.ndarray
    seed: int
    fractions: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "roles", _readonly(np.asarray(self.roles, dtype=np.uint8)))

    def indices(self, role: Role) -> np.ndarray:
        """Ascending sample indices holding the given role."""
        return np.flatnonzero(self.roles == int(role))

    @property
    def supervised(self) -> np.ndarray:
        return self.indices(Role.SUPERVISED)

    @property
    def unsupervised(self) -> np.ndarray:
        return self.indices(Role.UNSUPERVISED)

    @property
    def test(self) -> np.ndarray:
        return self.indices(Role.TEST)


@dataclass
class LabelVector:
    """Per-sample label (or UNLABELED) with true/pseudo provenance.

    ``provenance`` is only meaningful where ``values`` holds a real label.
    """

    values: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        self.provenance = np.asarray(self.provenance, dtype=np.uint8)
        if self.values.shape != self.provenance.shape:
            raise DatasetError("values and provenance must have the same length")

    @classmethod
    def unlabeled(cls, n: int) -> "LabelVector":
        return cls(np.full(n, UNLABELED, dtype=np.int64), np.zeros(n, dtype=np.uint8))

    @classmethod
    def from_true(cls, values: np.ndarray) -> "LabelVector":
        values = np.asarray(values, dtype=np.int64)
        return cls(values, np.zeros(values.shape[0], dtype=np.uint8))

    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.values != UNLABELED)

    def is_labeled(self, idx) -> np.ndarray:
        return self.values[idx] != UNLABELED

    def __len__(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------

def save_features(dataset: Dataset, path, format: str = "text") -> None:
    """Write a dataset in the delimited-text or raw-binary format."""
    path = Path(path)
    if format == "text":
        has = 1 if dataset.has_labels else 0
        k = dataset.class_count if dataset.has_labels else 0
        lines = [f"# d={dataset.dim} labels={has} k={k}"]
        for i in range(dataset.sample_count):
            cells = [repr(float(v)) for v in dataset.features[i]]
            if dataset.has_labels:
                cells.append(str(int(dataset.labels[i])))
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n")
    elif format == "binary":
        n, d = dataset.features.shape
        has = 1 if dataset.has_labels else 0
        blob = bytearray()
        blob += _BINARY_MAGIC
        blob += struct.pack("<IIB", n, d, has)
        blob += np.ascontiguousarray(dataset.features, dtype="<f8").tobytes()
        if has:
            blob += np.ascontiguousarray(dataset.labels, dtype="<u4").tobytes()
        path.write_bytes(bytes(blob))
    else:
        raise DatasetError(f"unknown format {format!r}")


def load_features(path, format: str | None = None, name: str | None = None) -> Dataset:
    """Load a dataset file.

    ``format`` is "text" or "binary"; when omitted the file is sniffed by
    its magic bytes. Malformed rows report their line number; non-finite
    cells report row and column.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    if format is None:
        with open(path, "rb") as fh:
            format = "binary" if fh.read(4) == _BINARY_MAGIC else "text"
    if name is None:
        name = path.stem
    if format == "binary":
        return _load_binary(path, name)
    if format == "text":
        return _load_text(path, name)
    raise DatasetError(f"unknown format {format!r}")


def _load_text(path: Path, name: str) -> Dataset:
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DatasetError(f"{path}: missing '# d=... labels=... k=...' header")
    header = {}
    for tok in lines[0].lstrip("#").split():
        if "=" not in tok:
            raise DatasetError(f"{path}: bad header token {tok!r}")
        key, val = tok.split("=", 1)
        header[key] = val
    try:
        d = int(header["d"])
        has_labels = int(header["labels"]) != 0
        k = int(header["k"])
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"{path}: bad header: {exc}") from exc
    expected_cols = d + (1 if has_labels else 0)
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != expected_cols:
            raise DatasetError(
                f"{path}: line {lineno}: expected {expected_cols} columns, got {len(cells)}"
            )
        try:
            values = [float(c) for c in cells[:d]]
        except ValueError as exc:
            raise DatasetError(f"{path}: line {lineno}: {exc}") from exc
        for col, v in enumerate(values):
            if not math.isfinite(v):
                raise DatasetError(
                    f"{path}: non-finite value at row {lineno - 2}, column {col}"
                )
        rows.append(values)
        if has_labels:
            try:
                labels.append(int(cells[d]))
            except ValueError as exc:
                raise DatasetError(f"{path}: line {lineno}: bad label: {exc}") from exc
    feats = np.asarray(rows, dtype=np.float64)
    if has_labels:
        return Dataset(feats, np.asarray(labels, dtype=np.int64), k, name)
    return Dataset(feats, None, 0, name)


def _load_binary(path: Path, name: str) -> Dataset:
    blob = path.read_bytes()
    if blob[:4] != _BINARY_MAGIC:
        raise DatasetError(f"{path}: bad magic")
    n, d, has = struct.unpack_from("<IIB", blob, 4)
    off = 4 + 9
    need = off + n * d * 8 + (n * 4 if has else 0)
    if len(blob) < need:
        raise DatasetError(f"{path}: truncated file ({len(blob)} < {need} bytes)")
    feats = np.frombuffer(blob, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    if not np.isfinite(feats).all():
        bad = np.argwhere(~np.isfinite(feats))[0]
        raise DatasetError(f"{path}: non-finite value at row {bad[0]}, column {bad[1]}")
    if has:
        labels = np.frombuffer(blob, dtype="<u4", count=n, offset=off + n * d * 8)
        labels = labels.astype(np.int64)
        k = int(labels.max()) + 1 if n else 0
        return Dataset(feats.copy(), labels, k, name)
    return Dataset(feats.copy(), None, 0, name)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def generate_blobs(k: int, per_class: int, d: int, spread, center_dist: float,
                   seed: int, name: str | None = None) -> Dataset:
    """Sample k Gaussian clusters with mutually distant centers.

    Centers are rejection-sampled in a box sized so placement succeeds
    with ease at desk scale; a bounded retry budget turns pathological
    parameter choices into an explicit error instead of a hang. Samples
    are laid out in class blocks (class 0 first). Deterministic per seed.
    """
    if k < 2:
        raise DatasetError("need at least 2 classes")
    if per_class < 2:
        raise DatasetError("need at least 2 samples per class")
    spread_arr = np.broadcast_to(np.asarray(spread, dtype=np.float64), (k,)).copy()
    if (spread_arr <= 0).any():
        raise DatasetError("spread must be positive")
    rng = np.random.default_rng(seed)
    side = center_dist * (2.0 * k ** (1.0 / d) + 1.0)
    centers = np.empty((k, d))
    placed = 0
    for _ in range(1000 * k):
        cand = rng.uniform(0.0, side, d)
        if placed == 0 or np.linalg.norm(centers[:placed] - cand, axis=1).min() >= center_dist:
            centers[placed] = cand
            placed += 1
            if placed == k:
                break
    else:
        raise DatasetError(
            f"could not place {k} centers at least {center_dist} apart after bounded retries"
        )
    blocks = [centers[c] + spread_arr[c] * rng.standard_normal((per_class, d)) for c in range(k)]
    feats = np.vstack(blocks)
    labels = np.repeat(np.arange(k, dtype=np.int64), per_class)
    if name is None:
        name = f"blobs_k{k}_d{d}_s{seed}"
    return Dataset(feats, labels, k, name)


# ---------------------------------------------------------------------------
# Stratified splitting
# ---------------------------------------------------------------------------

def _largest_remainder(total: int, counts: np.ndarray, n: int) -> np.ndarray:
    """Apportion ``total`` across classes proportionally to ``counts``.

    Floor the exact quotas, then hand out the leftover units in order of
    largest fractional remainder, ties to the lower class id.
    """
    quota = total * counts / n
    alloc = np.floor(quota).astype(np.int64)
    leftover = total - int(alloc.sum())
    if leftover > 0:
        remainder = quota - alloc
        order = np.lexsort((np.arange(len(counts)), -remainder))
        alloc[order[:leftover]] += 1
    return alloc


def stratified_split(dataset: Dataset, s_frac: float, u_frac: float, t_frac: float,
                     seed: int) -> SplitAssignment:
    """Assign supervised / unsupervised / test roles, stratified by class.

    Global counts first: |T| = round-half-up(t_frac * n) and
    |S| = ceil(s_frac * n), each apportioned per class by largest
    remainder; S additionally gets a minimum of one sample per class
    (taken from the largest allocations when needed). U is the remainder.
    Raises SplitError if any class would end up empty in any part.
    """
    if not dataset.has_labels:
        raise SplitError("stratified split requires labels")
    fracs = (s_frac, u_frac, t_frac)
    if any(f <= 0 for f in fracs):
        raise SplitError("fractions must be positive")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise SplitError(f"fractions must sum to 1, got {sum(fracs)}")
    n = dataset.sample_count
    k = dataset.class_count
    counts = np.bincount(dataset.labels, minlength=k)
    if (counts < 3).any():
        small = int(np.argmin(counts))
        raise SplitError(f"class {small} has {counts[small]} samples, need at least 3")

    n_test = int(math.floor(t_frac * n + 0.5))
    n_sup = int(math.ceil(s_frac * n))
    if n_sup < k:
        raise SplitError(f"supervised budget {n_sup} cannot cover {k} classes")

    t_alloc = _largest_remainder(n_test, counts, n)
    s_alloc = _largest_remainder(n_sup, counts, n)
    # Guarantee one supervised sample per class: move units from the
    # currently largest allocation (ties to the lower class id).
    while (s_alloc == 0).any():
        needy = int(np.argmax(s_alloc == 0))
        donor = int(np.argmax(s_alloc))
        s_alloc[donor] -= 1
        s_alloc[needy] += 1

    u_alloc = counts - s_alloc - t_alloc
    for c in range(k):
        if s_alloc[c] < 1 or t_alloc[c] < 1 or u_alloc[c] < 1:
            raise SplitError(
                f"class {c} ({counts[c]} samples) too small to receive one sample in each part"
            )

    rng = np.random.default_rng(seed)
    roles = np.empty(n, dtype=np.uint8)
    for c in range(k):
        idx = np.flatnonzero(dataset.labels == c)
        perm = rng.permutation(idx)
        s_c, t_c = int(s_alloc[c]), int(t_alloc[c])
        roles[perm[:s_c]] = int(Role.SUPERVISED)
        roles[perm[s_c:s_c + t_c]] = int(Role.TEST)
        roles[perm[s_c + t_c:]] = int(Role.UNSUPERVISED)
    return SplitAssignment(roles, seed, fracs)


def split_replicas(dataset: Dataset, s_frac: float, u_frac: float, t_frac: float,
                   base_seed: int, replicas: int) -> list[SplitAssignment]:
    """Replicated splits at seeds base_seed, base_seed+1, ..."""
    return [stratified_split(dataset, s_frac, u_frac, t_frac, base_seed + r)
            for r in range(replicas)]


_ROLE_LETTERS = {Role.SUPERVISED: "S", Role.UNSUPERVISED: "U", Role.TEST: "T"}
_LETTER_ROLES = {v: k for k, v in _ROLE_LETTERS.items()}


def save_split(split: SplitAssignment, path) -> None:
    """Write a split as 'index,role' CSV with the parameters in the header."""
    s, u, t = split.fractions
    lines = [f"# seed={split.seed} s_frac={s!r} u_frac={u!r} t_frac={t!r}", "index,role"]
    for i, role in enumerate(split.roles):
        lines.append(f"{i},{_ROLE_LETTERS[Role(int(role))]}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_split(path) -> SplitAssignment:
    path = Path(path)
    if not path.exists():
        raise SplitError(f"no such split file: {path}")
    lines = path.read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("#") or lines[1] != "index,role":
        raise SplitError(f"{path}: missing split header")
    params = dict(tok.split("=", 1) for tok in lines[0].lstrip("#").split())
    seed = int(params.get("seed", 0))
    fracs = tuple(float(params.get(k, 0.0)) for k in ("s_frac", "u_frac", "t_frac"))
    entries = {}
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        idx_str, letter = line.split(",")
        if letter not in _LETTER_ROLES:
            raise SplitError(f"{path}: line {lineno}: unknown role {letter!r}")
        entries[int(idx_str)] = int(_LETTER_ROLES[letter])
    n = len(entries)
    if sorted(entries) != list(range(n)):
        raise SplitError(f"{path}: indices must cover 0..{n - 1} exactly")
    roles = np.array([entries[i] for i in range(n)], dtype=np.uint8)
    return SplitAssignment(roles, seed, fracs)


def merge_labels(split: SplitAssignment, true_s: LabelVector,
                 pseudo_u: LabelVector) -> LabelVector:
    """Combine true supervised labels with pseudo-labels on the unsupervised set.

    Test indices stay unlabeled regardless of what the inputs carry there.
    """
    n = len(split.roles)
    if len(true_s) != n or len(pseudo_u) != n:
        raise DatasetError("label vectors must cover all samples")
    sup = split.supervised
    uns = split.unsupervised
    missing_s = sup[true_s.values[sup] == UNLABELED]
    if missing_s.size:
        raise DatasetError(f"missing true label on supervised index {missing_s[0]}")
    missing_u = uns[pseudo_u.values[uns] == UNLABELED]
    if missing_u.size:
        raise DatasetError(f"missing pseudo-label on unsupervised index {missing_u[0]}")
    out = LabelVector.unlabeled(n)
    out.values[sup] = true_s.values[sup]
    out.provenance[sup] = PROVENANCE_TRUE
    out.values[uns] = pseudo_u.values[uns]
    out.provenance[uns] = PROVENANCE_PSEUDO
    return out
