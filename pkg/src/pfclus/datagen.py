"""Synthetic Gaussian datasets, heterogeneity-controlled federated splits and
a numeric CSV loader."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from pfclus.core import MalformedInputError

# kind -> (spacing between consecutive cluster means, std)
SYN_GEOMETRY = {
    "NO": (10.0, 1.0),  # means at 10 i, no overlap
    "LO": (8.0, 2.0),  # neighbours meet two std out from each mean
    "O": (9.0, 3.0),  # one mean sits on the other's 3 std boundary
}

SPLIT_MODES = ("balanced", "unequal")


class InfeasibleSplitError(MalformedInputError):
    pass


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray | None = None
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2:
            raise MalformedInputError("points must be a 2-D array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.points),):
                raise MalformedInputError("one label per point required")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class SynSpec:
    kind: str = "NO"
    n_clusters: int = 10
    points_per_cluster: int = 100
    dim: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in SYN_GEOMETRY:
            raise ValueError(f"kind must be one of {sorted(SYN_GEOMETRY)}")
        if self.n_clusters < 1 or self.points_per_cluster < 1 or self.dim < 1:
            raise ValueError("n_clusters, points_per_cluster and dim must be positive")

    def means(self) -> np.ndarray:
        spacing, _ = SYN_GEOMETRY[self.kind]
        return spacing * np.arange(1, self.n_clusters + 1, dtype=np.float64)

    @property
    def std(self) -> float:
        return SYN_GEOMETRY[self.kind][1]


def generate_synthetic(spec: SynSpec) -> Dataset:
    """Isotropic Gaussians; cluster i has every coordinate centered on ``means()[i]``."""
    rng = np.random.default_rng(spec.rng_seed)
    blocks, labels = [], []
    for i, mu in enumerate(spec.means()):
        blocks.append(rng.normal(mu, spec.std, size=(spec.points_per_cluster, spec.dim)))
        labels.append(np.full(spec.points_per_cluster, i))
    spacing, std = SYN_GEOMETRY[spec.kind]
    return Dataset(
        np.vstack(blocks), np.concatenate(labels), name=f"syn-{spec.kind.lower()}",
        meta={"kind": spec.kind, "spacing": spacing, "std": std, "seed": spec.rng_seed},
    )


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "balanced"
    Z: int = 10
    H: int = 2
    rng_seed: int = 0
    skew: float = 0.1
    min_points: int = 10
    k: int | None = None  # clustering k; clients must receive at least this many points

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise ValueError(f"mode must be one of {SPLIT_MODES}")
        if self.Z < 1 or self.H < 1:
            raise ValueError("Z and H must be positive")
        if self.skew <= 0:
            raise ValueError("skew must be positive")
        if self.min_points < 1:
            raise ValueError("min_points must be positive")

    @property
    def floor(self) -> int:
        return max(self.min_points, self.k or 1)


@dataclass
class FederatedSplit:
    dataset: Dataset
    client_indices: list[np.ndarray]
    client_distributions: list[list[int]]
    spec: SplitSpec | None = None

    @property
    def Z(self) -> int:
        return len(self.client_indices)

    @property
    def clients(self) -> list[np.ndarray]:
        return [self.dataset.points[idx] for idx in self.client_indices]

    def sizes(self) -> np.ndarray:
        return np.array([len(idx) for idx in self.client_indices])

    def label_sets(self) -> list[set[int]]:
        if self.dataset.labels is None:
            return [set() for _ in self.client_indices]
        return [set(self.dataset.labels[idx].tolist()) for idx in self.client_indices]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for z, idx in enumerate(self.client_indices):
            h.update(f"{z}:".encode())
            h.update(np.ascontiguousarray(idx, dtype=np.int64).tobytes())
            h.update(np.ascontiguousarray(self.dataset.points[idx]).tobytes())
        return h.hexdigest()[:16]


def _distribution_ids(dataset: Dataset) -> tuple[np.ndarray, int]:
    if dataset.labels is None:
        raise MalformedInputError("heterogeneity-controlled splits need labeled data")
    uniq, codes = np.unique(dataset.labels, return_inverse=True)
    return codes, len(uniq)


def assign_distributions(n_dist: int, Z: int, H: int, rng: np.random.Generator) -> list[list[int]]:
    """Give every client exactly H distinct distributions, covering all of them.

    Clients, in a seeded random order, take H consecutive entries of a seeded
    permutation of the distributions read cyclically, so holder counts differ
    by at most one across distributions.
    """
    if H > n_dist:
        raise InfeasibleSplitError(f"H={H} exceeds the {n_dist} available distributions")
    if Z * H < n_dist:
        raise InfeasibleSplitError(f"Z*H={Z * H} cannot cover {n_dist} distributions")
    client_order = rng.permutation(Z)
    dist_order = rng.permutation(n_dist)
    held: list[list[int]] = [[] for _ in range(Z)]
    for slot, z in enumerate(client_order):
        held[int(z)] = sorted(int(dist_order[(slot * H + m) % n_dist]) for m in range(H))
    return held


def _holders(held: list[list[int]], n_dist: int) -> list[list[int]]:
    holders: list[list[int]] = [[] for _ in range(n_dist)]
    for z, ds in enumerate(held):
        for d in ds:
            holders[d].append(z)
    return holders


def _materialize(dataset, codes, n_dist, held, alloc, rng, spec) -> FederatedSplit:
    parts: list[list[np.ndarray]] = [[] for _ in held]
    for d in range(n_dist):
        idx = rng.permutation(np.flatnonzero(codes == d))
        start = 0
        for z, count in alloc[d]:
            parts[z].append(idx[start:start + count])
            start += count
    client_indices = [np.sort(np.concatenate(p)) if p else np.empty(0, dtype=np.int64) for p in parts]
    return FederatedSplit(dataset, client_indices, held, spec)


def partition_balanced(dataset: Dataset, spec: SplitSpec) -> FederatedSplit:
    """Split each distribution's points as evenly as possible among its holders."""
    codes, n_dist = _distribution_ids(dataset)
    rng = np.random.default_rng(spec.rng_seed)
    held = assign_distributions(n_dist, spec.Z, spec.H, rng)
    holders = _holders(held, n_dist)
    alloc = []
    extra_turn = 0
    for d in range(n_dist):
        n_d, h_d = int(np.sum(codes == d)), len(holders[d])
        base, rem = divmod(n_d, h_d)
        # rotate which holders receive the leftover points across distributions
        bonus = {(extra_turn + i) % h_d for i in range(rem)}
        extra_turn += rem
        alloc.append([(z, base + (i in bonus)) for i, z in enumerate(holders[d])])
    return _materialize(dataset, codes, n_dist, held, alloc, rng, spec)


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    raw = weights * total
    out = np.floor(raw).astype(np.int64)
    short = total - int(out.sum())
    if short:
        # stable order keeps ties deterministic
        order = np.argsort(-(raw - out), kind="stable")
        out[order[:short]] += 1
    return out


def partition_unequal(dataset: Dataset, spec: SplitSpec) -> FederatedSplit:
    """Dirichlet(skew)-weighted split of each distribution among its holders,
    with every holder getting at least one point and every client at least
    ``spec.floor`` points."""
    codes, n_dist = _distribution_ids(dataset)
    rng = np.random.default_rng(spec.rng_seed)
    held = assign_distributions(n_dist, spec.Z, spec.H, rng)
    holders = _holders(held, n_dist)
    counts: list[np.ndarray] = []
    for d in range(n_dist):
        n_d, h_d = int(np.sum(codes == d)), len(holders[d])
        weights = rng.dirichlet(np.full(h_d, spec.skew))
        ones = min(n_d, h_d)
        c = np.zeros(h_d, dtype=np.int64)
        c[:ones] = 1
        c += _largest_remainder(n_d - ones, weights)
        counts.append(c)

    totals = np.zeros(spec.Z, dtype=np.int64)
    for d in range(n_dist):
        for z, c in zip(holders[d], counts[d]):
            totals[z] += c
    floor = spec.floor
    for z in range(spec.Z):
        while totals[z] < floor:
            best = None
            for d in held[z]:
                for pos, donor in enumerate(holders[d]):
                    if donor == z or counts[d][pos] <= 1 or totals[donor] <= floor:
                        continue
                    if best is None or counts[d][pos] > counts[best[0]][best[1]]:
                        best = (d, pos)
            if best is None:
                raise InfeasibleSplitError(
                    f"cannot give client {z} the minimum of {floor} points"
                )
            d, pos = best
            counts[d][pos] -= 1
            totals[holders[d][pos]] -= 1
            counts[d][holders[d].index(z)] += 1
            totals[z] += 1
    alloc = [list(zip(holders[d], counts[d].tolist())) for d in range(n_dist)]
    return _materialize(dataset, codes, n_dist, held, alloc, rng, spec)


def partition(dataset: Dataset, spec: SplitSpec) -> FederatedSplit:
    if spec.mode == "balanced":
        return partition_balanced(dataset, spec)
    return partition_unequal(dataset, spec)


def _parse_label_codes(values: list[str]) -> np.ndarray:
    try:
        keys = [float(v) for v in values]
    except ValueError:
        keys = values
    uniq = sorted(set(keys))
    lookup = {v: i for i, v in enumerate(uniq)}
    return np.array([lookup[v] for v in keys], dtype=np.int64)


def load_csv(path, feature_columns: Sequence[str], label_column: str | None = None,
             standardize: bool = False, name: str | None = None) -> Dataset:
    """Read numeric feature columns (and optionally a label column) from a
    header-first, comma-separated UTF-8 file."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = list(feature_columns) + ([label_column] if label_column else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise MalformedInputError(f"{path}: missing column(s) {missing}")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            vals = []
            for col in feature_columns:
                cell = row[col]
                try:
                    vals.append(float(cell))
                except (TypeError, ValueError):
                    raise MalformedInputError(
                        f"{path}: non-numeric value {cell!r} at line {lineno}, column {col!r}"
                    ) from None
            rows.append(vals)
            if label_column:
                labels.append((row[label_column] or "").strip())
    if not rows:
        raise MalformedInputError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise MalformedInputError(f"{path}: non-finite values")
    if standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0, ddof=1) if len(X) > 1 else np.zeros(X.shape[1])
        X = (X - mean) / np.where(std > 0, std, 1.0)
    return Dataset(X, _parse_label_codes(labels) if label_column else None,
                   name=name or path.stem, meta={"path": str(path), "standardize": standardize})


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Columns ``x0..x{d-1}`` plus ``label``; ``path`` may be an open text handle."""
    if hasattr(path, "write"):
        _write_dataset_rows(dataset, path)
        return
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        _write_dataset_rows(dataset, fh)


def _write_dataset_rows(dataset: Dataset, fh) -> None:
    cols = [f"x{j}" for j in range(dataset.dim)]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols + (["label"] if dataset.labels is not None else []))
    for i, p in enumerate(dataset.points):
        row = [repr(float(v)) for v in p]
        if dataset.labels is not None:
            row.append(int(dataset.labels[i]))
        w.writerow(row)


def write_split(split: FederatedSplit, path) -> None:
    """One ``client_id,point_index`` pair per line, clients in order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for z, idx in enumerate(split.client_indices):
            for i in idx:
                fh.write(f"{z},{int(i)}\n")


def read_split(path, dataset: Dataset) -> FederatedSplit:
    pairs = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                z, i = (int(v) for v in line.split(","))
            except ValueError:
                raise MalformedInputError(f"{path}: bad line {lineno}: {line!r}") from None
            if not 0 <= i < len(dataset) or z < 0:
                raise MalformedInputError(f"{path}: index out of range at line {lineno}")
            pairs.append((z, i))
    Z = max(z for z, _ in pairs) + 1 if pairs else 0
    buckets: list[list[int]] = [[] for _ in range(Z)]
    for z, i in pairs:
        buckets[z].append(i)
    indices = [np.array(b, dtype=np.int64) for b in buckets]
    dists = [sorted(set(dataset.labels[idx].tolist())) if dataset.labels is not None else []
             for idx in indices]
    return FederatedSplit(dataset, indices, dists, None)
