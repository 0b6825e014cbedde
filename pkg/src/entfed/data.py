"""Synthetic task families and Dirichlet non-IID partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .model import LocalDataset


@dataclass(frozen=True)
class TaskFamily:
    """A Gaussian-blob classification task tied to one model architecture."""

    tag: str
    class_means: np.ndarray
    noise_scale: float
    arch_id: str

    @property
    def class_count(self) -> int:
        return self.class_means.shape[0]

    @property
    def input_dim(self) -> int:
        return self.class_means.shape[1]


@dataclass
class PartitionPlan:
    indices: list
    alpha: float
    seed: int

    @property
    def sizes(self) -> list:
        return [len(ix) for ix in self.indices]


def make_family(tag: str, input_dim: int, class_count: int, arch_id: str, *,
                separation: float = 1.0, noise_scale: float = 1.0, seed: int = 0) -> TaskFamily:
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, separation, size=(class_count, input_dim))
    return TaskFamily(tag, means, float(noise_scale), arch_id)


def default_families(seed: int = 0, noise_scale: float = 1.0) -> list[TaskFamily]:
    """Three families mirroring a 2-class text task and two 10-class image tasks."""
    ss = np.random.SeedSequence(seed).spawn(3)
    return [
        make_family("sentiment", 8, 2, "linear", separation=1.0, noise_scale=noise_scale,
                    seed=ss[0]),
        make_family("fashion", 16, 10, "mlp16", separation=1.0, noise_scale=noise_scale,
                    seed=ss[1]),
        make_family("cifar", 16, 10, "mlp32", separation=1.0, noise_scale=noise_scale,
                    seed=ss[2]),
    ]


def generate_family(family: TaskFamily, samples_per_class: int, seed) -> LocalDataset:
    """Draw a class-balanced pool of Gaussian samples around the family's class means."""
    if samples_per_class < 1:
        raise ContractError("samples_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    c, f = family.class_means.shape
    labels = np.repeat(np.arange(c), samples_per_class)
    features = family.class_means[labels] + family.noise_scale * rng.standard_normal((len(labels), f))
    return LocalDataset(features, labels, family.tag)


def dirichlet_partition(pool: LocalDataset, n_enterprises: int, alpha: float, seed,
                        max_attempts: int = 100, min_size: int = 1) -> PartitionPlan:
    """Split ``pool`` across enterprises with per-class shares drawn from Dir(alpha).

    Draws leaving an enterprise with fewer than ``min_size`` samples are
    redrawn up to ``max_attempts`` times. With few classes and many
    enterprises at small alpha almost every draw starves someone, so the last
    draw is then repaired: each short enterprise is topped up with samples of
    its highest-share class, taken from whoever holds most of that class.
    """
    if n_enterprises < 1:
        raise ContractError("need at least one enterprise")
    if not alpha > 0:
        raise ContractError("Dirichlet concentration must be positive")
    if max_attempts < 1:
        raise ContractError("max_attempts must be >= 1")
    if pool.size < n_enterprises * min_size:
        raise ContractError("pool too small to give every enterprise a sample")
    rng = np.random.default_rng(seed)
    by_class = [np.flatnonzero(pool.labels == c) for c in np.unique(pool.labels)]
    for _ in range(max_attempts):
        buckets = [[[] for _ in by_class] for _ in range(n_enterprises)]
        shares = np.empty((len(by_class), n_enterprises))
        for c, members in enumerate(by_class):
            members = rng.permutation(members)
            shares[c] = rng.dirichlet(np.full(n_enterprises, alpha))
            cuts = (np.cumsum(shares[c])[:-1] * len(members)).astype(np.int64)
            for k, part in enumerate(np.split(members, cuts)):
                buckets[k][c] = part.tolist()
        if min(sum(map(len, b)) for b in buckets) >= min_size:
            break
    else:
        _top_up(buckets, shares, min_size)
    return PartitionPlan([np.sort(np.array(sum(b, []), dtype=np.int64)) for b in buckets],
                         float(alpha), seed)


def _top_up(buckets, shares, min_size):
    for k in range(len(buckets)):
        for c in np.argsort(-shares[:, k], kind="stable"):
            need = min_size - sum(map(len, buckets[k]))
            if need <= 0:
                break
            while need > 0:
                donors = [j for j in range(len(buckets))
                          if j != k and sum(map(len, buckets[j])) > min_size and buckets[j][c]]
                if not donors:
                    break
                j = max(donors, key=lambda d: (len(buckets[d][c]), -d))
                buckets[k][c].append(buckets[j][c].pop())
                need -= 1
    if min(sum(map(len, b)) for b in buckets) < min_size:
        raise ContractError(f"cannot give every enterprise {min_size} samples")


def assign_data_types(enterprises, families, seed) -> dict:
    """Map each enterprise id to the tag of exactly one family, round-robin after a shuffle."""
    families = list(families)
    if not families:
        raise ContractError("need at least one family")
    tags = [f.tag if isinstance(f, TaskFamily) else str(f) for f in families]
    ids = list(enterprises)
    order = np.random.default_rng(seed).permutation(len(ids))
    return {ids[i]: tags[pos % len(tags)] for pos, i in enumerate(order)}


def save_csv(data: LocalDataset, path) -> None:
    path = Path(path)
    f = data.features.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(f)] + ["label", "family"])
        for row, y in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(y), data.data_type])


def load_csv(path) -> LocalDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    nf = header.index("label")
    feats = np.array([[float(v) for v in r[:nf]] for r in body], dtype=np.float64).reshape(len(body), nf)
    labels = np.array([int(r[nf]) for r in body], dtype=np.int64)
    tag = body[0][nf + 1] if body else ""
    return LocalDataset(feats, labels, tag)
