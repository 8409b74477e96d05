"""Dataset ingestion (IDX files, synthetic Gaussians), splits, and client partitioning."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """An IDX file failed validation; the message names the offending field."""


class PartitionError(ValueError):
    """A partition plan produced an empty client share."""


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus integer labels."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got ndim={feats.ndim}")
        if labels.shape != (feats.shape[0],):
            raise ValueError(
                f"label count {labels.shape} does not match {feats.shape[0]} feature rows"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), got "
                f"[{labels.min()}, {labels.max()}]"
            )
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class PartitionPlan:
    kind: str  # iid | label-shard | dirichlet
    num_clients: int
    shards_per_client: int = 2
    alpha: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("iid", "label-shard", "dirichlet"):
            raise ValueError(f"unknown partition kind {self.kind!r}")
        if self.num_clients < 2:
            raise ValueError(f"num_clients must be >= 2, got {self.num_clients}")
        if self.shards_per_client < 1:
            raise ValueError(f"shards_per_client must be >= 1, got {self.shards_per_client}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def _read_be32(fh, path, field):
    raw = fh.read(4)
    if len(raw) != 4:
        raise IdxFormatError(f"{path}: truncated while reading {field}")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    """Load an IDX image/label pair (the MNIST wire format, big-endian headers).

    Pixels are scaled by 1/255 and each image is flattened row-major, so
    input_dim = rows * cols.
    """
    with open(images_path, "rb") as fh:
        magic = _read_be32(fh, images_path, "images magic")
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"{images_path}: images magic is 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        count = _read_be32(fh, images_path, "images count")
        rows = _read_be32(fh, images_path, "images rows")
        cols = _read_be32(fh, images_path, "images cols")
        pixels = fh.read()
    if len(pixels) != count * rows * cols:
        raise IdxFormatError(
            f"{images_path}: images pixel data has {len(pixels)} bytes, "
            f"expected {count * rows * cols}"
        )

    with open(labels_path, "rb") as fh:
        magic = _read_be32(fh, labels_path, "labels magic")
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"{labels_path}: labels magic is 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        label_count = _read_be32(fh, labels_path, "labels count")
        label_bytes = fh.read()
    if len(label_bytes) != label_count:
        raise IdxFormatError(
            f"{labels_path}: labels data has {len(label_bytes)} bytes, expected {label_count}"
        )
    if label_count != count:
        raise IdxFormatError(
            f"count mismatch: {count} images in {images_path} vs "
            f"{label_count} labels in {labels_path}"
        )

    features = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols)
    features = features.astype(np.float64) / 255.0
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(features, labels, num_classes)


def generate_synthetic(num_classes, input_dim, samples_per_class, spread, seed) -> Dataset:
    """Isotropic Gaussian blobs: one fixed center per class, noise scale `spread`."""
    if num_classes < 1 or input_dim < 1 or samples_per_class < 1:
        raise ValueError("num_classes, input_dim, samples_per_class must all be >= 1")
    if spread < 0:
        raise ValueError(f"spread must be nonnegative, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(num_classes, input_dim))
    features = np.empty((num_classes * samples_per_class, input_dim))
    labels = np.empty(num_classes * samples_per_class, dtype=np.int64)
    for c in range(num_classes):
        block = slice(c * samples_per_class, (c + 1) * samples_per_class)
        features[block] = centers[c] + spread * rng.standard_normal((samples_per_class, input_dim))
        labels[block] = c
    return Dataset(features, labels, num_classes)


def split_train_test(dataset: Dataset, test_fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split; the test side is never partitioned across clients."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0,1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    n_test = max(1, int(round(test_fraction * len(dataset))))
    return dataset.subset(perm[n_test:]), dataset.subset(perm[:n_test])


def take(dataset: Dataset, count: int, seed) -> Dataset:
    """Random subset of `count` samples without replacement."""
    if count >= len(dataset):
        return dataset
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(dataset), size=count, replace=False)
    return dataset.subset(np.sort(idx))


def partition(dataset: Dataset, plan: PartitionPlan) -> list[Dataset]:
    """Split a dataset into disjoint client shares that exactly cover it."""
    k = plan.num_clients
    n = len(dataset)
    if n < k:
        raise PartitionError(f"dataset has {n} samples, fewer than {k} clients")
    rng = np.random.default_rng(plan.seed)

    if plan.kind == "iid":
        perm = rng.permutation(n)
        sizes = np.full(k, n // k)
        sizes[: n % k] += 1
        cuts = np.cumsum(sizes)[:-1]
        shares = np.split(perm, cuts)
    elif plan.kind == "label-shard":
        order = np.argsort(dataset.labels, kind="stable")
        num_shards = k * plan.shards_per_client
        if num_shards > n:
            raise PartitionError(
                f"{num_shards} shards requested from only {n} samples"
            )
        shards = np.array_split(order, num_shards)
        deal = rng.permutation(num_shards)
        shares = [
            np.concatenate([shards[s] for s in deal[i * plan.shards_per_client:
                                                    (i + 1) * plan.shards_per_client]])
            for i in range(k)
        ]
    else:  # dirichlet
        shares = [[] for _ in range(k)]
        for c in range(dataset.num_classes):
            class_idx = np.flatnonzero(dataset.labels == c)
            if class_idx.size == 0:
                continue
            class_idx = rng.permutation(class_idx)
            props = rng.dirichlet(np.full(k, plan.alpha))
            cuts = (np.cumsum(props)[:-1] * class_idx.size).round().astype(int)
            shares_c = np.split(class_idx, cuts)
            for i in range(k):
                shares[i].append(shares_c[i])
        shares = [np.concatenate(parts) if parts else np.array([], dtype=int)
                  for parts in shares]

    for i, share in enumerate(shares):
        if len(share) == 0:
            raise PartitionError(
                f"client {i} received no samples under plan {plan.kind}; "
                f"lower num_clients or provide more data"
            )
    return [dataset.subset(share) for share in shares]


def label_skew(parts: list[Dataset], num_classes: int) -> float:
    """Mean total-variation distance between client label histograms and the global one."""
    counts = np.array([np.bincount(p.labels, minlength=num_classes) for p in parts],
                      dtype=np.float64)
    global_hist = counts.sum(axis=0)
    global_hist /= global_hist.sum()
    client_hists = counts / counts.sum(axis=1, keepdims=True)
    return float(0.5 * np.abs(client_hists - global_hist).sum(axis=1).mean())


def write_csv(dataset: Dataset, path):
    """Dump features and labels as CSV with header f0..f{d-1},label."""
    d = dataset.features.shape[1]
    header = ",".join(f"f{i}" for i in range(d)) + ",label"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{label}\n")
