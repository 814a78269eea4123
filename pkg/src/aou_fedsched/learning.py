"""Local SGD training, weighted aggregation, and dataset handling.

The default task is a binary linear SVM: hinge loss plus an L2 penalty,
trained by single-sample stochastic subgradient steps on each scheduled
UE and merged by a dataset-size-weighted average of the local weight
vectors. Models are plain float vectors; a constant bias feature is
appended by the loaders rather than kept as a separate intercept.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from .errors import ConfigError, FormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class LearningConfig:
    """Local training hyperparameters."""

    step_size: float = 1e-2
    local_steps: int = 5
    regularizer_weight: float = 1e-2
    loss: str = "hinge"

    def __post_init__(self):
        if self.step_size < 0:
            raise ConfigError(f"step_size must be >= 0, got {self.step_size}")
        if self.local_steps < 1:
            raise ConfigError(f"local_steps must be >= 1, got {self.local_steps}")
        if self.regularizer_weight < 0:
            raise ConfigError(
                f"regularizer_weight must be >= 0, got {self.regularizer_weight}"
            )
        if self.loss != "hinge":
            raise ConfigError(f"unsupported loss '{self.loss}' (expected 'hinge')")


@dataclass(frozen=True)
class LocalDataset:
    """Feature matrix and +/-1 labels held by one UE (or a test pool)."""

    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be (n, d) and labels (n,)")
        if len(self.features) != len(self.labels):
            raise ValueError("feature and label counts differ")
        if len(self.labels) < 1:
            raise ValueError("dataset must contain at least one sample")

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]


def loss_and_subgradient(weights: np.ndarray, x: np.ndarray, y: float):
    """Hinge loss max(0, 1 - y<w,x>) and a subgradient at ``weights``.

    Below the unit margin the subgradient is -y*x; at and beyond it the
    zero vector is returned (the flat side is chosen at the kink).
    """
    weights = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    if weights.shape != x.shape:
        raise ValueError("weight and feature dimensions differ")
    margin = y * float(weights @ x)
    if margin < 1.0:
        return 1.0 - margin, -y * x
    return 0.0, np.zeros_like(weights)


def regularizer_and_gradient(weights: np.ndarray):
    """L2 penalty 0.5*||w||^2 and its gradient w."""
    weights = np.asarray(weights, dtype=float)
    return 0.5 * float(weights @ weights), weights.copy()


def local_update(
    global_weights: np.ndarray, data: LocalDataset, cfg: LearningConfig, rng: Generator
) -> np.ndarray:
    """Run the configured number of single-sample subgradient steps from the global model."""
    if data.size < 1:
        raise ValueError("cannot train on an empty dataset")
    w = np.array(global_weights, dtype=float)
    for _ in range(cfg.local_steps):
        i = int(rng.integers(data.size))  # uniform, with replacement
        _, loss_grad = loss_and_subgradient(w, data.features[i], data.labels[i])
        _, reg_grad = regularizer_and_gradient(w)
        w -= cfg.step_size * (loss_grad + cfg.regularizer_weight * reg_grad)
    return w


def aggregate(models, sizes) -> np.ndarray:
    """Dataset-size-weighted average of local models, in the given order."""
    if len(models) == 0:
        raise ValueError("aggregate requires at least one model")
    if len(models) != len(sizes):
        raise ValueError("models and sizes must have equal length")
    sizes = np.asarray(sizes, dtype=float)
    if np.any(sizes <= 0):
        raise ValueError("dataset sizes must be positive")
    stacked = np.stack([np.asarray(m, dtype=float) for m in models])
    return np.average(stacked, axis=0, weights=sizes)


def empirical_objective(weights: np.ndarray, data: LocalDataset, reg_weight: float) -> float:
    """Mean hinge loss over a dataset plus the weighted L2 penalty."""
    margins = data.labels * (data.features @ np.asarray(weights, dtype=float))
    hinge = float(np.maximum(0.0, 1.0 - margins).mean())
    return hinge + reg_weight * 0.5 * float(weights @ weights)


def partition_dataset(full: LocalDataset, num_parts: int, scheme: str, rng: Generator):
    """Split a dataset into disjoint per-UE portions covering it exactly.

    "iid" permutes the samples and cuts near-equal chunks; "shard" cuts
    near-equal contiguous chunks of the label-sorted ordering, giving each
    UE a narrow slice of the label distribution.
    """
    if num_parts < 1:
        raise ConfigError(f"num_parts must be >= 1, got {num_parts}")
    if full.size < num_parts:
        raise ConfigError(
            f"cannot split {full.size} samples into {num_parts} nonempty portions"
        )
    if scheme == "iid":
        order = rng.permutation(full.size)
    elif scheme == "shard":
        order = np.argsort(full.labels, kind="stable")
    else:
        raise ConfigError(f"unknown partition scheme '{scheme}' (expected 'iid' or 'shard')")
    return [
        LocalDataset(features=full.features[idx], labels=full.labels[idx])
        for idx in np.array_split(order, num_parts)
    ]


def generate_synthetic(n: int, d: int, margin: float, rng: Generator):
    """Linearly separable +/-1 Gaussian blobs around a random affine hyperplane.

    Points are Gaussian in d dimensions with their signed distance to the
    hyperplane {<z, u> = c} set to y * (margin/2 + |noise|), so the classes
    sit on opposite sides of a slab of width ``margin``. A constant 1 bias
    feature is appended (the package-wide bias convention), making the
    dataset dimension d + 1. Returns (dataset, separator) where separator
    is the augmented vector (u, -c) satisfying y * <x, separator> >= margin/2
    for every sample.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    normal = rng.standard_normal(d)
    normal /= np.linalg.norm(normal)
    offset = float(rng.standard_normal())
    labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    points = rng.standard_normal((n, d))
    slack = margin / 2.0 + np.abs(rng.standard_normal(n))
    shift = offset + labels * slack - points @ normal
    points = points + shift[:, None] * normal[None, :]
    features = np.hstack([points, np.ones((n, 1))])
    separator = np.append(normal, -offset)
    return LocalDataset(features=features, labels=labels), separator


def _read_idx(path, expected_magic: int, dims: int):
    with open(path, "rb") as fh:
        data = fh.read()
    header_len = 4 * (1 + dims)
    if len(data) < header_len:
        raise FormatError(f"{path}: file shorter than its IDX header")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x} (expected 0x{expected_magic:08x})")
    shape = struct.unpack(f">{dims}I", data[4:header_len])
    expected_len = header_len + int(np.prod(shape))
    if len(data) != expected_len:
        raise FormatError(f"{path}: expected {expected_len} bytes, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(shape)


def load_idx(images_path, labels_path, digit_a: int, digit_b: int) -> LocalDataset:
    """Load an IDX image/label file pair, keeping two digits as a +/-1 task.

    Pixels are scaled to [0, 1] and flattened, with a constant 1 bias
    feature appended; ``digit_a`` maps to +1, ``digit_b`` to -1.
    """
    images = _read_idx(images_path, IDX_IMAGE_MAGIC, dims=3)
    labels = _read_idx(labels_path, IDX_LABEL_MAGIC, dims=1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    mask = (labels == digit_a) | (labels == digit_b)
    if not mask.any():
        raise FormatError(f"no samples of digits {digit_a}/{digit_b} found")
    pixels = images[mask].reshape(int(mask.sum()), -1).astype(float) / 255.0
    features = np.hstack([pixels, np.ones((len(pixels), 1))])
    signs = np.where(labels[mask] == digit_a, 1.0, -1.0)
    return LocalDataset(features=features, labels=signs)


def evaluate(weights: np.ndarray, test: LocalDataset) -> float:
    """Fraction of test samples with sign(<w,x>) == y; sign(0) counts as +1."""
    if test.size < 1:
        raise ValueError("cannot evaluate on an empty test set")
    scores = test.features @ np.asarray(weights, dtype=float)
    predictions = np.where(scores >= 0, 1.0, -1.0)
    return float(np.mean(predictions == test.labels))


def save_dataset_csv(data: LocalDataset, path) -> None:
    """Write rows of (label, feature_1, ..., feature_d)."""
    table = np.column_stack([data.labels, data.features])
    np.savetxt(path, table, delimiter=",", fmt="%.17g")


def load_dataset_csv(path) -> LocalDataset:
    """Read a dataset written by save_dataset_csv."""
    table = np.loadtxt(path, delimiter=",", ndmin=2)
    if table.shape[1] < 2:
        raise FormatError(f"{path}: expected a label column plus at least one feature column")
    return LocalDataset(features=table[:, 1:], labels=table[:, 0])
