"""Datasets (CIFAR-10 binary files, synthetic class patterns), augmentation,
and the stochastic mini-batch drop schedule."""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError

CIFAR_RECORD = 3073  # 1 label byte + 3*32*32 pixel bytes, channel-major
CIFAR_CLASSES = 10


@dataclass
class Dataset:
    images: np.ndarray = field(repr=False)  # (N, C, H, W) float64, normalized
    labels: np.ndarray = field(repr=False)  # (N,) int64
    num_classes: int
    mean: np.ndarray = None
    std: np.ndarray = None

    def __len__(self):
        return self.images.shape[0]


def normalize_images(images, mean=None, std=None):
    """Per-channel (x - mean) / std; stats computed from images when absent."""
    if mean is None:
        mean = images.mean(axis=(0, 2, 3))
        std = images.std(axis=(0, 2, 3))
        std = np.where(std == 0, 1.0, std)
    out = (images - mean[:, None, None]) / std[:, None, None]
    return out, mean, std


def load_cifar10(path, subset_per_class=None, norm_stats=None):
    """Read CIFAR-10 binary batch files (3073-byte records).

    `path` may be one .bin file or a directory containing data_batch_*.bin.
    """
    if os.path.isdir(path):
        files = sorted(
            os.path.join(path, f) for f in os.listdir(path)
            if f.startswith("data_batch") and f.endswith(".bin")
        )
        if not files:
            raise DataFormatError(f"no data_batch_*.bin files under {path}")
    else:
        files = [path]

    labels, images = [], []
    for fname in files:
        raw = np.fromfile(fname, dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD != 0:
            raise DataFormatError(
                f"{fname}: size {raw.size} is not a multiple of {CIFAR_RECORD}-byte records"
            )
        recs = raw.reshape(-1, CIFAR_RECORD)
        bad = np.nonzero(recs[:, 0] >= CIFAR_CLASSES)[0]
        if bad.size:
            raise DataFormatError(
                f"{fname}: record {bad[0]} has label {recs[bad[0], 0]} > 9"
            )
        labels.append(recs[:, 0].astype(np.int64))
        images.append(recs[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0)
    labels = np.concatenate(labels)
    images = np.concatenate(images)

    if subset_per_class is not None:
        picks = []
        for c in range(CIFAR_CLASSES):
            idx = np.nonzero(labels == c)[0][:subset_per_class]
            picks.append(idx)
        picks = np.sort(np.concatenate(picks))
        labels, images = labels[picks], images[picks]

    mean, std = (None, None) if norm_stats is None else norm_stats
    images, mean, std = normalize_images(images, mean, std)
    return Dataset(images=images, labels=labels, num_classes=CIFAR_CLASSES,
                   mean=mean, std=std)


def synthetic_dataset(seed, n, classes=10, difficulty=1.0, shape=(3, 16, 16),
                      norm_stats=None):
    """Class-conditional Gaussian patterns plus noise, balanced within +-1.

    Same seed gives an identical dataset; difficulty scales the noise
    standard deviation (0 means noiseless patterns).
    """
    if n < classes:
        raise ConfigError(f"need n >= classes, got n={n}, classes={classes}")
    rng = np.random.default_rng(seed)
    patterns = rng.normal(0.0, 1.0, (classes,) + shape)
    labels = (np.arange(n) % classes).astype(np.int64)
    images = patterns[labels] + difficulty * rng.normal(0.0, 1.0, (n,) + shape)
    mean, std = (None, None) if norm_stats is None else norm_stats
    images, mean, std = normalize_images(images, mean, std)
    return Dataset(images=images, labels=labels, num_classes=classes,
                   mean=mean, std=std)


@dataclass
class BatchSchedule:
    scheduled: int
    kept: np.ndarray  # sorted indices of kept batches
    drop_prob: float

    def keep_mask(self):
        mask = np.zeros(self.scheduled, dtype=bool)
        mask[self.kept] = True
        return mask


def smd_schedule(n_batches, p, seed):
    """Independent Bernoulli(1-p) keep decision per scheduled mini-batch."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"drop probability must be in [0, 1], got {p}")
    u = np.random.default_rng(seed).random(n_batches)
    kept = np.nonzero(u >= p)[0]
    return BatchSchedule(scheduled=n_batches, kept=kept, drop_prob=p)


class BatchStream:
    """Epoch-shuffled mini-batch iterator; every epoch draws a fresh
    permutation before any drop decisions are made."""

    def __init__(self, dataset: Dataset, batch_size, seed):
        if batch_size > len(dataset):
            raise ConfigError(
                f"batch size {batch_size} exceeds dataset size {len(dataset)}"
            )
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._order = None
        self._pos = 0

    @property
    def batches_per_epoch(self):
        return len(self.dataset) // self.batch_size

    def next_batch(self):
        if self._order is None or self._pos + self.batch_size > len(self._order):
            self._order = self.rng.permutation(len(self.dataset))
            self._pos = 0
        idx = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return self.dataset.images[idx], self.dataset.labels[idx]


def hflip(image):
    """Mirror one CHW image along the width axis."""
    return image[:, :, ::-1].copy()


def shift_crop(image, pad, oy, ox):
    """Reflect-pad by `pad` then crop back to the original size at (oy, ox)."""
    c, h, w = image.shape
    padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
    return padded[:, oy : oy + h, ox : ox + w].copy()


def augment_batch(images, rng, pad=4):
    """Random horizontal flip plus reflect-pad-and-crop, per image."""
    out = np.empty_like(images)
    for i in range(images.shape[0]):
        img = images[i]
        if rng.random() < 0.5:
            img = hflip(img)
        oy = int(rng.integers(0, 2 * pad + 1))
        ox = int(rng.integers(0, 2 * pad + 1))
        out[i] = shift_crop(img, pad, oy, ox)
    return out


def stratified_split(dataset: Dataset, seed):
    """Split into two class-balanced halves; each class shuffled i.i.d."""
    rng = np.random.default_rng(seed)
    a_idx, b_idx = [], []
    for c in range(dataset.num_classes):
        idx = np.nonzero(dataset.labels == c)[0]
        if idx.size < 2:
            raise ConfigError(f"class {c} has {idx.size} sample(s); cannot halve")
        idx = rng.permutation(idx)
        half = idx.size // 2
        a_idx.append(idx[:half])
        b_idx.append(idx[half:])
    a_idx = np.sort(np.concatenate(a_idx))
    b_idx = np.sort(np.concatenate(b_idx))

    def subset(ix):
        return Dataset(images=dataset.images[ix], labels=dataset.labels[ix],
                       num_classes=dataset.num_classes,
                       mean=dataset.mean, std=dataset.std)

    return subset(a_idx), subset(b_idx)
