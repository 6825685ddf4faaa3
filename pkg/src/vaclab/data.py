"""Dataset records, persistence, splits, and deterministic epoch iteration.

The on-disk record format mirrors the CIFAR-10 binary layout: each record is
one label byte followed by H*W*C pixel bytes, planar by channel, row-major
within a channel. Official CIFAR-10 batch files therefore load unmodified,
and corrupted or synthetic sets are written back in the same layout.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .curriculum import BlurPolicy
from .imaging import blur_stack

__all__ = [
    "FormatError",
    "DatasetMeta",
    "Dataset",
    "BatchPlan",
    "load_records",
    "save_records",
    "subset",
    "plan_epoch",
    "epoch_sigmas",
    "iterate_epoch",
]

PAD = 4  # random-crop padding for 32x32 augmentation


class FormatError(ValueError):
    """Malformed record file or metadata."""


@dataclass(frozen=True)
class DatasetMeta:
    height: int = 32
    width: int = 32
    channels: int = 3
    num_classes: int = 10
    split: str = ""
    checksum: str = ""

    @property
    def record_bytes(self) -> int:
        return 1 + self.height * self.width * self.channels


@dataclass(frozen=True)
class Dataset:
    """In-memory record set: labels plus uint8 pixels in (N, H, W, C) order."""

    labels: np.ndarray
    pixels: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        if self.labels.ndim != 1 or len(self.labels) != len(self.pixels):
            raise FormatError("labels and pixels disagree on record count")
        if len(self.labels) == 0:
            raise FormatError("dataset has no records")
        if self.labels.max() >= self.meta.num_classes:
            raise FormatError(
                f"label {int(self.labels.max())} >= class count {self.meta.num_classes}"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def image(self, i: int) -> np.ndarray:
        """One image as float64 (H, W, C) in [0, 1]."""
        return self.pixels[i].astype(np.float64) / 255.0

    def batch_float(self, indices: np.ndarray) -> np.ndarray:
        """Gather images as float64 (B, H, W, C) in [0, 1]."""
        return self.pixels[indices].astype(np.float64) / 255.0


def load_records(path: str | Path, meta: DatasetMeta = DatasetMeta()) -> Dataset:
    """Parse a binary record file; pixel bytes map to [0, 1] via /255 on access."""
    path = Path(path)
    raw = path.read_bytes()
    rec = meta.record_bytes
    if len(raw) == 0 or len(raw) % rec != 0:
        raise FormatError(
            f"{path}: file length {len(raw)} is not a positive multiple of "
            f"record length {rec}"
        )
    n = len(raw) // rec
    flat = np.frombuffer(raw, dtype=np.uint8).reshape(n, rec)
    labels = flat[:, 0].copy()
    planes = flat[:, 1:].reshape(n, meta.channels, meta.height, meta.width)
    pixels = np.ascontiguousarray(planes.transpose(0, 2, 3, 1))
    checksum = hashlib.sha256(raw).hexdigest()
    return Dataset(labels, pixels, replace(meta, checksum=checksum))


def save_records(dataset: Dataset, path: str | Path) -> str:
    """Write records in the binary layout plus a plain-text metadata sidecar.

    Returns the sha256 checksum of the written bytes.
    """
    path = Path(path)
    meta = dataset.meta
    planes = dataset.pixels.transpose(0, 3, 1, 2).reshape(len(dataset), -1)
    body = np.concatenate([dataset.labels[:, None], planes], axis=1)
    raw = body.astype(np.uint8).tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(raw)
    checksum = hashlib.sha256(raw).hexdigest()
    sidecar = path.with_suffix(".meta")
    sidecar.write_text(
        f"height = {meta.height}\n"
        f"width = {meta.width}\n"
        f"channels = {meta.channels}\n"
        f"num_classes = {meta.num_classes}\n"
        f"split = {meta.split}\n"
        f"records = {len(dataset)}\n"
        f"sha256 = {checksum}\n"
    )
    return checksum


def subset(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Class-stratified sample of n records, deterministic for a given seed.

    Falls back to a uniform sample (with a warning) when some class cannot
    fill its stratum.
    """
    if n > len(dataset) or n < 1:
        raise ValueError(f"cannot take {n} records from {len(dataset)}")
    rng = np.random.default_rng([seed, len(dataset), n])
    classes = dataset.meta.num_classes
    base, extra = divmod(n, classes)
    quotas = [base + (1 if c < extra else 0) for c in range(classes)]
    per_class = [np.flatnonzero(dataset.labels == c) for c in range(classes)]
    if any(len(idx) < q for idx, q in zip(per_class, quotas)):
        warnings.warn(
            "class too small for stratified subset; sampling uniformly",
            stacklevel=2,
        )
        chosen = rng.choice(len(dataset), size=n, replace=False)
    else:
        parts = [
            rng.choice(idx, size=q, replace=False)
            for idx, q in zip(per_class, quotas)
        ]
        chosen = np.concatenate(parts)
    chosen.sort()
    return Dataset(
        dataset.labels[chosen].copy(),
        dataset.pixels[chosen].copy(),
        replace(dataset.meta, split=f"{dataset.meta.split}:subset{n}"),
    )


# ---------------------------------------------------------------------------
# Epoch iteration


@dataclass(frozen=True)
class BatchPlan:
    """Deterministic recipe for one epoch of batches.

    The shuffle permutation depends only on (data_seed, epoch). Blur and
    augmentation draws are indexed by dataset position on separate streams,
    so shuffle order, worker count, and the augment flag never perturb the
    per-image blur sequence.
    """

    epoch: int
    batch_size: int
    augment: bool
    data_seed: int
    blur_seed: int
    aug_seed: int
    permutation: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.permutation)
        if not np.array_equal(np.sort(perm), np.arange(len(perm))):
            raise ValueError("permutation must be a bijection over record indices")


def plan_epoch(
    dataset: Dataset,
    epoch: int,
    batch_size: int,
    augment: bool,
    data_seed: int,
    blur_seed: int,
    aug_seed: int,
) -> BatchPlan:
    perm = np.random.default_rng([data_seed, epoch]).permutation(len(dataset))
    return BatchPlan(epoch, batch_size, augment, data_seed, blur_seed, aug_seed, perm)


def epoch_sigmas(plan: BatchPlan, policy: BlurPolicy, count: int) -> np.ndarray:
    """Per-image blur levels for the epoch, indexed by dataset position."""
    rng = np.random.default_rng([plan.blur_seed, plan.epoch])
    return policy.sample_epoch(plan.epoch, count, rng)


def _epoch_augment_draws(plan: BatchPlan, count: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([plan.aug_seed, plan.epoch])
    offsets = rng.integers(0, 2 * PAD + 1, size=(count, 2))
    flips = rng.random(count) < 0.5
    return offsets, flips


def _crop_flip(batch: np.ndarray, offsets: np.ndarray, flips: np.ndarray) -> np.ndarray:
    n, h, w, c = batch.shape
    padded = np.pad(batch, ((0, 0), (PAD, PAD), (PAD, PAD), (0, 0)))
    rows = offsets[:, 0][:, None] + np.arange(h)[None, :]
    cols = offsets[:, 1][:, None] + np.arange(w)[None, :]
    out = padded[np.arange(n)[:, None, None], rows[:, :, None], cols[:, None, :], :]
    out[flips] = out[flips, :, ::-1, :]
    return out


def iterate_epoch(dataset: Dataset, plan: BatchPlan, policy: BlurPolicy):
    """Yield (images, labels) batches for one epoch.

    Per image: draw sigma from the blur policy, blur, then (when enabled)
    pad-4 random crop and horizontal flip. Images come out float32
    (B, H, W, C) in [0, 1]; labels int64.
    """
    n = len(dataset)
    sigmas = epoch_sigmas(plan, policy, n)
    offsets, flips = (
        _epoch_augment_draws(plan, n) if plan.augment else (None, None)
    )
    perm = plan.permutation
    for start in range(0, n, plan.batch_size):
        idx = perm[start : start + plan.batch_size]
        batch = dataset.batch_float(idx)
        batch_sigmas = sigmas[idx]
        for sigma in np.unique(batch_sigmas):
            if sigma == 0.0:
                continue
            mask = batch_sigmas == sigma
            batch[mask] = blur_stack(batch[mask], float(sigma))
        if plan.augment:
            batch = _crop_flip(batch, offsets[idx], flips[idx])
        yield batch.astype(np.float32), dataset.labels[idx].astype(np.int64)
