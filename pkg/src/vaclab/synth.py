"""Deterministic synthetic 10-class image set in the binary record format.

Each class carries two redundant cues: a coarse solid shape and a fine
high-frequency texture drawn inside it, either of which identifies the
class on clean images. The textures (stripes, checkers, cross-hatch at
periods of 2-4 px) are the easy cue for a fresh network but are erased by
Gaussian blur at sigma >= 2 and damaged by noise, pixelation, and DCT
quantization; the shapes survive those. Low figure-ground contrast and
soft background clutter keep the shape cue learnable but not free. This
split is what makes the set a desk-scale instrument for robustness
experiments: texture-reliant models collapse under corruption while
shape-reliant models degrade gracefully.

All textures and shapes are invariant under horizontal flips, so standard
flip augmentation never leaks one class's cue into another.

Every image is a pure function of (seed, split, index): regeneration is
byte-identical and order-independent.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Dataset, DatasetMeta, save_records

__all__ = ["NUM_CLASSES", "make_dataset", "write_fixture", "class_name"]

NUM_CLASSES = 10

_SHAPES = ("disk", "square", "triangle_up", "triangle_down", "cross",
           "diamond", "ellipse_h", "ellipse_v", "ring", "xcross")

# (pattern, period px); all flip-invariant, all erased by sigma-2 blur
_TEXTURES = (
    ("hstripe", 2), ("vstripe", 2), ("checker", 2),
    ("hstripe", 3), ("vstripe", 3), ("checker", 3),
    ("hstripe", 4), ("vstripe", 4), ("checker", 4),
    ("xhatch", 2),
)

_SPLIT_CODES = {"train": 0, "test": 1, "val": 2, "calib": 3}

TEXTURE_AMP = (0.14, 0.24)
NOISE_STD = 0.03


def class_name(label: int) -> str:
    pattern, period = _TEXTURES[label]
    return f"{_SHAPES[label]}-{pattern}{period}"


def _shape_mask(shape_id: int, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    cy = h / 2 + rng.uniform(-3, 3)
    cx = w / 2 + rng.uniform(-3, 3)
    s = rng.uniform(0.28, 0.38) * min(h, w)
    yy, xx = np.mgrid[0:h, 0:w]
    dy = yy - cy
    dx = xx - cx
    shape = _SHAPES[shape_id]
    if shape == "disk":
        return dy * dy + dx * dx <= s * s
    if shape == "square":
        t = 0.82 * s
        return (np.abs(dy) <= t) & (np.abs(dx) <= t)
    if shape == "triangle_up":
        top = dy + s
        return (top >= 0) & (top <= 1.8 * s) & (np.abs(dx) <= 0.62 * top)
    if shape == "triangle_down":
        bot = s - dy
        return (bot >= 0) & (bot <= 1.8 * s) & (np.abs(dx) <= 0.62 * bot)
    if shape == "cross":
        arm = 0.38 * s
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= 1.15 * s)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= 1.15 * s)
        )
    if shape == "diamond":
        return np.abs(dy) + np.abs(dx) <= 1.15 * s
    if shape == "ellipse_h":
        return (dx / (1.25 * s)) ** 2 + (dy / (0.6 * s)) ** 2 <= 1.0
    if shape == "ellipse_v":
        return (dx / (0.6 * s)) ** 2 + (dy / (1.25 * s)) ** 2 <= 1.0
    if shape == "ring":
        r2 = dy * dy + dx * dx
        return (r2 <= s * s) & (r2 >= (0.5 * s) ** 2)
    if shape == "xcross":
        arm = 0.5 * s
        along = np.abs(dy - dx) <= arm
        across = np.abs(dy + dx) <= arm
        reach = np.maximum(np.abs(dy), np.abs(dx)) <= 1.15 * s
        return (along | across) & reach
    raise ValueError(f"unknown shape id {shape_id}")


def _texture(label: int, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    pattern, period = _TEXTURES[label]
    amp = rng.uniform(*TEXTURE_AMP)
    yy, xx = np.mgrid[0:h, 0:w]
    py = rng.integers(0, period)
    px = rng.integers(0, period)
    half = period / 2
    ybit = ((yy + py) % period) < half
    xbit = ((xx + px) % period) < half
    if pattern == "hstripe":
        field = ybit
    elif pattern == "vstripe":
        field = xbit
    elif pattern == "checker":
        field = ybit ^ xbit
    elif pattern == "xhatch":
        field = ((yy + xx + py) % period < half) ^ ((yy - xx + px) % period < half)
    else:
        raise ValueError(pattern)
    return amp * np.where(field, 1.0, -1.0)


def _render(label: int, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    bg = rng.uniform(0.15, 0.50, size=3)
    ramp = (np.arange(h, dtype=np.float64) / max(h - 1, 1))[:, None, None]
    tilt = rng.uniform(-0.08, 0.08, size=3)
    canvas = bg + tilt * (ramp - 0.5) * np.ones((h, w, 1))
    # soft clutter blobs keep the background from being a giveaway
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(2):
        by, bx = rng.uniform(0, h), rng.uniform(0, w)
        radius = rng.uniform(4, 9)
        bump = np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * radius * radius))
        canvas += bump[:, :, None] * rng.uniform(-0.15, 0.15, size=3)
    mask = _shape_mask(label, rng, h, w)
    # low figure-ground contrast: the shape needs learning, not thresholding
    sign = 1.0 if rng.random() < 0.5 else -1.0
    fg = np.clip(bg + sign * rng.uniform(0.12, 0.30) + rng.uniform(-0.05, 0.05, 3),
                 0.08, 0.92)
    canvas[mask] = fg
    canvas[mask] += _texture(label, rng, h, w)[mask, None]
    canvas += rng.normal(0.0, NOISE_STD, size=canvas.shape)
    return np.clip(canvas, 0.0, 1.0)


def make_dataset(n: int, seed: int, split: str = "train",
                 height: int = 32, width: int = 32) -> Dataset:
    """Generate n records; labels cycle 0..9 so counts stay balanced."""
    if n < 1:
        raise ValueError(f"need at least one record, got {n}")
    try:
        split_code = _SPLIT_CODES[split]
    except KeyError:
        raise ValueError(f"unknown split {split!r}; use one of {sorted(_SPLIT_CODES)}")
    labels = (np.arange(n) % NUM_CLASSES).astype(np.uint8)
    pixels = np.empty((n, height, width, 3), dtype=np.uint8)
    for i in range(n):
        rng = np.random.default_rng([seed, split_code, i])
        img = _render(int(labels[i]), rng, height, width)
        pixels[i] = np.round(img * 255.0).astype(np.uint8)
    meta = DatasetMeta(height, width, 3, NUM_CLASSES, split=f"synth-{split}")
    return Dataset(labels, pixels, meta)


def write_fixture(path: str | Path, n: int, seed: int, split: str = "train") -> Dataset:
    """Generate and persist a record file; returns the in-memory dataset."""
    dataset = make_dataset(n, seed, split)
    save_records(dataset, path)
    return dataset
