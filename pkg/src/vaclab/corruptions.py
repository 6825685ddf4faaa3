"""Deterministic common-corruption generator: 14 kinds x 5 severities.

Gaussian blur is deliberately not among the kinds (it is the training
curriculum's transform); the blur-family corruptions use disk, line, and
zoom kernels instead. Frost is omitted because its usual construction needs
external photographs. Severity parameters are tuned for 32x32 images and
validated by the PSNR calibration gate rather than copied from any published
archive.

Every corrupted pixel is a pure function of (clean image, kind, severity,
suite seed, image index); generation order and worker count cannot change
the output.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .data import Dataset, save_records
from .imaging import (
    conv2d_reference,
    gaussian_blur,
    psnr,
    resize_bilinear,
    resize_nearest,
)

__all__ = [
    "CalibrationError",
    "SuiteLayoutError",
    "CorruptionKind",
    "CorruptionSpec",
    "FAMILIES",
    "SEVERITY_TABLE",
    "apply_corruption",
    "generate_corrupted_dataset",
    "write_manifest",
    "parse_manifest",
    "severity_calibration_report",
    "plasma_fractal",
    "disk_kernel",
    "line_kernel",
]


class CalibrationError(RuntimeError):
    """Severity parameters fail the PSNR monotonicity gate."""


class SuiteLayoutError(RuntimeError):
    """Corrupted-suite directory is missing pieces or already populated."""


class CorruptionKind(str, Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    SHOT_NOISE = "shot_noise"
    IMPULSE_NOISE = "impulse_noise"
    DEFOCUS_BLUR = "defocus_blur"
    GLASS_BLUR = "glass_blur"
    MOTION_BLUR = "motion_blur"
    ZOOM_BLUR = "zoom_blur"
    SNOW = "snow"
    FOG = "fog"
    BRIGHTNESS = "brightness"
    CONTRAST = "contrast"
    ELASTIC_TRANSFORM = "elastic_transform"
    PIXELATE = "pixelate"
    JPEG_APPROX = "jpeg_approx"


FAMILIES = {
    "noise": (CorruptionKind.GAUSSIAN_NOISE, CorruptionKind.SHOT_NOISE,
              CorruptionKind.IMPULSE_NOISE),
    "blur": (CorruptionKind.DEFOCUS_BLUR, CorruptionKind.GLASS_BLUR,
             CorruptionKind.MOTION_BLUR, CorruptionKind.ZOOM_BLUR),
    "weather": (CorruptionKind.SNOW, CorruptionKind.FOG),
    "digital": (CorruptionKind.BRIGHTNESS, CorruptionKind.CONTRAST,
                CorruptionKind.ELASTIC_TRANSFORM, CorruptionKind.PIXELATE,
                CorruptionKind.JPEG_APPROX),
}

# Per-kind parameters for severities 1..5, distortion strictly increasing.
SEVERITY_TABLE: dict[CorruptionKind, tuple] = {
    CorruptionKind.GAUSSIAN_NOISE: (0.04, 0.08, 0.14, 0.22, 0.30),
    CorruptionKind.SHOT_NOISE: (60.0, 25.0, 12.0, 5.0, 3.0),
    CorruptionKind.IMPULSE_NOISE: (0.02, 0.05, 0.10, 0.17, 0.26),
    CorruptionKind.DEFOCUS_BLUR: (1.0, 2.0, 3.0, 4.5, 6.5),
    # (pre/post blur sigma, swap radius, iterations); fixed sigma so the
    # swap scramble alone drives the severity ordering
    CorruptionKind.GLASS_BLUR: ((0.40, 1, 1), (0.40, 2, 2), (0.40, 3, 2),
                                (0.40, 4, 2), (0.40, 4, 4)),
    CorruptionKind.MOTION_BLUR: (3, 5, 7, 11, 15),
    CorruptionKind.ZOOM_BLUR: (1.06, 1.12, 1.18, 1.25, 1.33),
    # (speckle mean, keep threshold, streak length, base mix)
    CorruptionKind.SNOW: ((0.05, 0.70, 3, 0.95), (0.12, 0.65, 5, 0.90),
                          (0.20, 0.60, 5, 0.85), (0.28, 0.55, 7, 0.78),
                          (0.36, 0.50, 9, 0.70)),
    # (haze strength, roughness decay)
    CorruptionKind.FOG: ((0.6, 2.0), (0.9, 2.0), (1.2, 1.7), (1.5, 1.5),
                         (1.9, 1.4)),
    CorruptionKind.BRIGHTNESS: (0.08, 0.14, 0.20, 0.28, 0.36),
    CorruptionKind.CONTRAST: (0.60, 0.45, 0.32, 0.22, 0.14),
    # (max displacement px, field smoothing sigma)
    CorruptionKind.ELASTIC_TRANSFORM: ((1.5, 4.0), (2.5, 4.0), (3.5, 4.0),
                                       (4.5, 4.0), (6.0, 4.0)),
    CorruptionKind.PIXELATE: (0.75, 0.60, 0.45, 0.32, 0.20),
    CorruptionKind.JPEG_APPROX: (0.6, 1.0, 1.6, 2.6, 4.0),
}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    severity: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "kind", CorruptionKind(self.kind))
        if not (1 <= self.severity <= 5):
            raise ValueError(f"severity must be 1..5, got {self.severity}")


def _rng_for(spec: CorruptionSpec, index: int) -> np.random.Generator:
    kind_id = list(CorruptionKind).index(spec.kind)
    return np.random.default_rng(
        [spec.seed & 0xFFFFFFFFFFFFFFFF, kind_id, spec.severity, index]
    )


# ---------------------------------------------------------------------------
# Kernels and procedural noise


def disk_kernel(radius: float, supersample: int = 8) -> np.ndarray:
    """Anti-aliased flat disk, normalized; flat support distinguishes it from
    a Gaussian by construction."""
    if radius <= 0:
        raise ValueError("disk radius must be positive")
    r = math.ceil(radius)
    size = 2 * r + 1
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    yy = np.arange(-r, r + 1)[:, None, None, None] + sub[None, :, None, None]
    xx = np.arange(-r, r + 1)[None, None, :, None] + sub[None, None, None, :]
    inside = (yy * yy + xx * xx) <= radius * radius
    kernel = inside.mean(axis=(1, 3)).reshape(size, size)
    return kernel / kernel.sum()


def line_kernel(length: int, angle: float) -> np.ndarray:
    """Anti-aliased line through the center at ``angle`` radians, normalized."""
    if length < 1 or length % 2 == 0:
        raise ValueError("line length must be odd and positive")
    r = length // 2
    size = 2 * r + 1
    kernel = np.zeros((size, size))
    if r == 0:
        kernel[0, 0] = 1.0
        return kernel
    ts = np.linspace(-r, r, 8 * length)
    ys = ts * math.sin(angle) + r
    xs = ts * math.cos(angle) + r
    y0 = np.clip(np.floor(ys).astype(int), 0, size - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, size - 2)
    fy = ys - y0
    fx = xs - x0
    np.add.at(kernel, (y0, x0), (1 - fy) * (1 - fx))
    np.add.at(kernel, (y0, x0 + 1), (1 - fy) * fx)
    np.add.at(kernel, (y0 + 1, x0), fy * (1 - fx))
    np.add.at(kernel, (y0 + 1, x0 + 1), fy * fx)
    return kernel / kernel.sum()


def plasma_fractal(size: int, rng: np.random.Generator, decay: float = 2.0) -> np.ndarray:
    """Diamond-square heightmap with wraparound, normalized to [0, 1]."""
    if size < 2 or size & (size - 1):
        raise ValueError(f"size must be a power of two >= 2, got {size}")
    arr = np.zeros((size, size))
    step = size
    amp = 1.0
    while step >= 2:
        half = step // 2
        corners = arr[0:size:step, 0:size:step]
        centers_mean = (
            corners
            + np.roll(corners, -1, 0)
            + np.roll(corners, -1, 1)
            + np.roll(np.roll(corners, -1, 0), -1, 1)
        ) / 4
        arr[half::step, half::step] = centers_mean + amp * rng.uniform(
            -1, 1, centers_mean.shape
        )
        centers = arr[half::step, half::step]
        arr[half::step, 0::step] = (
            corners + np.roll(corners, -1, 0) + centers + np.roll(centers, 1, 1)
        ) / 4 + amp * rng.uniform(-1, 1, corners.shape)
        arr[0::step, half::step] = (
            corners + np.roll(corners, -1, 1) + centers + np.roll(centers, 1, 0)
        ) / 4 + amp * rng.uniform(-1, 1, corners.shape)
        step = half
        amp /= decay
    arr -= arr.min()
    peak = arr.max()
    return arr / peak if peak > 0 else arr


def _bilinear_at(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    return (
        img[y0, x0] * (1 - fy) * (1 - fx)
        + img[y0, x1] * (1 - fy) * fx
        + img[y1, x0] * fy * (1 - fx)
        + img[y1, x1] * fy * fx
    )


# ---------------------------------------------------------------------------
# Per-kind transforms (img: float64 HWC in [0,1]; clamping happens centrally)


def _gaussian_noise(img, rng, std):
    return img + rng.normal(0.0, std, size=img.shape) if std > 0 else img.copy()


def _shot_noise(img, rng, photons):
    return rng.poisson(img * photons) / photons


def _impulse_noise(img, rng, fraction):
    h, w = img.shape[:2]
    count = int(fraction * h * w)
    out = img.copy()
    if count == 0:
        return out
    flat = rng.choice(h * w, size=count, replace=False)
    values = rng.integers(0, 2, size=count).astype(np.float64)
    out.reshape(h * w, -1)[flat] = values[:, None]
    return out


def _defocus_blur(img, rng, radius):
    return conv2d_reference(img, disk_kernel(radius))


def _glass_blur(img, rng, params):
    sigma, max_delta, iterations = params
    out = gaussian_blur(img, sigma)
    h, w = out.shape[:2]
    base_y = np.arange(h)[:, None]
    base_x = np.arange(w)[None, :]
    for _ in range(iterations):
        dy = rng.integers(-max_delta, max_delta + 1, size=(h, w))
        dx = rng.integers(-max_delta, max_delta + 1, size=(h, w))
        ys = np.clip(base_y + dy, 0, h - 1)
        xs = np.clip(base_x + dx, 0, w - 1)
        src = out.copy()
        out = src[ys, xs]       # each pixel takes its partner's value
        out[ys, xs] = src       # partners take the original values
    return gaussian_blur(out, sigma)


def _motion_blur(img, rng, length):
    angle = rng.uniform(0.0, math.pi)
    return conv2d_reference(img, line_kernel(length, angle))


def _zoom_blur(img, rng, max_zoom):
    h, w = img.shape[:2]
    layers = [img]
    for zoom in np.linspace(1.0, max_zoom, 8)[1:]:
        ch = max(int(round(h / zoom)), 2)
        cw = max(int(round(w / zoom)), 2)
        top = (h - ch) // 2
        left = (w - cw) // 2
        crop = img[top : top + ch, left : left + cw]
        layers.append(resize_bilinear(crop, h, w))
    return np.mean(layers, axis=0)


def _snow(img, rng, params):
    loc, thresh, streak, mix = params
    h, w = img.shape[:2]
    layer = rng.normal(loc, 0.3, size=(h, w))
    layer[layer < thresh] = 0.0
    np.clip(layer, 0.0, 1.0, out=layer)
    angle = rng.uniform(math.radians(-70.0), math.radians(-20.0))
    layer = conv2d_reference(layer, line_kernel(streak, angle))
    gray = img.mean(axis=2, keepdims=True)
    whitened = np.maximum(img, gray * 1.5 + 0.5)
    base = mix * img + (1.0 - mix) * whitened
    return base + layer[:, :, None]


def _fog(img, rng, params):
    strength, decay = params
    h, w = img.shape[:2]
    size = 1 << max(h - 1, w - 1, 1).bit_length()
    haze = plasma_fractal(size, rng, decay)[:h, :w, None]
    alpha = np.clip(strength * haze, 0.0, 1.0)
    return img * (1.0 - alpha) + alpha


def _brightness(img, rng, shift):
    return img + shift


def _contrast(img, rng, factor):
    mean = img.mean()
    return (img - mean) * factor + mean


def _elastic_transform(img, rng, params):
    alpha, field_sigma = params
    h, w = img.shape[:2]
    fields = []
    for _ in range(2):
        noise = rng.random((h, w))
        smooth = gaussian_blur(noise, field_sigma) - 0.5
        peak = np.abs(smooth).max()
        fields.append(smooth / peak * alpha if peak > 0 else smooth)
    dy, dx = fields
    ys = np.arange(h)[:, None] + dy
    xs = np.arange(w)[None, :] + dx
    return _bilinear_at(img, ys, xs)


def _pixelate(img, rng, scale):
    h, w = img.shape[:2]
    down = resize_bilinear(img, max(int(round(h * scale)), 1),
                           max(int(round(w * scale)), 1))
    return resize_nearest(down, h, w)


_DCT8 = np.array(
    [
        [math.sqrt((1 if k == 0 else 2) / 8) * math.cos(math.pi * (2 * n + 1) * k / 16)
         for n in range(8)]
        for k in range(8)
    ]
)

# JPEG Annex K luminance quantization table, rescaled to unit-interval pixels.
_QUANT8 = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
) / 255.0


def _jpeg_approx(img, rng, scale):
    h, w, c = img.shape
    ph = (-h) % 8
    pw = (-w) % 8
    padded = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="symmetric") - 0.5
    hb, wb = padded.shape[0] // 8, padded.shape[1] // 8
    blocks = padded.reshape(hb, 8, wb, 8, c).transpose(0, 2, 4, 1, 3)
    coef = np.einsum("ab,nmcbd,ed->nmcae", _DCT8, blocks, _DCT8, optimize=True)
    q = _QUANT8 * scale
    coef = np.round(coef / q) * q
    blocks = np.einsum("ba,nmcbd,de->nmcae", _DCT8, coef, _DCT8, optimize=True)
    out = blocks.transpose(0, 3, 1, 4, 2).reshape(hb * 8, wb * 8, c) + 0.5
    return out[:h, :w]


_TRANSFORMS = {
    CorruptionKind.GAUSSIAN_NOISE: _gaussian_noise,
    CorruptionKind.SHOT_NOISE: _shot_noise,
    CorruptionKind.IMPULSE_NOISE: _impulse_noise,
    CorruptionKind.DEFOCUS_BLUR: _defocus_blur,
    CorruptionKind.GLASS_BLUR: _glass_blur,
    CorruptionKind.MOTION_BLUR: _motion_blur,
    CorruptionKind.ZOOM_BLUR: _zoom_blur,
    CorruptionKind.SNOW: _snow,
    CorruptionKind.FOG: _fog,
    CorruptionKind.BRIGHTNESS: _brightness,
    CorruptionKind.CONTRAST: _contrast,
    CorruptionKind.ELASTIC_TRANSFORM: _elastic_transform,
    CorruptionKind.PIXELATE: _pixelate,
    CorruptionKind.JPEG_APPROX: _jpeg_approx,
}


def apply_corruption(image: np.ndarray, spec: CorruptionSpec, index: int = 0,
                     params=None) -> np.ndarray:
    """Corrupt one image; deterministic for fixed (image, spec, index).

    ``params`` overrides the severity-table entry (calibration tooling only).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {img.shape}")
    transform = _TRANSFORMS.get(CorruptionKind(spec.kind))
    if transform is None:
        raise ValueError(f"unknown corruption kind {spec.kind!r}")
    if params is None:
        params = SEVERITY_TABLE[spec.kind][spec.severity - 1]
    out = transform(img, _rng_for(spec, index), params)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Suite generation


def _corrupt_dataset(dataset: Dataset, spec: CorruptionSpec) -> Dataset:
    pixels = np.empty_like(dataset.pixels)
    for i in range(len(dataset)):
        out = apply_corruption(dataset.image(i), spec, index=i)
        pixels[i] = np.round(out * 255.0).astype(np.uint8)
    meta = dataset.meta
    from dataclasses import replace

    return Dataset(
        dataset.labels.copy(),
        pixels,
        replace(meta, split=f"{spec.kind.value}-s{spec.severity}"),
    )


def generate_corrupted_dataset(
    dataset: Dataset,
    kinds,
    severities,
    seed: int,
    out_root: str | Path,
    overwrite: bool = False,
) -> Path:
    """Write one record-set per (kind, severity) plus a manifest.

    Layout: <out_root>/<kind>/<severity>/data.bin. Labels are copied from the
    source set. Returns the manifest path.
    """
    kinds = [CorruptionKind(k) for k in kinds]
    if not kinds:
        raise ValueError("need at least one corruption kind")
    severities = [int(s) for s in severities]
    for s in severities:
        if not 1 <= s <= 5:
            raise ValueError(f"severity must be 1..5, got {s}")
    out_root = Path(out_root)
    manifest_path = out_root / "manifest.txt"
    if manifest_path.exists() and not overwrite:
        raise SuiteLayoutError(
            f"{manifest_path} already exists; pass overwrite to regenerate"
        )
    checksums = {}
    for kind in kinds:
        for severity in severities:
            spec = CorruptionSpec(kind, severity, seed)
            corrupted = _corrupt_dataset(dataset, spec)
            checksums[(kind, severity)] = save_records(
                corrupted, out_root / kind.value / str(severity) / "data.bin"
            )
    write_manifest(manifest_path, dataset, kinds, severities, seed, checksums)
    return manifest_path


def write_manifest(path: Path, dataset: Dataset, kinds, severities, seed,
                   checksums) -> None:
    lines = [
        "# corrupted-suite manifest",
        f"seed = {seed}",
        f"records = {len(dataset)}",
        f"source_sha256 = {dataset.meta.checksum}",
        f"label_sha256 = {hashlib.sha256(dataset.labels.tobytes()).hexdigest()}",
        f"kinds = {','.join(k.value for k in kinds)}",
        f"severities = {','.join(str(s) for s in severities)}",
    ]
    for kind in kinds:
        params = SEVERITY_TABLE[kind]
        for severity in severities:
            lines.append(f"param {kind.value} {severity} = {params[severity - 1]!r}")
    for (kind, severity), digest in checksums.items():
        lines.append(f"sha256 {kind.value} {severity} = {digest}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def parse_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SuiteLayoutError(f"missing manifest {path}")
    info: dict = {"params": {}, "sha256": {}}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key.startswith("param "):
            _, kind, severity = key.split()
            info["params"][(kind, int(severity))] = value
        elif key.startswith("sha256 "):
            _, kind, severity = key.split()
            info["sha256"][(kind, int(severity))] = value
        elif key == "kinds":
            info["kinds"] = value.split(",") if value else []
        elif key == "severities":
            info["severities"] = [int(s) for s in value.split(",")] if value else []
        else:
            info[key] = value
    return info


def severity_calibration_report(kinds, sample_images, seed: int = 0,
                                table: dict | None = None) -> dict:
    """Mean PSNR per (kind, severity) over sample images.

    Raises CalibrationError unless mean PSNR strictly decreases with
    severity for every kind. Needs at least 100 sample images.
    """
    if len(sample_images) < 100:
        raise ValueError(f"need >= 100 sample images, got {len(sample_images)}")
    kinds = [CorruptionKind(k) for k in kinds]
    table = SEVERITY_TABLE if table is None else table
    report: dict[CorruptionKind, list[float]] = {}
    violations = []
    for kind in kinds:
        means = []
        for severity in range(1, 6):
            spec = CorruptionSpec(kind, severity, seed)
            params = table[kind][severity - 1]
            values = [
                psnr(img, apply_corruption(img, spec, index=i, params=params))
                for i, img in enumerate(sample_images)
            ]
            means.append(float(np.mean(values)))
        report[kind] = means
        for s in range(1, 5):
            if not means[s] < means[s - 1]:
                violations.append(
                    f"{kind.value}: severity {s + 1} PSNR {means[s]:.3f} dB is not "
                    f"below severity {s} PSNR {means[s - 1]:.3f} dB"
                )
    if violations:
        raise CalibrationError("; ".join(violations))
    return report
