"""Raster operations on unit-interval images.

Images are numpy arrays of shape (H, W, C) or (H, W), dtype float, with
intensities in [0, 1]. Every public operation clamps its output to [0, 1]
and computes in float64 internally regardless of the input dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "GaussianKernel",
    "make_kernel",
    "gaussian_blur",
    "blur_stack",
    "conv2d_reference",
    "psnr",
    "resize_bilinear",
    "resize_nearest",
]


@dataclass(frozen=True)
class GaussianKernel:
    """1-D Gaussian tap weights truncated at radius ceil(3*sigma)."""

    sigma: float
    radius: int
    weights: np.ndarray  # length 2*radius + 1, symmetric, sums to 1


def make_kernel(sigma: float) -> GaussianKernel:
    """Build the normalized 1-D Gaussian kernel for standard deviation ``sigma``.

    ``sigma == 0`` yields the length-1 identity kernel.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return GaussianKernel(0.0, 0, np.array([1.0]))
    radius = math.ceil(3 * sigma)
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(taps * taps) / (2.0 * sigma * sigma))
    weights /= weights.sum()
    return GaussianKernel(float(sigma), radius, weights)


def _as_hwc(image: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return arr[:, :, None], True
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W) or (H, W, C) image, got shape {arr.shape}")
    return arr, False


def _correlate_axis(arr: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """Correlate along one axis with mirrored (half-sample symmetric) borders.

    Mirrored extension keeps constant images fixed and preserves total
    intensity exactly for symmetric kernels.
    """
    radius = (len(weights) - 1) // 2
    if radius == 0:
        return arr * weights[0]
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="symmetric")
    out = np.zeros_like(arr)
    for t, w in enumerate(weights):
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(t, t + arr.shape[axis])
        out += w * padded[tuple(sl)]
    return out


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur (horizontal then vertical pass), per channel.

    ``sigma == 0`` returns a bit-exact copy of the input.
    """
    arr, was_2d = _as_hwc(image)
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        out = arr.copy()
    else:
        kernel = make_kernel(sigma)
        out = _correlate_axis(arr, kernel.weights, axis=1)
        out = _correlate_axis(out, kernel.weights, axis=0)
        np.clip(out, 0.0, 1.0, out=out)
    return out[:, :, 0] if was_2d else out


def blur_stack(images: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian-blur a stack of images (N, H, W, C) in one vectorized pass.

    Produces the same values as blurring each image individually.
    """
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"expected (N, H, W, C) stack, got shape {arr.shape}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return arr.copy()
    kernel = make_kernel(sigma)
    out = _correlate_axis(arr, kernel.weights, axis=2)
    out = _correlate_axis(out, kernel.weights, axis=1)
    np.clip(out, 0.0, 1.0, out=out)
    return out


def conv2d_reference(image: np.ndarray, kernel2d: np.ndarray) -> np.ndarray:
    """Direct 2-D convolution with mirrored borders. O(H*W*k^2).

    Brute-force path kept independent of the separable implementation; used
    as the test oracle for separability and for non-separable kernels (disk,
    line) in the corruption generator.
    """
    kernel = np.asarray(kernel2d, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"kernel must be square, got shape {kernel.shape}")
    if kernel.shape[0] % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {kernel.shape[0]}")
    arr, was_2d = _as_hwc(image)
    k = kernel.shape[0]
    r = k // 2
    flipped = kernel[::-1, ::-1]
    if r == 0:
        out = arr * flipped[0, 0]
    else:
        padded = np.pad(arr, ((r, r), (r, r), (0, 0)), mode="symmetric")
        windows = sliding_window_view(padded, (k, k), axis=(0, 1))
        out = np.einsum("hwcij,ij->hwc", windows, flipped, optimize=True)
    np.clip(out, 0.0, 1.0, out=out)
    return out[:, :, 0] if was_2d else out


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-interval images.

    Identical inputs give +infinity.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _source_coords(length_out: int, length_in: int) -> np.ndarray:
    # half-pixel centers: dst pixel i samples src at (i + 0.5) * scale - 0.5
    scale = length_in / length_out
    return (np.arange(length_out, dtype=np.float64) + 0.5) * scale - 0.5


def resize_bilinear(image: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers."""
    if new_h <= 0 or new_w <= 0:
        raise ValueError(f"target dimensions must be positive, got {new_h}x{new_w}")
    arr, was_2d = _as_hwc(image)
    h, w = arr.shape[:2]
    ys = np.clip(_source_coords(new_h, h), 0.0, h - 1.0)
    xs = np.clip(_source_coords(new_w, w), 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = arr[y0][:, x0] * (1.0 - fx) + arr[y0][:, x1] * fx
    bottom = arr[y1][:, x0] * (1.0 - fx) + arr[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    np.clip(out, 0.0, 1.0, out=out)
    return out[:, :, 0] if was_2d else out


def resize_nearest(image: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Nearest-neighbor resample with half-pixel centers (pixelate upscaling)."""
    if new_h <= 0 or new_w <= 0:
        raise ValueError(f"target dimensions must be positive, got {new_h}x{new_w}")
    arr, was_2d = _as_hwc(image)
    h, w = arr.shape[:2]
    ys = np.clip(np.floor(_source_coords(new_h, h) + 0.5), 0, h - 1).astype(np.intp)
    xs = np.clip(np.floor(_source_coords(new_w, w) + 0.5), 0, w - 1).astype(np.intp)
    out = arr[ys][:, xs].copy()
    return out[:, :, 0] if was_2d else out
