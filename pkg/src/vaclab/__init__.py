"""Blur-curriculum training lab: schedules, corruption benchmark, CNN, harness."""

from .curriculum import (
    CurriculumConfig,
    Schedule,
    Segment,
    define_curriculum,
    make_variant,
    replay_distribution,
    sample_blur_level,
    segment_at,
)
from .imaging import conv2d_reference, gaussian_blur, make_kernel, psnr, resize_bilinear

__all__ = [
    "CurriculumConfig",
    "Schedule",
    "Segment",
    "define_curriculum",
    "make_variant",
    "replay_distribution",
    "sample_blur_level",
    "segment_at",
    "conv2d_reference",
    "gaussian_blur",
    "make_kernel",
    "psnr",
    "resize_bilinear",
]

__version__ = "0.1.0"
