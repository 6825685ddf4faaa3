"""Blur schedules for acuity-style curriculum training.

A schedule is an ordered list of (epochs, sigma) segments. The standard
curriculum spends a deficit window (default the first 20% of epochs) on
progressively halving blur levels and the remainder on unblurred images,
with earlier blur levels replayed in proportion to their epoch budgets.
This module owns schedule construction, the ablation variants, replay
sampling, and per-image blur policies; it knows nothing about images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "ConfigurationError",
    "InfeasibleScheduleError",
    "CurriculumConfig",
    "Segment",
    "Schedule",
    "ReplayDistribution",
    "define_curriculum",
    "segment_at",
    "replay_distribution",
    "sample_blur_level",
    "make_variant",
    "BlurPolicy",
    "SchedulePolicy",
    "ConstantBlurPolicy",
    "ContinuousBlurPolicy",
    "vanilla_policy",
    "schedule_to_text",
    "parse_schedule",
]

SCHEDULE_KINDS = ("vac", "linear", "inverse", "steep", "constant", "continuous")


class ConfigurationError(ValueError):
    """Invalid curriculum parameters."""


class InfeasibleScheduleError(ConfigurationError):
    """The deficit window is too short to give every blur segment an epoch."""


def _as_fraction(value) -> Fraction:
    # Floats like 0.2 arrive from config files; snap them to the intended
    # small rational so floor(N * fraction) matches exact arithmetic.
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10_000)
    if isinstance(value, str):
        return Fraction(value)
    raise ConfigurationError(f"cannot interpret deficit fraction {value!r}")


@dataclass(frozen=True)
class CurriculumConfig:
    """Inputs for schedule construction.

    total_epochs: overall training length N.
    sigma_max: starting blur level; must be a power of two >= 1.
    deficit_fraction: fraction of N spent on blurred segments, in (0, 1).
    """

    total_epochs: int
    sigma_max: float
    deficit_fraction: Fraction = Fraction(1, 5)

    def __post_init__(self):
        object.__setattr__(self, "deficit_fraction", _as_fraction(self.deficit_fraction))
        if self.total_epochs < 5:
            raise ConfigurationError(
                f"total_epochs must be >= 5, got {self.total_epochs}"
            )
        s = self.sigma_max
        if s < 1 or 2 ** round(math.log2(s)) != s:
            raise ConfigurationError(
                f"sigma_max must be a power of two >= 1, got {s}"
            )
        if not (0 < self.deficit_fraction < 1):
            raise ConfigurationError(
                f"deficit_fraction must lie in (0, 1), got {self.deficit_fraction}"
            )

    @property
    def deficit_epochs(self) -> int:
        return int(self.total_epochs * self.deficit_fraction)  # floor: both positive


@dataclass(frozen=True)
class Segment:
    epochs: int
    sigma: float

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"segment epochs must be >= 1, got {self.epochs}")
        if self.sigma < 0:
            raise ConfigurationError(f"segment sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class Schedule:
    segments: tuple[Segment, ...]
    kind: str = "vac"
    _cumulative: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if not self.segments:
            raise ConfigurationError("schedule needs at least one segment")
        cum = []
        total = 0
        for seg in self.segments:
            total += seg.epochs
            cum.append(total)
        object.__setattr__(self, "_cumulative", tuple(cum))

    @property
    def total_epochs(self) -> int:
        return self._cumulative[-1]

    @property
    def sigmas(self) -> tuple[float, ...]:
        return tuple(seg.sigma for seg in self.segments)

    def as_pairs(self) -> list[tuple[int, float]]:
        return [(seg.epochs, seg.sigma) for seg in self.segments]


@dataclass(frozen=True)
class ReplayDistribution:
    """Sampling weights over schedule segments 0..i, proportional to epochs."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ConfigurationError("replay weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)


def define_curriculum(config: CurriculumConfig) -> Schedule:
    """Construct the progressive de-blurring schedule.

    The deficit window N_def = floor(N * deficit_fraction) is split across
    K+1 blur segments (K = log2(sigma_max)) whose raw epoch budgets double
    from n_0 = N_def / (2^(K+1) - 1). Budgets for segments 0..K-1 are
    rounded to nearest; the last blur segment takes the remainder so the
    window sums exactly. The final segment is (N - N_def, 0).
    """
    n_total = config.total_epochs
    n_def = config.deficit_epochs
    k_max = round(math.log2(config.sigma_max))
    if n_def < k_max + 1:
        raise InfeasibleScheduleError(
            f"deficit window of {n_def} epochs cannot cover {k_max + 1} blur segments"
        )
    denom = 2 ** (k_max + 1) - 1
    epochs: list[int] = []
    for k in range(k_max):
        epochs.append(int(math.floor(n_def * (2**k) / denom + 0.5)))
    epochs.append(n_def - sum(epochs))
    if any(e < 1 for e in epochs):
        raise InfeasibleScheduleError(
            f"integerized blur budgets {epochs} leave a segment without epochs"
        )
    segments = [
        Segment(e, config.sigma_max / (2**k)) for k, e in enumerate(epochs)
    ]
    segments.append(Segment(n_total - n_def, 0.0))
    return Schedule(tuple(segments), kind="vac")


def segment_at(schedule: Schedule, epoch: int) -> int:
    """Index of the segment containing zero-indexed ``epoch``."""
    if epoch < 0 or epoch >= schedule.total_epochs:
        raise IndexError(
            f"epoch {epoch} outside schedule of {schedule.total_epochs} epochs"
        )
    for i, bound in enumerate(schedule._cumulative):
        if epoch < bound:
            return i
    raise AssertionError("unreachable")


def replay_distribution(schedule: Schedule, segment_index: int) -> ReplayDistribution:
    """Weights p_j = n_j / sum(n_0..n_i) over segments 0..segment_index."""
    if segment_index < 0 or segment_index >= len(schedule.segments):
        raise IndexError(
            f"segment index {segment_index} outside schedule of "
            f"{len(schedule.segments)} segments"
        )
    counts = np.array(
        [seg.epochs for seg in schedule.segments[: segment_index + 1]],
        dtype=np.float64,
    )
    return ReplayDistribution(counts / counts.sum())


def sample_blur_level(
    dist: ReplayDistribution, schedule: Schedule, rng: np.random.Generator
) -> float:
    """Draw one sigma from the replay distribution (inverse-CDF on one uniform)."""
    j = _inverse_cdf(dist.weights, rng.random())
    return schedule.segments[j].sigma


def _inverse_cdf(weights: np.ndarray, u) -> np.intp:
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0  # guard the top bucket against rounding
    return np.searchsorted(cdf, u, side="right")


def make_variant(kind: str, total_epochs: int, **params):
    """Build an ablation variant: a Schedule or, for the sampled ones, a policy.

    linear      equal-duration deficit steps over the same sigma levels
    inverse     the standard schedule with its sigma sequence reversed
    steep       single (N_def, sigma_max) step, replay disabled
    constant    every epoch blurs each image with probability p at fixed sigma
    continuous  sigma fixed, blurred fraction decays linearly to 0 at N_def
    """
    sigma_max = params.pop("sigma_max", 2.0)
    deficit_fraction = _as_fraction(params.pop("deficit_fraction", Fraction(1, 5)))
    if kind == "linear":
        _require_no_extras(kind, params)
        config = CurriculumConfig(total_epochs, sigma_max, deficit_fraction)
        n_def = config.deficit_epochs
        k_max = round(math.log2(sigma_max))
        steps = k_max + 1
        if n_def < steps:
            raise InfeasibleScheduleError(
                f"deficit window of {n_def} epochs cannot cover {steps} blur segments"
            )
        base, extra = divmod(n_def, steps)
        # remainder goes to the later (lower-blur) steps
        epochs = [base + (1 if k >= steps - extra else 0) for k in range(steps)]
        segments = [Segment(e, sigma_max / (2**k)) for k, e in enumerate(epochs)]
        segments.append(Segment(total_epochs - n_def, 0.0))
        return Schedule(tuple(segments), kind="linear")
    if kind == "inverse":
        _require_no_extras(kind, params)
        vac = define_curriculum(CurriculumConfig(total_epochs, sigma_max, deficit_fraction))
        sigmas = tuple(reversed(vac.sigmas))
        segments = tuple(
            Segment(seg.epochs, sig) for seg, sig in zip(vac.segments, sigmas)
        )
        return Schedule(segments, kind="inverse")
    if kind == "steep":
        _require_no_extras(kind, params)
        config = CurriculumConfig(total_epochs, sigma_max, deficit_fraction)
        # single blur step as long as the linear schedule's first segment,
        # then straight to clean images
        k_max = round(math.log2(sigma_max))
        blur_epochs = config.deficit_epochs // (k_max + 1)
        if blur_epochs < 1:
            raise InfeasibleScheduleError(
                f"deficit window of {config.deficit_epochs} epochs is too short "
                f"for a steep step"
            )
        return Schedule(
            (Segment(blur_epochs, sigma_max), Segment(total_epochs - blur_epochs, 0.0)),
            kind="steep",
        )
    if kind == "constant":
        probability = params.pop("probability", 1.0)
        sigma = params.pop("sigma", sigma_max)
        _require_no_extras(kind, params)
        return ConstantBlurPolicy(probability, sigma)
    if kind == "continuous":
        sigma = params.pop("sigma", sigma_max)
        _require_no_extras(kind, params)
        n_def = CurriculumConfig(total_epochs, 2.0, deficit_fraction).deficit_epochs
        return ContinuousBlurPolicy(sigma, n_def)
    raise ConfigurationError(f"unknown variant kind {kind!r}")


def _require_no_extras(kind: str, params: dict):
    if params:
        raise ConfigurationError(f"unexpected parameters for {kind!r}: {sorted(params)}")


# ---------------------------------------------------------------------------
# Per-image blur policies


class BlurPolicy:
    """Maps (epoch, per-image randomness) to a blur level."""

    def sigma_levels(self) -> tuple[float, ...]:
        """All sigma values this policy can emit (histogram axis)."""
        raise NotImplementedError

    def sample_epoch(self, epoch: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """Vectorized per-image draw: sigma for each of ``count`` images."""
        raise NotImplementedError

    def sample(self, epoch: int, rng: np.random.Generator) -> float:
        return float(self.sample_epoch(epoch, 1, rng)[0])


class SchedulePolicy(BlurPolicy):
    """Blur rule driven by a Schedule, replaying earlier levels when enabled.

    Replay draws each image's sigma from segments 0..i of the active segment
    i, weighted by segment epoch counts. Schedules of kind "steep" disable
    replay and always use the active segment's sigma.
    """

    def __init__(self, schedule: Schedule, replay: bool | None = None):
        self.schedule = schedule
        self.replay = (schedule.kind != "steep") if replay is None else replay

    def sigma_levels(self) -> tuple[float, ...]:
        return tuple(dict.fromkeys(self.schedule.sigmas))

    def sample_epoch(self, epoch: int, count: int, rng: np.random.Generator) -> np.ndarray:
        i = segment_at(self.schedule, epoch)
        u = rng.random(count)
        if not self.replay:
            return np.full(count, self.schedule.segments[i].sigma)
        weights = replay_distribution(self.schedule, i).weights
        js = _inverse_cdf(weights, u)
        sigmas = np.array(self.schedule.sigmas[: i + 1])
        return sigmas[js]


class ConstantBlurPolicy(BlurPolicy):
    """Blur each image with probability p at a fixed sigma, every epoch."""

    def __init__(self, probability: float, sigma: float):
        if not (0.0 <= probability <= 1.0):
            raise ConfigurationError(f"probability must lie in [0, 1], got {probability}")
        if sigma < 0:
            raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
        self.probability = probability
        self.sigma = sigma

    def sigma_levels(self) -> tuple[float, ...]:
        return (self.sigma, 0.0) if self.sigma else (0.0,)

    def sample_epoch(self, epoch: int, count: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(count)
        return np.where(u < self.probability, self.sigma, 0.0)


class ContinuousBlurPolicy(BlurPolicy):
    """Fixed sigma; the blurred fraction decays linearly to 0 at the deficit end."""

    def __init__(self, sigma: float, deficit_epochs: int):
        if sigma < 0:
            raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
        if deficit_epochs < 1:
            raise ConfigurationError("deficit_epochs must be >= 1")
        self.sigma = sigma
        self.deficit_epochs = deficit_epochs

    def blurred_fraction(self, epoch: int) -> float:
        return max(0.0, 1.0 - epoch / self.deficit_epochs)

    def sigma_levels(self) -> tuple[float, ...]:
        return (self.sigma, 0.0)

    def sample_epoch(self, epoch: int, count: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(count)
        return np.where(u < self.blurred_fraction(epoch), self.sigma, 0.0)


def vanilla_policy() -> ConstantBlurPolicy:
    """The no-blur baseline: every image passes through at sigma 0."""
    return ConstantBlurPolicy(0.0, 0.0)


# ---------------------------------------------------------------------------
# Text serialization: one "epochs sigma" pair per line, '#' comments.


def schedule_to_text(schedule: Schedule) -> str:
    lines = [f"# kind: {schedule.kind}"]
    for seg in schedule.segments:
        lines.append(f"{seg.epochs} {seg.sigma!r}")
    return "\n".join(lines) + "\n"


def parse_schedule(text: str) -> Schedule:
    kind = "vac"
    segments: list[Segment] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            comment = line[1:].strip()
            if comment.startswith("kind:"):
                kind = comment.split(":", 1)[1].strip()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigurationError(f"line {lineno}: expected 'epochs sigma', got {raw!r}")
        try:
            segments.append(Segment(int(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from exc
    return Schedule(tuple(segments), kind=kind)
