"""End-to-end experiment harness: config files, training runs, evaluation,
ablations, and comparison reports.

A run is a pure function of its config: the config digest is stamped into
the checkpoint and every artifact, and finished run directories are reused
instead of recomputed. Deterministic outputs (train_log.csv, checkpoint,
metrics) never contain timing; wall-clock goes to timings.csv and
run_info.txt.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import math
import os
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import corruptions as cor
from . import curriculum as cur
from . import data as dat
from . import nn, synth

__all__ = [
    "ConfigError",
    "TrainingDivergedError",
    "SuiteMismatchError",
    "RunConfig",
    "parse_config",
    "load_config",
    "config_text",
    "RunResult",
    "train_run",
    "MetricsTable",
    "evaluate",
    "compare_runs",
    "ComparisonReport",
    "ABLATION_VARIANTS",
    "run_ablation",
    "generate_suite",
    "resolve_datasets",
    "build_policy",
    "write_error_bars_svg",
]

OUTPUT_ROOT_ENV = "VACLAB_OUTPUT_ROOT"

CURRICULUM_KINDS = ("vac", "linear", "inverse", "steep", "continuous",
                    "constant", "vanilla")

ABLATION_VARIANTS = ("vac", "linear", "inverse", "continuous", "steep",
                     "constant_100", "constant_20", "vanilla")


class ConfigError(ValueError):
    """Bad config file: unknown key, missing section, or invalid value."""


class TrainingDivergedError(RuntimeError):
    """Loss became NaN/Inf during training."""


class SuiteMismatchError(RuntimeError):
    """Corrupted suite does not match the clean test set or another table."""


# ---------------------------------------------------------------------------
# Config


@dataclass(frozen=True)
class RunConfig:
    # dataset
    source: str = "synthetic"  # synthetic | cifar
    train_path: str = ""
    test_path: str = ""
    train_size: int = 10_000
    test_size: int = 2_000
    synth_seed: int = 1
    augment: bool = True
    # curriculum
    kind: str = "vac"
    epochs: int = 50
    sigma_max: float = 2.0
    deficit_fraction: Fraction = Fraction(1, 5)
    constant_probability: float = 1.0
    constant_sigma: float = 2.0
    # optimizer (epochs come from the curriculum section by construction)
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: str = "cosine"
    batch_size: int = 128
    # seeds
    seed_init: int = 1
    seed_data: int = 2
    seed_blur: int = 3
    seed_augment: int = 4
    # eval
    suite_dir: str = "suite"
    suite_seed: int = 1234
    eval_kinds: tuple[str, ...] = tuple(k.value for k in cor.CorruptionKind)
    eval_severities: tuple[int, ...] = (1, 2, 3, 4, 5)
    # output
    out_dir: str = "runs/run"

    def __post_init__(self):
        if self.source not in ("synthetic", "cifar"):
            raise ConfigError(f"dataset source must be synthetic or cifar, got {self.source!r}")
        if self.kind not in CURRICULUM_KINDS:
            raise ConfigError(f"curriculum kind must be one of {CURRICULUM_KINDS}, got {self.kind!r}")
        if self.source == "cifar" and not self.train_path:
            raise ConfigError("cifar source needs dataset.train_path")
        object.__setattr__(self, "deficit_fraction", Fraction(self.deficit_fraction))

    def digest(self) -> str:
        """Identifies the training computation; output/eval locations excluded."""
        text = config_text(self, sections=("dataset", "curriculum", "optimizer", "seeds"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_SCHEMA = {
    "dataset": {
        "source": ("source", str),
        "train_path": ("train_path", str),
        "test_path": ("test_path", str),
        "train_size": ("train_size", int),
        "test_size": ("test_size", int),
        "synth_seed": ("synth_seed", int),
        "augment": ("augment", "bool"),
    },
    "curriculum": {
        "kind": ("kind", str),
        "epochs": ("epochs", int),
        "sigma_max": ("sigma_max", float),
        "deficit_fraction": ("deficit_fraction", "fraction"),
        "constant_probability": ("constant_probability", float),
        "constant_sigma": ("constant_sigma", float),
    },
    "optimizer": {
        "lr": ("lr", float),
        "momentum": ("momentum", float),
        "weight_decay": ("weight_decay", float),
        "schedule": ("schedule", str),
        "batch_size": ("batch_size", int),
    },
    "seeds": {
        "init": ("seed_init", int),
        "data": ("seed_data", int),
        "blur": ("seed_blur", int),
        "augment": ("seed_augment", int),
    },
    "eval": {
        "suite": ("suite_dir", str),
        "suite_seed": ("suite_seed", int),
        "kinds": ("eval_kinds", "kinds"),
        "severities": ("eval_severities", "severities"),
    },
    "output": {
        "dir": ("out_dir", str),
    },
}


def _parse_value(raw: str, kind):
    if kind is str:
        return raw
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected boolean, got {raw!r}")
    if kind == "fraction":
        return Fraction(raw)
    if kind == "kinds":
        if raw.strip() == "all":
            return tuple(k.value for k in cor.CorruptionKind)
        return tuple(cor.CorruptionKind(k.strip()).value for k in raw.split(","))
    if kind == "severities":
        return tuple(int(s) for s in raw.split(","))
    raise AssertionError(kind)


def parse_config(text: str) -> RunConfig:
    """Parse the line-oriented `key = value` config; unknown keys are errors."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    fields: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            attr, kind = _SCHEMA[section][key]
            try:
                fields[attr] = _parse_value(raw, kind)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    try:
        return RunConfig(**fields)
    except (cur.ConfigurationError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def config_text(config: RunConfig, sections=None) -> str:
    """Canonical config serialization (also the digest input)."""
    lines = []
    for section, keys in _SCHEMA.items():
        if sections is not None and section not in sections:
            continue
        lines.append(f"[{section}]")
        for key, (attr, kind) in keys.items():
            value = getattr(config, attr)
            if kind in ("kinds", "severities"):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "."))


def _resolve_out(config: RunConfig) -> Path:
    return output_root() / config.out_dir


# ---------------------------------------------------------------------------
# Datasets and policies


def _load_cifar(path_text: str, meta: dat.DatasetMeta) -> dat.Dataset:
    paths: list[Path] = []
    for chunk in path_text.split(","):
        p = Path(chunk.strip())
        if p.is_dir():
            paths.extend(sorted(p.glob("*.bin")))
        elif p.exists():
            paths.append(p)
        else:
            raise ConfigError(f"dataset path not found: {p}")
    if not paths:
        raise ConfigError(f"no record files under {path_text!r}")
    parts = [dat.load_records(p, meta) for p in paths]
    if len(parts) == 1:
        return parts[0]
    return dat.Dataset(
        np.concatenate([d.labels for d in parts]),
        np.concatenate([d.pixels for d in parts]),
        replace(parts[0].meta, split="train"),
    )


def resolve_datasets(config: RunConfig) -> tuple[dat.Dataset, dat.Dataset]:
    """Materialize (train, test) sets for a config."""
    if config.source == "synthetic":
        train = synth.make_dataset(config.train_size, config.synth_seed, "train")
        test = synth.make_dataset(config.test_size, config.synth_seed, "test")
        return train, test
    meta = dat.DatasetMeta()
    train = _load_cifar(config.train_path, meta)
    if not config.test_path:
        raise ConfigError("cifar source needs dataset.test_path")
    test = _load_cifar(config.test_path, meta)
    if 0 < config.train_size < len(train):
        train = dat.subset(train, config.train_size, config.seed_data)
    if 0 < config.test_size < len(test):
        test = dat.subset(test, config.test_size, config.seed_data)
    return train, test


def build_policy(config: RunConfig) -> cur.BlurPolicy:
    """The per-image blur rule implied by the curriculum section."""
    kind = config.kind
    if kind == "vanilla":
        return cur.vanilla_policy()
    if kind == "vac":
        schedule = cur.define_curriculum(
            cur.CurriculumConfig(config.epochs, config.sigma_max, config.deficit_fraction)
        )
        return cur.SchedulePolicy(schedule)
    if kind in ("linear", "inverse", "steep"):
        schedule = cur.make_variant(
            kind, config.epochs,
            sigma_max=config.sigma_max, deficit_fraction=config.deficit_fraction,
        )
        return cur.SchedulePolicy(schedule)
    if kind == "constant":
        return cur.make_variant(
            "constant", config.epochs,
            probability=config.constant_probability, sigma=config.constant_sigma,
        )
    if kind == "continuous":
        return cur.make_variant(
            "continuous", config.epochs,
            sigma=config.constant_sigma, deficit_fraction=config.deficit_fraction,
        )
    raise ConfigError(f"unknown curriculum kind {kind!r}")


# ---------------------------------------------------------------------------
# Training


@dataclass
class RunResult:
    out_dir: Path
    checkpoint_path: Path
    log_path: Path
    config_digest: str
    train_seconds: float
    cached: bool = False


def _sigma_histogram(sigmas: np.ndarray) -> str:
    values, counts = np.unique(sigmas, return_counts=True)
    pairs = sorted(zip(values, counts), key=lambda vc: -vc[0])
    return "|".join(f"{v:g}:{c}" for v, c in pairs)


def _segment_index(policy: cur.BlurPolicy, epoch: int) -> int:
    if isinstance(policy, cur.SchedulePolicy):
        return cur.segment_at(policy.schedule, epoch)
    return -1


def train_run(config: RunConfig, out_dir: str | Path | None = None,
              force: bool = False, log=print) -> RunResult:
    """Execute the full training loop and persist checkpoint + logs.

    A completed run directory whose stamped digest matches the config is
    reused unless ``force`` is set. The loop is identical for every blur
    policy; the policy only decides each image's sigma.
    """
    out = Path(out_dir) if out_dir is not None else _resolve_out(config)
    digest = config.digest()
    ckpt_path = out / "checkpoint.ckpt"
    log_path = out / "train_log.csv"
    info_path = out / "run_info.txt"
    if not force and info_path.exists() and ckpt_path.exists():
        info = dict(
            line.split(" = ", 1)
            for line in info_path.read_text().splitlines()
            if " = " in line
        )
        if info.get("config_digest") == digest and info.get("status") == "complete":
            log(f"[train] reusing completed run in {out}")
            return RunResult(out, ckpt_path, log_path, digest,
                             float(info.get("train_seconds", "0")), cached=True)

    train, _ = resolve_datasets(config)
    policy = build_policy(config)
    recipe = nn.TrainRecipe(
        lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay,
        schedule=config.schedule, epochs=config.epochs, batch_size=config.batch_size,
    )
    model = nn.SmallConvNet(
        in_channels=train.meta.channels, num_classes=train.meta.num_classes,
        input_hw=(train.meta.height, train.meta.width), seed=config.seed_init,
    )
    state = nn.SgdState.for_model(model, recipe)

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(config_text(config))
    n = len(train)
    log_rows = []
    timing_rows = []
    train_seconds = 0.0
    for epoch in range(config.epochs):
        lr = nn.learning_rate(recipe, epoch)
        plan = dat.plan_epoch(train, epoch, config.batch_size, config.augment,
                              config.seed_data, config.seed_blur, config.seed_augment)
        sigmas = dat.epoch_sigmas(plan, policy, n)
        started = time.perf_counter()
        total_loss = 0.0
        wrong = 0
        for batch_x, batch_y in dat.iterate_epoch(train, plan, policy):
            loss = nn.cross_entropy(model.forward(batch_x), batch_y)
            value = float(loss.values)
            if not math.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (lr={lr:g}); "
                    f"rerun with a smaller lr"
                )
            logits = loss._parents[0].values
            wrong += int((logits.argmax(axis=1) != batch_y).sum())
            total_loss += value * len(batch_y)
            nn.backward(loss)
            nn.sgd_step(model, state, lr)
        seconds = time.perf_counter() - started
        train_seconds += seconds
        row = {
            "epoch": epoch,
            "segment": _segment_index(policy, epoch),
            "lr": f"{lr:.6g}",
            "train_loss": f"{total_loss / n:.6f}",
            "train_error": f"{wrong / n:.6f}",
            "sigma_hist": _sigma_histogram(sigmas),
        }
        log_rows.append(row)
        timing_rows.append({"epoch": epoch, "seconds": f"{seconds:.3f}"})
        log(f"[train] epoch {epoch:3d} seg {row['segment']:2d} lr {lr:.4f} "
            f"loss {row['train_loss']} err {row['train_error']} ({seconds:.1f}s)")

    _write_csv(log_path, log_rows,
               ["epoch", "segment", "lr", "train_loss", "train_error", "sigma_hist"])
    _write_csv(out / "timings.csv", timing_rows, ["epoch", "seconds"])
    nn.save_checkpoint(model, ckpt_path, config_digest=digest)
    info_path.write_text(
        f"config_digest = {digest}\n"
        f"train_seconds = {train_seconds:.3f}\n"
        f"epochs = {config.epochs}\n"
        f"records = {n}\n"
        f"status = complete\n"
    )
    return RunResult(out, ckpt_path, log_path, digest, train_seconds)


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class MetricsTable:
    clean_error: float
    errors: dict[tuple[str, int], float]
    mce: float
    runtime_seconds: float
    config_digest: str = ""
    label: str = ""

    def kinds(self) -> list[str]:
        return sorted({kind for kind, _ in self.errors})

    def kind_mean(self, kind: str) -> float:
        vals = [e for (k, _), e in self.errors.items() if k == kind]
        return float(np.mean(vals))

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(f"# label = {self.label}\n")
            fh.write(f"# config_digest = {self.config_digest}\n")
            fh.write(f"# runtime_seconds = {self.runtime_seconds:.3f}\n")
            writer = csv.writer(fh)
            writer.writerow(["metric", "kind", "severity", "value"])
            writer.writerow(["clean_error", "", "", f"{self.clean_error:.6f}"])
            for (kind, severity), err in sorted(self.errors.items()):
                writer.writerow(["corruption_error", kind, severity, f"{err:.6f}"])
            writer.writerow(["mce", "", "", f"{self.mce:.6f}"])

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricsTable":
        path = Path(path)
        meta = {"label": "", "config_digest": "", "runtime_seconds": "0"}
        body = []
        for line in path.read_text().splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
        errors: dict[tuple[str, int], float] = {}
        clean = mce = 0.0
        for row in csv.DictReader(io.StringIO("\n".join(body))):
            if row["metric"] == "clean_error":
                clean = float(row["value"])
            elif row["metric"] == "mce":
                mce = float(row["value"])
            elif row["metric"] == "corruption_error":
                errors[(row["kind"], int(row["severity"]))] = float(row["value"])
        return cls(clean, errors, mce, float(meta["runtime_seconds"]),
                   meta["config_digest"], meta["label"])


class _CheckpointModel:
    """Read-only model restored from a checkpoint for evaluation."""

    @staticmethod
    def load(path: str | Path, test: dat.Dataset) -> tuple[nn.SmallConvNet, str]:
        params, digest = nn.load_checkpoint(path)
        model = nn.SmallConvNet(
            in_channels=test.meta.channels, num_classes=test.meta.num_classes,
            input_hw=(test.meta.height, test.meta.width),
        )
        model.load_state(params)
        return model, digest


def evaluate(model, test: dat.Dataset, suite_root: str | Path,
             label: str = "", config_digest: str = "", log=print) -> MetricsTable:
    """Clean error plus the full (kind, severity) error matrix and its mean.

    ``model`` is anything with predict(); a checkpoint path also works.
    """
    started = time.perf_counter()
    if isinstance(model, (str, Path)):
        model, digest = _CheckpointModel.load(model, test)
        config_digest = config_digest or digest
    suite_root = Path(suite_root)
    manifest = cor.parse_manifest(suite_root / "manifest.txt")
    label_sha = hashlib.sha256(test.labels.tobytes()).hexdigest()
    if manifest.get("label_sha256") != label_sha:
        raise SuiteMismatchError(
            "suite manifest labels do not match the clean test set "
            f"({manifest.get('label_sha256')} vs {label_sha})"
        )
    missing = [
        f"{kind}/{severity}"
        for kind in manifest["kinds"]
        for severity in manifest["severities"]
        if not (suite_root / kind / str(severity) / "data.bin").exists()
    ]
    if missing:
        raise cor.SuiteLayoutError(f"suite is missing record-sets: {', '.join(missing)}")

    clean_error = nn.top1_error(model, test)
    errors: dict[tuple[str, int], float] = {}
    for kind in manifest["kinds"]:
        for severity in manifest["severities"]:
            record_set = dat.load_records(
                suite_root / kind / str(severity) / "data.bin", test.meta
            )
            errors[(kind, severity)] = nn.top1_error(model, record_set)
        log(f"[eval] {kind}: " + " ".join(
            f"{errors[(kind, s)]:.3f}" for s in manifest["severities"]))
    mce = float(np.mean(list(errors.values())))
    return MetricsTable(clean_error, errors, mce,
                        time.perf_counter() - started, config_digest, label)


def generate_suite(config: RunConfig, force: bool = False, log=print) -> Path:
    """Corrupt the config's clean test set into its suite directory."""
    _, test = resolve_datasets(config)
    suite_root = output_root() / config.suite_dir
    manifest = suite_root / "manifest.txt"
    if manifest.exists() and not force:
        existing = cor.parse_manifest(manifest)
        label_sha = hashlib.sha256(test.labels.tobytes()).hexdigest()
        if (existing.get("label_sha256") == label_sha
                and existing.get("seed") == str(config.suite_seed)
                and existing.get("kinds") == list(config.eval_kinds)
                and existing.get("severities") == list(config.eval_severities)):
            log(f"[corrupt] reusing suite at {suite_root}")
            return manifest
        raise cor.SuiteLayoutError(
            f"{suite_root} holds a different suite; pass force to regenerate"
        )
    log(f"[corrupt] writing {len(config.eval_kinds)}x{len(config.eval_severities)} "
        f"record-sets to {suite_root}")
    return cor.generate_corrupted_dataset(
        test, config.eval_kinds, config.eval_severities, config.suite_seed,
        suite_root, overwrite=True,
    )


# ---------------------------------------------------------------------------
# Comparison and ablation


@dataclass
class ComparisonReport:
    groups: dict[str, list[MetricsTable]]
    baseline: str

    def kind_table(self) -> dict[str, dict[str, float]]:
        """group -> kind -> error averaged over severities and seeds."""
        out: dict[str, dict[str, float]] = {}
        for name, tables in self.groups.items():
            kinds = tables[0].kinds()
            out[name] = {
                k: float(np.mean([t.kind_mean(k) for t in tables])) for k in kinds
            }
        return out

    def summary_rows(self) -> list[dict]:
        rows = []
        base = self.groups[self.baseline]
        base_mce = float(np.mean([t.mce for t in base]))
        base_clean = float(np.mean([t.clean_error for t in base]))
        for name, tables in self.groups.items():
            mces = [t.mce for t in tables]
            cleans = [t.clean_error for t in tables]
            rows.append({
                "group": name,
                "seeds": len(tables),
                "clean_mean": float(np.mean(cleans)),
                "clean_std": float(np.std(cleans)),
                "mce_mean": float(np.mean(mces)),
                "mce_std": float(np.std(mces)),
                "clean_delta": float(np.mean(cleans)) - base_clean,
                "mce_delta": float(np.mean(mces)) - base_mce,
            })
        return rows

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        kind_table = self.kind_table()
        base_kinds = kind_table[self.baseline]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["section", "group", "kind", "value", "delta_vs_" + self.baseline])
            for row in self.summary_rows():
                writer.writerow(["summary_clean", row["group"], "",
                                 f"{row['clean_mean']:.6f}", f"{row['clean_delta']:+.6f}"])
                writer.writerow(["summary_mce", row["group"], "",
                                 f"{row['mce_mean']:.6f}", f"{row['mce_delta']:+.6f}"])
            for group, kinds in kind_table.items():
                for kind, err in kinds.items():
                    writer.writerow(["per_corruption", group, kind, f"{err:.6f}",
                                     f"{err - base_kinds[kind]:+.6f}"])

    def to_text(self) -> str:
        lines = [f"{'group':<14} {'seeds':>5} {'clean':>14} {'mCE':>14} "
                 f"{'d-clean':>8} {'d-mCE':>8}"]
        for row in self.summary_rows():
            lines.append(
                f"{row['group']:<14} {row['seeds']:>5} "
                f"{row['clean_mean']:.4f}±{row['clean_std']:.4f} "
                f"{row['mce_mean']:.4f}±{row['mce_std']:.4f} "
                f"{row['clean_delta']:+.4f} {row['mce_delta']:+.4f}"
            )
        return "\n".join(lines)


def compare_runs(groups, baseline: str | None = None) -> ComparisonReport:
    """Compare metrics tables; groups is {name: [tables]} or a flat list
    grouped by table label."""
    if not isinstance(groups, dict):
        flat: dict[str, list[MetricsTable]] = {}
        for table in groups:
            flat.setdefault(table.label or "run", []).append(table)
        groups = flat
    tables = [t for ts in groups.values() for t in ts]
    if len(tables) < 2:
        raise ValueError("need at least two metrics tables to compare")
    keys = set(tables[0].errors)
    for t in tables[1:]:
        if set(t.errors) != keys:
            raise SuiteMismatchError(
                "metrics tables cover different (kind, severity) suites"
            )
    return ComparisonReport(groups, baseline or next(iter(groups)))


def _variant_config(base: RunConfig, variant: str, seed_offset: int) -> RunConfig:
    overrides: dict = {
        "seed_init": base.seed_init + seed_offset,
        "seed_data": base.seed_data + seed_offset,
        "seed_blur": base.seed_blur + seed_offset,
        "seed_augment": base.seed_augment + seed_offset,
        "out_dir": f"{base.out_dir}/{variant}/seed{seed_offset}",
    }
    if variant == "constant_100":
        overrides.update(kind="constant", constant_probability=1.0,
                         constant_sigma=base.sigma_max)
    elif variant == "constant_20":
        overrides.update(kind="constant", constant_probability=0.2,
                         constant_sigma=base.sigma_max)
    else:
        overrides.update(kind=variant)
    return replace(base, **overrides)


def run_ablation(base: RunConfig, variants=ABLATION_VARIANTS, seeds: int = 3,
                 force: bool = False, log=print) -> dict[str, list[MetricsTable]]:
    """Train + evaluate every variant over ``seeds`` repetitions.

    All variants share data and per-repetition seeds; each run lands in
    <out_dir>/<variant>/seed<k> and completed runs are reused. Emits
    ablation.csv and ablation_summary.txt under the base output directory.
    """
    unknown = set(variants) - set(ABLATION_VARIANTS)
    if unknown:
        raise ConfigError(f"unknown ablation variants: {sorted(unknown)}")
    generate_suite(base, log=log)
    _, test = resolve_datasets(base)
    suite_root = output_root() / base.suite_dir
    results: dict[str, list[MetricsTable]] = {}
    for variant in variants:
        results[variant] = []
        for k in range(seeds):
            config = _variant_config(base, variant, k)
            run = train_run(config, force=force, log=log)
            metrics_path = run.out_dir / "metrics.csv"
            if run.cached and metrics_path.exists():
                table = MetricsTable.from_csv(metrics_path)
            else:
                table = evaluate(run.checkpoint_path, test, suite_root,
                                 label=variant, config_digest=run.config_digest,
                                 log=lambda *_: None)
                table.to_csv(metrics_path)
            results[variant].append(table)
            log(f"[ablate] {variant} seed{k}: clean {table.clean_error:.4f} "
                f"mce {table.mce:.4f}")
    out_root = _resolve_out(base)
    rows = [
        {"variant": v, "seed": k, "clean_error": f"{t.clean_error:.6f}",
         "mce": f"{t.mce:.6f}"}
        for v, tables in results.items()
        for k, t in enumerate(tables)
    ]
    _write_csv(out_root / "ablation.csv", rows, ["variant", "seed", "clean_error", "mce"])
    report = compare_runs(results, baseline="vanilla" if "vanilla" in results else None)
    (out_root / "ablation_summary.txt").write_text(report.to_text() + "\n")
    return results


# ---------------------------------------------------------------------------
# SVG report


def write_error_bars_svg(path: str | Path, per_kind: dict[str, dict[str, float]],
                         title: str = "top-1 error by corruption") -> None:
    """Standalone grouped bar chart; no renderer dependencies."""
    groups = list(per_kind)
    kinds = sorted({k for kinds in per_kind.values() for k in kinds})
    palette = ["#4878a8", "#e49444", "#6a9f58", "#d1605e", "#a87c9f",
               "#967662", "#f1a2a9", "#8cd17d"]
    bar_w = 12
    cluster_w = bar_w * len(groups) + 14
    left, top, plot_h = 60, 40, 220
    width = left + cluster_w * len(kinds) + 30
    height = top + plot_h + 120
    peak = max(max(kinds_map.values()) for kinds_map in per_kind.values())
    peak = max(peak, 1e-9)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<text x="{left}" y="20" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{width - 20}" '
        f'y2="{top + plot_h}" stroke="#333"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + plot_h - frac * plot_h
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">'
                     f'{frac * peak:.2f}</text>')
    for gi, group in enumerate(groups):
        color = palette[gi % len(palette)]
        lx = left + 90 * gi
        parts.append(f'<rect x="{lx}" y="{height - 26}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{lx + 14}" y="{height - 17}">{group}</text>')
        for ki, kind in enumerate(kinds):
            value = per_kind[group].get(kind)
            if value is None:
                continue
            h = value / peak * plot_h
            x = left + ki * cluster_w + gi * bar_w + 7
            parts.append(
                f'<rect x="{x:.1f}" y="{top + plot_h - h:.1f}" width="{bar_w - 2}" '
                f'height="{h:.1f}" fill="{color}"/>'
            )
    for ki, kind in enumerate(kinds):
        x = left + ki * cluster_w + cluster_w / 2
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 10}" text-anchor="end" '
            f'transform="rotate(-60 {x:.1f} {top + plot_h + 10})">{kind}</text>'
        )
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts))
