"""Command-line interface.

Subcommands: schedule, corrupt, train, eval, ablate, report.
Exit codes: 0 success, 1 usage or config error, 2 runtime/numerical failure.
The only honored environment variable is VACLAB_OUTPUT_ROOT, which rebases
all output paths.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from . import corruptions as cor
from . import curriculum as cur
from . import data as dat
from . import harness, nn

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="vaclab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="print or validate a blur schedule")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--sigma-max", type=float, default=2.0)
    p.add_argument("--deficit", type=Fraction, default=Fraction(1, 5),
                   help="deficit fraction, e.g. 1/5")
    p.add_argument("--kind", choices=("vac", "linear", "inverse", "steep"),
                   default="vac")
    p.add_argument("--out", type=Path, help="write the schedule to a file")
    p.add_argument("--validate", type=Path,
                   help="parse an existing schedule file instead of building one")

    p = sub.add_parser("corrupt", help="generate the corrupted evaluation suite")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--force", action="store_true", help="regenerate even if present")

    p = sub.add_parser("train", help="run one training config")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--force", action="store_true", help="retrain even if cached")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on clean + corrupted sets")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path,
                   help="defaults to <output.dir>/checkpoint.ckpt")
    p.add_argument("--out", type=Path, help="metrics CSV path")
    p.add_argument("--label", default="")

    p = sub.add_parser("ablate", help="train + evaluate the curriculum variants")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--variants", default=",".join(harness.ABLATION_VARIANTS),
                   help="comma list from: " + ",".join(harness.ABLATION_VARIANTS))
    p.add_argument("--force", action="store_true")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("report", help="compare metrics CSVs into a report")
    p.add_argument("metrics", nargs="+", type=Path,
                   help="metrics.csv files; group label comes from the file")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--baseline", default=None)
    p.add_argument("--svg", action="store_true", help="emit per-corruption bar chart")
    return parser


def _cmd_schedule(args) -> int:
    if args.validate:
        schedule = cur.parse_schedule(args.validate.read_text())
        print(f"valid {schedule.kind} schedule, {schedule.total_epochs} epochs, "
              f"{len(schedule.segments)} segments")
    else:
        if args.kind == "vac":
            schedule = cur.define_curriculum(
                cur.CurriculumConfig(args.epochs, args.sigma_max, args.deficit)
            )
        else:
            schedule = cur.make_variant(args.kind, args.epochs,
                                        sigma_max=args.sigma_max,
                                        deficit_fraction=args.deficit)
    text = cur.schedule_to_text(schedule)
    if args.out:
        args.out.write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def _cmd_corrupt(args) -> int:
    config = harness.load_config(args.config)
    manifest = harness.generate_suite(config, force=args.force)
    print(f"suite manifest: {manifest}")
    return 0


def _cmd_train(args) -> int:
    config = harness.load_config(args.config)
    log = (lambda *_: None) if args.quiet else print
    result = harness.train_run(config, force=args.force, log=log)
    status = "cached" if result.cached else f"{result.train_seconds:.1f}s"
    print(f"checkpoint: {result.checkpoint_path} ({status})")
    return 0


def _cmd_eval(args) -> int:
    config = harness.load_config(args.config)
    out_dir = harness.output_root() / config.out_dir
    checkpoint = args.checkpoint or (out_dir / "checkpoint.ckpt")
    if not Path(checkpoint).exists():
        raise harness.ConfigError(f"checkpoint not found: {checkpoint}")
    _, test = harness.resolve_datasets(config)
    suite_root = harness.output_root() / config.suite_dir
    table = harness.evaluate(checkpoint, test, suite_root,
                             label=args.label or config.kind)
    out = args.out or (out_dir / "metrics.csv")
    table.to_csv(out)
    print(f"clean_error {table.clean_error:.4f}  mce {table.mce:.4f}  -> {out}")
    return 0


def _cmd_ablate(args) -> int:
    config = harness.load_config(args.config)
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    log = (lambda *_: None) if args.quiet else print
    results = harness.run_ablation(config, variants=variants, seeds=args.seeds,
                                   force=args.force, log=log)
    report = harness.compare_runs(
        results, baseline="vanilla" if "vanilla" in results else None
    )
    print(report.to_text())
    return 0


def _cmd_report(args) -> int:
    tables = [harness.MetricsTable.from_csv(p) for p in args.metrics]
    report = harness.compare_runs(tables, baseline=args.baseline)
    args.out.mkdir(parents=True, exist_ok=True)
    report.to_csv(args.out / "comparison.csv")
    (args.out / "summary.txt").write_text(report.to_text() + "\n")
    if args.svg:
        harness.write_error_bars_svg(args.out / "per_corruption.svg",
                                     report.kind_table())
    print(report.to_text())
    return 0


_COMMANDS = {
    "schedule": _cmd_schedule,
    "corrupt": _cmd_corrupt,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}

_USAGE_ERRORS = (
    harness.ConfigError,
    cur.ConfigurationError,
    dat.FormatError,
    FileNotFoundError,
)
_RUNTIME_ERRORS = (
    harness.TrainingDivergedError,
    harness.SuiteMismatchError,
    cor.CalibrationError,
    cor.SuiteLayoutError,
    nn.GraphError,
    nn.NonFiniteError,
    FloatingPointError,
)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _USAGE_ERRORS as exc:
        print(f"vaclab: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except _RUNTIME_ERRORS as exc:
        print(f"vaclab: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
