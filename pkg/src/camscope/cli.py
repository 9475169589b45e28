"""Command-line interface.

Exit codes: 0 on success, 1 when dataset content fails validation or
analysis, 2 on usage errors, unreadable configuration, or a malformed
manifest.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CamscopeError, ManifestError, ValidationError
from .model import DEFAULT_KLD_EPSILON, MetricId
from .report import FORMATS, RunConfig, default_metrics, run_extremes, run_report
from .synth import spec_from_dict, synth_dataset
from .interchange import read_manifest, validate_dataset

_CONFIG_KEYS = {
    "manifest",
    "out",
    "metrics",
    "k",
    "corr",
    "epsilon",
    "workers",
    "formats",
    "listwise",
}


def _fail_usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _fail_content(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camscope",
        description="Quantify how augmentation-trained models shift their attention maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a dataset against its manifest")
    p_validate.add_argument("--manifest", required=True, help="path to manifest.json")

    p_run = sub.add_parser("run", help="run the full analysis and write a report bundle")
    p_run.add_argument("--manifest", help="path to manifest.json")
    p_run.add_argument("--out", help="output directory for the report bundle")
    p_run.add_argument("--metrics", help="comma-separated metric tokens, e.g. mad,overlap_rate@20")
    p_run.add_argument("--k", type=int, help="pairs per ranking direction (default 4)")
    p_run.add_argument("--corr", choices=("pearson", "spearman"), help="correlation coefficient")
    p_run.add_argument("--epsilon", type=float, help="epsilon for bare class_kld tokens")
    p_run.add_argument("--workers", type=int, help="worker threads; 0 picks the processor count")
    p_run.add_argument("--formats", help="comma-separated subset of csv,md,svg")
    p_run.add_argument("--listwise", action="store_true", default=None,
                       help="drop images undefined in any augmentation before correlating")
    p_run.add_argument("--config", help="JSON file with the same keys; flags win")

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--seed-spec", required=True, help="JSON file describing the dataset")
    p_synth.add_argument("--out", required=True, help="output directory for the dataset")

    p_extremes = sub.add_parser("extremes", help="render the most affected image for one metric")
    p_extremes.add_argument("--manifest", required=True)
    p_extremes.add_argument("--out", required=True)
    p_extremes.add_argument("--metric", required=True, help="metric token, e.g. msd")
    p_extremes.add_argument("--statistic", required=True, choices=("mean", "stdev"))
    p_extremes.add_argument("--workers", type=int, default=0)
    return parser


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        manifest = read_manifest(args.manifest)
    except ManifestError as exc:
        return _fail_usage(str(exc))
    report = validate_dataset(manifest)
    print(report)
    return 0 if report.ok else 1


def _parse_metric_tokens(raw: str, epsilon: float) -> tuple[MetricId, ...]:
    tokens = [t for t in raw.split(",") if t.strip()]
    if not tokens:
        raise ValidationError("empty metric list")
    return tuple(MetricId.parse(token, kld_epsilon=epsilon) for token in tokens)


def _cmd_run(args: argparse.Namespace) -> int:
    file_config: dict = {}
    if args.config:
        try:
            file_config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            return _fail_usage(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            return _fail_usage(f"config file is not valid JSON: {exc}")
        if not isinstance(file_config, dict):
            return _fail_usage("config file must hold a JSON object")
        unknown = set(file_config) - _CONFIG_KEYS
        if unknown:
            return _fail_usage(f"unknown config keys: {sorted(unknown)}")

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return file_config.get(key, default)

    manifest_path = pick(args.manifest, "manifest", None)
    out_dir = pick(args.out, "out", None)
    if not manifest_path or not out_dir:
        return _fail_usage("run needs --manifest and --out (flags or config file)")
    epsilon = float(pick(args.epsilon, "epsilon", DEFAULT_KLD_EPSILON))
    if epsilon < 0:
        return _fail_usage("--epsilon must be >= 0")
    raw_metrics = pick(args.metrics, "metrics", None)
    try:
        if raw_metrics is None:
            metrics = default_metrics(epsilon)
        elif isinstance(raw_metrics, str):
            metrics = _parse_metric_tokens(raw_metrics, epsilon)
        else:
            metrics = tuple(MetricId.parse(str(t), kld_epsilon=epsilon) for t in raw_metrics)
    except ValidationError as exc:
        return _fail_usage(str(exc))
    k = int(pick(args.k, "k", 4))
    if k < 1:
        return _fail_usage("--k must be >= 1")
    workers = int(pick(args.workers, "workers", 0))
    if workers < 0:
        return _fail_usage("--workers must be >= 0")
    raw_formats = pick(args.formats, "formats", None)
    if raw_formats is None:
        formats = FORMATS
    else:
        parts = raw_formats.split(",") if isinstance(raw_formats, str) else list(raw_formats)
        formats = tuple(p.strip() for p in parts if p.strip())
        bad = [f for f in formats if f not in FORMATS]
        if bad or not formats:
            return _fail_usage(f"--formats must be a subset of {','.join(FORMATS)}")
    config = RunConfig(
        manifest_path=str(manifest_path),
        out_dir=str(out_dir),
        metrics=metrics,
        k=k,
        correlation_method=pick(args.corr, "corr", "pearson"),
        workers=workers,
        formats=formats,
        listwise=bool(pick(args.listwise, "listwise", False)),
    )
    try:
        result = run_report(config)
    except ManifestError as exc:
        return _fail_usage(str(exc))
    except CamscopeError as exc:
        return _fail_content(str(exc))
    print(result.out_dir / "index.json")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    try:
        raw = json.loads(Path(args.seed_spec).read_text(encoding="utf-8"))
    except OSError as exc:
        return _fail_usage(f"cannot read seed spec: {exc}")
    except json.JSONDecodeError as exc:
        return _fail_usage(f"seed spec is not valid JSON: {exc}")
    try:
        spec = spec_from_dict(raw)
    except ValidationError as exc:
        return _fail_usage(str(exc))
    manifest = synth_dataset(spec, args.out)
    print(Path(args.out) / "manifest.json")
    return 0


def _cmd_extremes(args: argparse.Namespace) -> int:
    try:
        metric = MetricId.parse(args.metric)
    except ValidationError as exc:
        return _fail_usage(str(exc))
    config = RunConfig(manifest_path=args.manifest, out_dir=args.out, workers=args.workers)
    try:
        image_id, svg_path = run_extremes(config, metric, args.statistic)
    except ManifestError as exc:
        return _fail_usage(str(exc))
    except CamscopeError as exc:
        return _fail_content(str(exc))
    print(f"{image_id} {svg_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "synth":
        return _cmd_synth(args)
    if args.command == "extremes":
        return _cmd_extremes(args)
    return _fail_usage(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
