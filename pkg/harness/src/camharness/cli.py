"""Command-line pipeline: ``build`` -> ``train`` -> ``export``.

Every subcommand takes the experiment spec file (JSON or YAML) and a work
directory. ``build`` materializes splits and ordering under ``work/build``,
``train`` writes checkpoints under ``work/checkpoints``, and ``export``
writes the analysis-ready dataset (default ``work/export``). The spec given
to ``train`` and ``export`` must match the one the build was made from, so
a pipeline cannot silently mix configurations.

Exit codes: 0 success; 1 content failure (missing build artifacts or
checkpoints, dataset problems); 2 usage or spec errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import build_datasets, load_build
from .errors import HarnessError, SpecError
from .export import export_dataset
from .spec import ExperimentSpec, load_spec
from .training import train_grid


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camharness",
        description="Train a baseline + augmentation x seed CNN grid and export "
        "activation maps for analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--spec", required=True, help="experiment spec file (.json/.yaml)")
        p.add_argument("--work", required=True, help="pipeline working directory")

    p_build = sub.add_parser("build", help="materialize datasets, splits, and ordering")
    common(p_build)
    p_build.add_argument(
        "--data",
        default=None,
        help="directory holding the CIFAR-10 archive (default: WORK/data; "
        "a deterministic synthetic stand-in is used when absent)",
    )

    p_train = sub.add_parser("train", help="train the model grid sequentially")
    common(p_train)

    p_export = sub.add_parser("export", help="extract activation maps and write the dataset")
    common(p_export)
    p_export.add_argument(
        "--out", default=None, help="output dataset directory (default: WORK/export)"
    )
    return parser


def _load_matching_build(spec: ExperimentSpec, work: Path):
    build = load_build(work / "build")
    if build.spec.to_dict() != spec.to_dict():
        raise SpecError(
            "spec file does not match the spec this build was made from; "
            "re-run the build step or pass the original spec"
        )
    return build


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        spec = load_spec(args.spec)
        work = Path(args.work)
        if args.command == "build":
            build_dir = build_datasets(spec, work, data_dir=args.data)
            print(f"build written to {build_dir}")
        elif args.command == "train":
            build = _load_matching_build(spec, work)
            checkpoints = train_grid(build, work, announce=lambda line: print(line, flush=True))
            print(f"checkpoints written to {checkpoints}")
        else:
            build = _load_matching_build(spec, work)
            out_dir = Path(args.out) if args.out else work / "export"
            manifest = export_dataset(
                build,
                work / "checkpoints",
                out_dir,
                announce=lambda line: print(line, flush=True),
            )
            print(f"dataset manifest written to {manifest}")
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
