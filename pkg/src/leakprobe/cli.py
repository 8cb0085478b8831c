"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error (message names the path
or pipeline stage).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .audit import render_report, render_reports, run_audit, run_blur_triplet
from .dataset import SplitSpec, load_idx_pair, load_image_folder, write_image_folder
from .errors import LeakprobeError
from .forest import ForestConfig
from .probes import ProbeId, build_feature_matrix, write_probe_csv
from .synth import BiasChannel, SynthConfig, generate_with_foreground

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    def __init__(self, message: str, usage_shown: bool = False):
        super().__init__(message)
        self.usage_shown = usage_shown


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}", usage_shown=True)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WxH, got {text!r}") from None
    return w, h


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", type=Path, default=None, help="folder-per-class image tree")
    p.add_argument("--idx-images", type=Path, default=None, help="IDX images file (with --idx-labels)")
    p.add_argument("--idx-labels", type=Path, default=None, help="IDX labels file (with --idx-images)")
    p.add_argument("--threads", type=_positive, default=1, help="worker cap for decoding, probing and tree growing")
    p.add_argument("--out", type=Path, default=None, help="write output here instead of stdout")


def _add_audit_flags(p: argparse.ArgumentParser, probe: bool = True) -> None:
    if probe:
        p.add_argument("--probe", choices=[x.value for x in ProbeId], default="8px", help="feature probe")
    p.add_argument("--seed", type=_u64, default=0, help="split and forest seed")
    p.add_argument("--train-frac", type=_fraction, default=0.8, help="training fraction of the random split")
    p.add_argument("--trees", type=_positive, default=100, help="number of trees in the forest")
    p.add_argument("--format", choices=["json", "text"], default="json", help="report format")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="leakprobe", description="Audit image datasets for label-correlated capture bias.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="{audit,blur-triplet,probe-dump,synth,version}",
                                parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("audit", help="train a forest on probe features and compare to chance", formatter_class=fmt)
    _add_data_flags(p)
    _add_audit_flags(p)

    p = sub.add_parser("blur-triplet", help="blur-probe audits of full, foreground and background images",
                       formatter_class=fmt)
    _add_data_flags(p)
    _add_audit_flags(p, probe=False)
    p.add_argument("--foreground", type=Path, required=True, help="foreground tree aligned with --dataset")

    p = sub.add_parser("probe-dump", help="write probe features as CSV", formatter_class=fmt)
    _add_data_flags(p)
    p.add_argument("--probe", choices=[x.value for x in ProbeId], default="8px", help="feature probe")

    p = sub.add_parser("synth", help="write a synthetic bias-injected dataset", formatter_class=fmt)
    p.add_argument("--classes", type=int, default=5, help="number of classes")
    p.add_argument("--per-class", type=int, default=200, help="images per class")
    p.add_argument("--bias", type=float, default=1.0, help="bias strength in [0, 1]")
    p.add_argument("--bias-channel", choices=[c.value for c in BiasChannel], default="bg",
                   help="bg: class-dependent background level; blur: class-dependent box blur")
    p.add_argument("--noise-sd", type=float, default=5.0, help="Gaussian pixel noise sd")
    p.add_argument("--size", type=_size, default=(64, 64), help="image size WxH")
    p.add_argument("--seed", type=_u64, default=42, help="generator seed")
    p.add_argument("--out", type=Path, required=True, help="output root for the class folders")
    p.add_argument("--foreground-out", type=Path, default=None,
                   help="also write foreground-only images (black background) here")

    sub.add_parser("version", help="print the toolkit version", formatter_class=fmt)
    return parser


def _load(args):
    if args.idx_images or args.idx_labels:
        if args.dataset:
            raise UsageError("use either --dataset or --idx-images/--idx-labels, not both")
        if not (args.idx_images and args.idx_labels):
            raise UsageError("--idx-images and --idx-labels must be given together")
        return load_idx_pair(args.idx_images, args.idx_labels)
    if not args.dataset:
        raise UsageError("a dataset is required: --dataset DIR or --idx-images/--idx-labels")
    return load_image_folder(args.dataset, threads=args.threads)


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _run(args) -> int:
    if args.command == "version":
        print(__version__)
        return EXIT_OK

    if args.command == "synth":
        w, h = args.size
        try:
            config = SynthConfig(args.classes, args.per_class, w, h, args.bias,
                                 BiasChannel(args.bias_channel), args.noise_sd, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        full, fg = generate_with_foreground(config, name=args.out.name)
        write_image_folder(full, args.out)
        if args.foreground_out:
            write_image_folder(fg, args.foreground_out)
        print(f"wrote {len(full)} images in {config.n_classes} classes to {args.out}", file=sys.stderr)
        return EXIT_OK

    dataset = _load(args)
    if args.command == "probe-dump":
        matrix = build_feature_matrix(dataset, args.probe, args.threads)
        if args.out is None:
            write_probe_csv(dataset, matrix, sys.stdout)
        else:
            with open(args.out, "w", newline="") as fh:
                write_probe_csv(dataset, matrix, fh)
        return EXIT_OK

    split_spec = SplitSpec(args.train_frac, args.seed)
    forest_config = ForestConfig(n_trees=args.trees, seed=args.seed)
    if args.command == "audit":
        report = run_audit(dataset, args.probe, split_spec, forest_config, args.threads)
        _emit(render_report(report, args.format), args.out)
    else:
        foreground = load_image_folder(args.foreground, threads=args.threads)
        reports = run_blur_triplet(dataset, foreground, split_spec, forest_config, args.threads)
        _emit(render_reports(reports, args.format), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _run(args)
    except UsageError as exc:
        if not exc.usage_shown:
            parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (LeakprobeError, OSError) as exc:
        print(f"leakprobe: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
