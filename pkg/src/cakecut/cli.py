"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ordering import METHODS, PatternShape, UnsupportedShapeError, benchmark_csv, order_benchmark
from .pipeline import ExperimentConfig, NumericalFailure, cmd_order, cmd_reconstruct, cmd_simulate, cmd_sweep

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _list_of(kind):
    def parse(text: str):
        try:
            return [kind(item) for item in text.split(",") if item.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _config_flags(parser: argparse.ArgumentParser) -> None:
    """One ``--key`` flag per config key; unset flags leave file values alone."""
    parser.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    for f in dataclasses.fields(ExperimentConfig):
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if isinstance(default, bool):
            kind, meta = _parse_bool, "BOOL"
        elif isinstance(default, list):
            kind, meta = _list_of(type(default[0])), "A,B,..."
        elif default is None:
            kind, meta = str, None
        else:
            kind, meta = type(default), None
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=kind, metavar=meta,
                            default=argparse.SUPPRESS, help=f"(default: {default})")


def _resolve_config(args) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        data = json.loads(args.config.read_text())
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    for f in dataclasses.fields(ExperimentConfig):
        if hasattr(args, f.name):
            data[f.name] = getattr(args, f.name)
    return ExperimentConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cakecut", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cakecut {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("order", help="write a measurement order CSV and report its generation time")
    p.add_argument("--shape", required=True, help="pattern shape, e.g. 128x128")
    p.add_argument("--method", default="cc_ascending", choices=[m for m in METHODS if m != "oracle_sorted"])
    p.add_argument("--counter", default="rule", choices=["rule", "region_count"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("simulate", help="simulate bucket measurements for each method and ratio")
    _config_flags(p)

    p = sub.add_parser("reconstruct", help="reconstruct images from simulated measurements")
    _config_flags(p)
    p.add_argument("--measurements", type=Path, help="directory holding meas_*.csv (default: output dir)")

    p = sub.add_parser("sweep", help="RE/PSNR over ratios x methods, resumable")
    _config_flags(p)

    p = sub.add_parser("bench-order", help="time order generation, region count vs closed-form rule")
    p.add_argument("--sides", type=_list_of(int), default=[32, 64, 128, 256])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--region-count-max-side", type=int, default=64)
    p.add_argument("--out", type=Path, help="write the CSV here instead of stdout")

    p = sub.add_parser("info", help="version, dependencies and default configuration")
    _config_flags(p)
    return parser


def _run(args) -> int:
    if args.command == "order":
        seconds = cmd_order(PatternShape.parse(args.shape), args.method, args.out,
                            counter=args.counter, seed=args.seed)
        print(f"wrote {args.out}\tseconds={seconds:.6g}")
    elif args.command == "simulate":
        for path in cmd_simulate(_resolve_config(args)):
            print(f"wrote {path}")
    elif args.command == "reconstruct":
        for report in cmd_reconstruct(_resolve_config(args), args.measurements):
            q = report["quality"]
            print(f"{report['key']}\tRE={q['re_percent']:.4f}%\tPSNR={q['psnr_db']:.4f} dB\t{report['image']}")
    elif args.command == "sweep":
        print(f"wrote {cmd_sweep(_resolve_config(args))}")
    elif args.command == "bench-order":
        for side in args.sides:
            PatternShape(side, side)
        text = benchmark_csv(order_benchmark(args.sides, args.repeats, args.region_count_max_side))
        if args.out:
            args.out.write_text(text)
        else:
            sys.stdout.write(text)
    elif args.command == "info":
        import numba
        import PIL
        config = _resolve_config(args)
        info = {
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "numba": numba.__version__,
            "pillow": PIL.__version__,
            "methods": list(METHODS),
            "config": config.to_dict(),
            "config_sha256": config.digest(),
        }
        print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except NumericalFailure as exc:
        print(f"cakecut: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"cakecut: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UnsupportedShapeError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"cakecut: {exc}", file=sys.stderr)
        return EXIT_DATA
