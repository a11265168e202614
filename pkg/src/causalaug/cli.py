"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import experiments as ex
from .datasets import write_digits_surrogate
from .errors import (
    ConfigError,
    DivergenceError,
    EmptyDatasetError,
    FormatError,
    InsufficientDataError,
    InsufficientDomainsError,
    InvalidDimensionError,
    InvalidSpecError,
    LengthMismatchError,
    SingularMatrixError,
    SingularSystemError,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MNIST_ENV = "CAUSALAUG_MNIST_DIR"

log = logging.getLogger("causalaug")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, data: bool = False) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory (default: results)")
    p.add_argument("--reps", type=int, help="repetitions per condition")
    p.add_argument("--workers", type=int, help="parallel SDA fits")
    if data:
        p.add_argument("--mnist-dir", help=f"directory with the MNIST IDX files (or set {MNIST_ENV})")
        p.add_argument("--fast", action="store_true", default=None, help="average-pool digits to 14x14")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="causalaug", description="Augmentation as intervention: experiments and checks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synthetic", help="linear SCM regression under do(d)")
    _common(p)
    p.add_argument("--fixed-scm", action="store_true", help="reuse one SCM for every repetition")

    p = sub.add_parser("sda", help="select augmentations by domain-classifier accuracy")
    _common(p, data=True)
    p.add_argument("--dataset", choices=("rotated", "colored"), default="rotated")

    for name, text in (
        ("rotated-mnist", "leave-one-angle-out end task"),
        ("colored-mnist", "spurious colour end task"),
        ("ablation", "all augmentations jointly versus the SDA selection"),
        ("sweep-rotation", "SDA domain accuracy across rotation ranges"),
    ):
        _common(sub.add_parser(name, help=text), data=True)

    p = sub.add_parser("equivariance-check", help="augmentation vs induced intervention for a permutation")
    _common(p)
    p.add_argument("--n", type=int, help="dimension of x")
    p.add_argument("--m", type=int, help="dimension of h_y")
    p.add_argument("--trials", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--generic", action="store_true", help="random D and e instead of permutation-invariant ones")

    p = sub.add_parser("bound-check", help="evaluate the invariance risk bound")
    p.add_argument("input", help='JSON file {"marginals": [[...], ...], "risks": [...]}')
    p.add_argument("--out", help="write the report here as well as to stdout")

    p = sub.add_parser("digits-surrogate", help="write small bundled digits as MNIST-style IDX files")
    p.add_argument("out_dir")
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> ex.ExperimentConfig:
    overrides = {
        "experiment": args.command,
        "master_seed": args.seed,
        "out_dir": args.out,
        "repetitions": args.reps,
        "workers": args.workers,
        "mnist_dir": getattr(args, "mnist_dir", None),
        "fast": getattr(args, "fast", None),
    }
    if args.command == "synthetic" and args.fixed_scm:
        overrides["resample_scm"] = False
    if args.command == "equivariance-check":
        overrides.update(eq_n=args.n, eq_m=args.m, eq_trials=args.trials, eq_tolerance=args.tolerance)
        if args.generic:
            overrides["eq_generic"] = True
    if args.config:
        cfg = ex.ExperimentConfig.from_json(args.config, **overrides)
    else:
        cfg = ex.ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    if cfg.mnist_dir is None and os.environ.get(MNIST_ENV):
        cfg.mnist_dir = os.environ[MNIST_ENV]
    return cfg


def _emit(obj: dict, out: str | None, name: str) -> None:
    text = json.dumps(obj, indent=2)
    print(text)
    if out:
        ex.atomic_write(Path(out) / name, text + "\n")


def _run(args: argparse.Namespace) -> int:
    if args.command == "bound-check":
        try:
            payload = json.loads(Path(args.input).read_text())
        except OSError as exc:
            raise FileNotFoundError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.input}: {exc}") from exc
        _emit(ex.run_bound_check(payload).to_dict(), args.out, "bound_check.json")
        return EXIT_OK
    if args.command == "digits-surrogate":
        paths = write_digits_surrogate(args.out_dir, args.n_train, args.seed)
        print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
        return EXIT_OK

    cfg = config_from_args(args)
    if args.command == "equivariance-check":
        _emit(ex.run_equivariance_check(cfg), args.out, "equivariance_check.json")
        return EXIT_OK
    if args.command == "synthetic":
        table = ex.run_synthetic(cfg)
    elif args.command == "sda":
        _run_sda(cfg, args.dataset)
        return EXIT_OK
    else:
        arrays = ex.load_digits_arrays(cfg)
        run = {
            "rotated-mnist": ex.run_rotated_mnist,
            "colored-mnist": ex.run_colored_mnist,
            "ablation": ex.run_ablation_all_da,
            "sweep-rotation": ex.run_sweep_rotation,
        }[args.command]
        table = run(cfg, arrays)
    csv_path, json_path = table.write(cfg.out_dir)
    sys.stdout.write(table.to_csv())
    log.info("wrote %s and %s", csv_path, json_path)
    return EXIT_OK


def _run_sda(cfg: ex.ExperimentConfig, dataset: str) -> None:
    """Write ``sda-<dataset>.csv`` (one row per candidate, with a selected flag) and the SdaResult JSON."""
    arrays = ex.load_digits_arrays(cfg)
    if dataset == "rotated":
        train, tests = ex.make_rotated(cfg, arrays)
        results = {f"{a:g}": r for a, r in ex.rotated_sda(cfg, train, list(tests)).items()}
    else:
        results = {"2": ex.colored_sda(cfg, ex.make_colored(cfg, arrays))}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=("held_out", "candidate", "mean", "standard_error", "selected"),
                            lineterminator="\n")
    writer.writeheader()
    for held, result in results.items():
        for row in result.rows():
            writer.writerow({"held_out": held, **row})
    name = f"sda-{dataset}"
    ex.atomic_write(Path(cfg.out_dir) / f"{name}.csv", buf.getvalue())
    payload = {"config": cfg.to_dict(), "results": {k: r.to_dict() for k, r in results.items()}}
    ex.atomic_write(Path(cfg.out_dir) / f"{name}.json", json.dumps(payload, indent=2, default=ex._json_default))
    sys.stdout.write(buf.getvalue())


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, InvalidSpecError, InvalidDimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, FormatError, LengthMismatchError, EmptyDatasetError,
            InsufficientDataError, InsufficientDomainsError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, SingularMatrixError, SingularSystemError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
