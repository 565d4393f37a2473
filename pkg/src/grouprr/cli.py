"""Command-line entry point: ``grouprr --synthetic powerlaw:2000 --stat triangles ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import (
    NAMED_GRAPHS,
    SWEEP_AXES,
    ConfigError,
    ExperimentConfig,
    results_to_csv,
    run_trials,
    summary_to_json,
    sweep,
    sweep_to_csv,
)

_MECH = {"grouprr-clip": "grouprr_clip", "grouprr-smooth": "grouprr_smooth", "arr": "arr_style", "rr": "rr_full"}
_STAT = {"triangles": "triangles", "c4": "four_cycles"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="grouprr", description="Simulate private triangle and 4-cycle counting.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", metavar="PATH", help="whitespace-separated edge list")
    src.add_argument(
        "--synthetic",
        metavar="SPEC",
        help=f"powerlaw:N[:MINDEG[:EXP]], er:N:P or one of {', '.join(NAMED_GRAPHS)}",
    )
    p.add_argument("--stat", choices=sorted(_STAT), default="triangles")
    p.add_argument("--mechanism", choices=sorted(_MECH), default="grouprr-clip")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--eps-split", metavar="A,B,C", help="relative shares of degree, publication and counting budgets")
    p.add_argument("--mu-star", type=float, help="target download reduction; derives s, mu_c and mu")
    p.add_argument("--s", type=int, help="group size")
    p.add_argument("--mu-c", type=float, help="server sampling rate (default 1 when --s is given)")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subsample", type=int, help="keep a random induced subgraph with this many nodes")
    p.add_argument("--beta", type=float, default=1e-3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", metavar="PATH", help="write here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--timing", action="store_true", help="include wall time in the CSV (breaks byte-identical reruns)")
    p.add_argument("--sweep", choices=SWEEP_AXES, help="sweep this axis instead of a single run")
    p.add_argument("--values", metavar="V1,V2,...", help="axis values for --sweep")
    p.add_argument("--compare", metavar="M1,M2", help="mechanisms to include in a sweep")
    return p


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated numbers, got {text!r}") from None


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    split = None
    if args.eps_split:
        split = tuple(_floats(args.eps_split, "--eps-split"))
        if len(split) != 3:
            raise ConfigError("--eps-split needs exactly three values")
    return ExperimentConfig(
        graph_path=args.graph,
        synthetic=args.synthetic,
        stat=_STAT[args.stat],
        mechanism=_MECH[args.mechanism],
        epsilon=args.epsilon,
        eps_split=split,
        s=args.s,
        mu_c=args.mu_c,
        mu_star=args.mu_star,
        trials=args.trials,
        seed=args.seed,
        subsample=args.subsample,
        beta=args.beta,
        workers=args.workers,
        record_time=args.timing,
    )


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        config = config_from_args(args)
        if args.sweep:
            if not args.values:
                raise ConfigError("--sweep needs --values")
            mechs = [_MECH[m] for m in args.compare.split(",")] if args.compare else [config.mechanism]
            rows = sweep(config, args.sweep, _floats(args.values, "--values"), mechs)
            text = json.dumps(rows, indent=2) + "\n" if args.format == "json" else sweep_to_csv(rows)
        else:
            results, summary = run_trials(config)
            text = summary_to_json(summary) + "\n" if args.format == "json" else results_to_csv(results, args.timing)
        _emit(text, args.out)
    except KeyError as exc:
        return _fail("ConfigError", f"unknown mechanism {exc}")
    except ConfigError as exc:
        return _fail("ConfigError", str(exc))
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc))
    return 0


def _fail(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return 2


if __name__ == "__main__":
    sys.exit(main())
