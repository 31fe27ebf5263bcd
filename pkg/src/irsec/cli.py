"""Command-line entry points for the experiment runner."""

from __future__ import annotations

import argparse
import json
import sys

from irsec.experiments import (
    EXPERIMENT_KINDS,
    ConfigError,
    config_to_scenario,
    run_experiment,
    spec_from_config,
)


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"seeds must be a comma-separated integer list: {err}")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsec",
        description="Robust secure beamforming experiments for an IRS-assisted "
        "mmWave cognitive radio downlink",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment sweep")
    run.add_argument("--config", required=True, help="JSON scenario config")
    run.add_argument("--experiment", required=True, choices=EXPERIMENT_KINDS)
    run.add_argument("--seeds", required=True, type=_parse_seeds, help="e.g. 0,1,2")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")

    val = sub.add_parser("validate", help="validate a config file")
    val.add_argument("--config", required=True)

    bp = sub.add_parser("beampattern", help="optimize once and write the gain grid")
    bp.add_argument("--config", required=True)
    bp.add_argument("--out", required=True)
    bp.add_argument("--seeds", type=_parse_seeds, default=[0])
    bp.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = _load_config(args.config)
            config_to_scenario({k: v for k, v in cfg.items() if k != "experiments"})
            print("config ok")
            return 0
        cfg = _load_config(args.config)
        kind = "beampattern" if args.command == "beampattern" else args.experiment
        spec = spec_from_config(cfg, kind, args.seeds, args.out, jobs=args.jobs)
        out = run_experiment(spec)
        print(f"wrote {out['csv']} and {out['manifest']} ({out['cases']} cases)")
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
