from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .constants import ImageFormat
from .converters import EnumAction, NoExitParser, format_decimal, parse_decimal
from .defaults import default_synthetic
from .encoder import NoiseAndBrightness, PerturbationSpec, brightness_query
from .errors import (
    ConfigError,
    DimensionMismatch,
    EncodingError,
    ImageFormatError,
    NetworkFormatError,
    VerifierError,
)
from .falsifier import sample_attack
from .helpers import read_json
from .ingest import synth_dataset, write_dataset
from .network import classify, read_network
from .report import SweepConfig, export_grid_csv, export_timings_csv, load_results, run, summarize, write_outputs
from .rng import SweepSeed
from .scheduler import ParamGrid
from .tables import anchor_table, new_table, render_summary

log = logging.getLogger("robustgrid")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_INTERNAL = 3


def _decimal(value: str) -> float:
    try:
        return parse_decimal(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = NoExitParser(prog="robustgrid", description="Verify ReLU classifiers against image perturbations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="log every cell decision and branch")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="only log warnings and errors")
    commands = parser.add_subparsers(dest="command", required=True)

    cmd = commands.add_parser("run", help="run a full sweep from a config file")
    cmd.add_argument("--config", required=True, type=Path)
    cmd.add_argument("--out", type=Path, help="output directory, overrides the config's 'output'")
    cmd.add_argument("--jobs", type=int, default=1, help="number of anchors analysed in parallel")
    cmd.add_argument("--resume", action="store_true", help="reuse per-anchor results of a previous run")

    cmd = commands.add_parser("summarize", help="print and rewrite the summary of an output directory")
    cmd.add_argument("--out", required=True, type=Path)
    cmd.add_argument("--anchor", type=int, help="also print the grid of this anchor")

    cmd = commands.add_parser("export", help="rewrite the CSV files of an output directory")
    cmd.add_argument("--out", required=True, type=Path)

    cmd = commands.add_parser("validate-network", help="load a network document and print its shape")
    cmd.add_argument("network", type=Path)

    cmd = commands.add_parser("attack", help="run only the falsifier on one grid cell for every anchor")
    cmd.add_argument("--config", required=True, type=Path)
    cmd.add_argument("--epsilon", required=True, type=_decimal)
    cmd.add_argument("--beta", type=_decimal, default=0.0)
    cmd.add_argument("--samples", type=int, help="overrides the config's 'falsifier_samples'")

    cmd = commands.add_parser("synth", help="write a synthetic dataset and its manifest")
    cmd.add_argument("--out", required=True, type=Path)
    cmd.add_argument("--seed", type=int, default=default_synthetic["seed"])
    cmd.add_argument("--count", type=int, default=default_synthetic["count"])
    cmd.add_argument("--side", type=int, default=default_synthetic["side"])
    cmd.add_argument("--num-classes", type=int, default=default_synthetic["num_classes"])
    cmd.add_argument("--format", type=ImageFormat, action=EnumAction, default=ImageFormat.csv)
    return parser


def _load_config(path: Path, out: Optional[Path] = None) -> SweepConfig:
    config = SweepConfig.load(path)
    if out is not None:
        config = replace(config, output=out)
    return config


def cmd_run(args: argparse.Namespace) -> int:
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    config = _load_config(args.config, args.out)
    summary = run(config, jobs=args.jobs, resume=args.resume)
    print(render_summary(summary))
    return EXIT_OK


def _rebuild(out: Path):
    meta = read_json(out / "run.json")
    snapshot = meta["config"]
    results = load_results(out)
    grid = ParamGrid(tuple(snapshot["betas"]), tuple(snapshot["epsilons"]))
    gammas = snapshot["gammas"] if snapshot.get("run_contrast", True) else ()
    return results, summarize(results, grid, gammas)


def cmd_summarize(args: argparse.Namespace) -> int:
    results, summary = _rebuild(args.out)
    write_outputs(args.out, results, summary)
    print(render_summary(summary))
    if args.anchor is not None:
        grids = {result.index: result.grid for result in results if result.grid is not None}
        if args.anchor not in grids:
            raise ConfigError(f"anchor {args.anchor} has no grid in {args.out}")
        print(f"Anchor {args.anchor}")
        print(anchor_table(grids[args.anchor]))
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    results, summary = _rebuild(args.out)
    written = export_grid_csv(results, args.out, summary)
    written.append(export_timings_csv(results, args.out))
    print(f"Wrote {len(written)} CSV files to {args.out}")
    return EXIT_OK


def cmd_validate_network(args: argparse.Namespace) -> int:
    net = read_network(args.network)
    table = new_table(["Layer", "Inputs", "Outputs", "Activation"])
    for number, layer in enumerate(net.layers, start=1):
        table.rows.append([number, layer.in_dim, layer.out_dim, str(layer.activation)])
    print(table)
    print(f"{net.relu_count} ReLUs, {net.output_dim} classes")
    return EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    samples = config.falsifier_samples if args.samples is None else args.samples
    if samples < 1:
        raise ConfigError("--samples must be at least 1")
    net = config.load_network()
    table = new_table(["Anchor", "Label", "Result", "Samples"])
    hits = 0
    for index, (image, label) in enumerate(config.load_dataset()):
        if classify(net, image.pixels) != label:
            table.rows.append([index, label, "skipped", 0])
            continue
        spec = PerturbationSpec(NoiseAndBrightness(args.epsilon, args.beta), image, label)
        report = sample_attack(brightness_query(net, spec), samples, int(SweepSeed(config.seed, index)))
        hits += report.found is not None
        table.rows.append([index, label, "SAT" if report.found is not None else "no hit", report.tried])
    print(table)
    print(f"epsilon={format_decimal(args.epsilon)} beta={format_decimal(args.beta)}: {hits} counterexamples found")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if args.count < 1 or args.side < 4 or args.num_classes < 2:
        raise ConfigError("synth needs --count >= 1, --side >= 4 and --num-classes >= 2")
    samples = synth_dataset(args.seed, args.count, args.side, args.num_classes)
    manifest = write_dataset(samples, args.out, args.format)
    print(f"Wrote {len(samples)} {ImageFormat.names()[args.format]} images and {manifest}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "summarize": cmd_summarize,
    "export": cmd_export,
    "validate-network": cmd_validate_network,
    "attack": cmd_attack,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"robustgrid: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DimensionMismatch, EncodingError) as exc:
        log.error(str(exc))
        return EXIT_CONFIG
    except (OSError, ImageFormatError, NetworkFormatError, json.JSONDecodeError) as exc:
        log.error(str(exc))
        return EXIT_IO
    except VerifierError as exc:
        log.error(str(exc))
        return EXIT_INTERNAL
    except Exception as exc:
        log.exception("unexpected failure", exc_info=exc)
        return EXIT_INTERNAL


def cli(argv: Optional[List[str]] = None) -> None:
    sys.exit(main(argv))
