from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import __version__
from .constants import REFERENCE_CONTRAST_DEDUCED, REFERENCE_GRID_DEDUCED, Status
from .converters import ANCHOR_FILE_RE, format_cell, format_decimal, parse_cell, parse_decimal
from .defaults import default_sweep
from .errors import ConfigError, DimensionMismatch, VerifierError
from .helpers import PathLike, atomic_write, atomic_write_json, read_json, resolve_path, strictly_increasing
from .ingest import Image, Sample, load_manifest, synth_dataset
from .network import Network, classify, read_network
from .rng import SweepSeed
from .scheduler import (
    Cell,
    ContrastResult,
    ParamGrid,
    SweepStats,
    VerdictGrid,
    contrast_search,
    incremental_grid,
    stats,
)
from .summary import SweepTally
from .types import AnchorDocument, SweepDocument
from .verifier import Budget

log = logging.getLogger("robustgrid")

GRID_CORNER = "epsilon\\beta"


@dataclass(frozen=True)
class SweepConfig:
    network: Path
    dataset: Mapping
    downscale: int
    epsilons: Tuple[float, ...]
    betas: Tuple[float, ...]
    gammas: Tuple[float, ...]
    mu: float
    query_budget: Budget
    anchor_seconds: float
    contrast_seconds: float
    falsifier_samples: int
    seed: int
    output: Path
    run_contrast: bool = True
    # directory relative dataset paths are resolved against
    base: Optional[Path] = None

    @classmethod
    def from_document(cls, doc: SweepDocument, base: Optional[Path] = None) -> SweepConfig:
        if not isinstance(doc, dict):
            raise ConfigError("a sweep config must be a JSON object")
        unknown = set(doc) - set(default_sweep)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged = copy.deepcopy(default_sweep)
        merged.update(doc)
        try:
            epsilons = tuple(parse_decimal(v, what="epsilons") for v in merged["epsilons"])
            betas = tuple(parse_decimal(v, what="betas") for v in merged["betas"])
            gammas = tuple(parse_decimal(v, what="gammas") for v in merged["gammas"])
            mu = parse_decimal(merged["mu"], what="mu")
            budget = Budget.from_document(merged["query_budget"])
            anchor_seconds = float(merged["anchor_seconds"])
            contrast_seconds = float(merged["contrast_seconds"])
            samples = int(merged["falsifier_samples"])
            seed = int(merged["seed"])
            downscale = int(merged["downscale"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from exc
        for name, values in (("epsilons", epsilons), ("betas", betas), ("gammas", gammas)):
            if not values or not strictly_increasing(values):
                raise ConfigError(f"{name} must be a non-empty strictly increasing array")
        if epsilons[0] < 0 or betas[0] < 0:
            raise ConfigError("epsilons and betas must be non-negative")
        if not (0 < gammas[0] and gammas[-1] <= 1):
            raise ConfigError("gammas must lie in (0, 1]")
        if not 0 <= mu <= 1:
            raise ConfigError("mu must lie in [0, 1]")
        if anchor_seconds <= 0 or contrast_seconds <= 0:
            raise ConfigError("anchor_seconds and contrast_seconds must be positive")
        if samples < 0 or seed < 0 or downscale < 1:
            raise ConfigError("falsifier_samples and seed must be non-negative, downscale positive")
        dataset = merged["dataset"]
        if not isinstance(dataset, dict) or len(set(dataset) & {"manifest", "synthetic"}) != 1:
            raise ConfigError("dataset needs exactly one of 'manifest' or 'synthetic'")
        return cls(
            network=resolve_path(merged["network"], base),
            dataset=dataset,
            downscale=downscale,
            epsilons=epsilons,
            betas=betas,
            gammas=gammas,
            mu=mu,
            query_budget=budget,
            anchor_seconds=anchor_seconds,
            contrast_seconds=contrast_seconds,
            falsifier_samples=samples,
            seed=seed,
            output=Path(merged["output"]),
            run_contrast=bool(merged["run_contrast"]),
            base=base,
        )

    @classmethod
    def load(cls, path: PathLike) -> SweepConfig:
        path = resolve_path(path)
        try:
            doc = read_json(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_document(doc, base=path.parent)

    @property
    def grid(self) -> ParamGrid:
        return ParamGrid(self.betas, self.epsilons)

    def snapshot(self) -> dict:
        """Everything that influences verdicts, in JSON form."""
        return {
            "network": str(self.network),
            "dataset": self.dataset,
            "downscale": self.downscale,
            "epsilons": list(self.epsilons),
            "betas": list(self.betas),
            "gammas": list(self.gammas),
            "mu": self.mu,
            "query_budget": self.query_budget.to_document(),
            "anchor_seconds": self.anchor_seconds,
            "contrast_seconds": self.contrast_seconds,
            "falsifier_samples": self.falsifier_samples,
            "seed": self.seed,
            "run_contrast": self.run_contrast,
        }

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.snapshot(), sort_keys=True).encode("utf-8")).hexdigest()[:16]

    def load_network(self) -> Network:
        return read_network(self.network)

    def load_dataset(self) -> List[Sample]:
        if "manifest" in self.dataset:
            return load_manifest(resolve_path(self.dataset["manifest"], self.base), self.downscale)
        synthetic = self.dataset["synthetic"]
        try:
            return synth_dataset(
                int(synthetic["seed"]), int(synthetic["count"]), int(synthetic["side"]), int(synthetic["num_classes"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid synthetic dataset block: {exc}") from exc


@dataclass
class AnchorResult:
    index: int
    label: int
    predicted: int
    fingerprint: str = ""
    grid: Optional[VerdictGrid] = None
    contrast: Optional[ContrastResult] = None

    @property
    def skipped(self) -> bool:
        return self.predicted != self.label

    def to_document(self) -> AnchorDocument:
        return {
            "index": self.index,
            "label": self.label,
            "predicted": self.predicted,
            "skipped": self.skipped,
            "fingerprint": self.fingerprint,
            "grid": self.grid.to_document() if self.grid is not None else None,
            "contrast": self.contrast.to_document() if self.contrast is not None else None,
        }

    @classmethod
    def from_document(cls, doc: AnchorDocument) -> AnchorResult:
        return cls(
            index=int(doc["index"]),
            label=int(doc["label"]),
            predicted=int(doc["predicted"]),
            fingerprint=doc.get("fingerprint", ""),
            grid=VerdictGrid.from_document(doc["grid"]) if doc.get("grid") else None,
            contrast=ContrastResult.from_document(doc["contrast"]) if doc.get("contrast") else None,
        )


@dataclass(frozen=True, eq=False)
class AnchorTask:
    index: int
    image: Image
    label: int
    network: Network
    config: SweepConfig


def analyse_anchor(task: AnchorTask) -> AnchorDocument:
    """Grid walk and contrast search for one anchor. Runs inside pool workers."""
    config = task.config
    seed = SweepSeed(config.seed, task.index)
    log.info(f"anchor {task.index}: starting")
    grid = incremental_grid(
        task.network,
        task.image,
        task.label,
        config.grid,
        config.query_budget,
        samples=config.falsifier_samples,
        seed=seed,
        anchor_seconds=config.anchor_seconds,
    )
    contrast = None
    if config.run_contrast:
        contrast = contrast_search(
            task.network,
            task.image,
            task.label,
            config.gammas,
            config.mu,
            config.query_budget,
            samples=config.falsifier_samples,
            seed=seed,
            seconds=config.contrast_seconds,
        )
    log.info(f"anchor {task.index}: {grid.verifier_calls} grid calls")
    return AnchorResult(task.index, task.label, task.label, config.fingerprint, grid, contrast).to_document()


def anchor_path(out: Path, index: int) -> Path:
    return out / "anchors" / f"anchor-{index:04d}.json"


def _resumed(path: Path, fingerprint: str) -> Optional[AnchorResult]:
    if not path.exists():
        return None
    try:
        result = AnchorResult.from_document(read_json(path))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        log.warning(f"ignoring unreadable result {path}: {exc}")
        return None
    if result.fingerprint != fingerprint:
        log.info(f"{path} was produced with another config, recomputing")
        return None
    return result


def run(config: SweepConfig, *, jobs: int = 1, resume: bool = False) -> SweepSummary:
    """Verify every correctly classified anchor of the dataset and write all outputs."""
    out = config.output
    out.mkdir(parents=True, exist_ok=True)
    net = config.load_network()
    samples = config.load_dataset()
    fingerprint = config.fingerprint
    atomic_write_json(out / "run.json", run_metadata(config))
    results: Dict[int, AnchorResult] = {}
    tasks: List[AnchorTask] = []
    for index, (image, label) in enumerate(samples):
        if image.pixels.shape[0] != net.input_dim:
            raise DimensionMismatch(net.input_dim, image.pixels.shape[0], f"pixels of dataset image {index}")
        if resume:
            previous = _resumed(anchor_path(out, index), fingerprint)
            if previous is not None:
                results[index] = previous
                continue
        predicted = classify(net, image.pixels)
        if predicted != label:
            log.warning(f"anchor {index}: classified as {predicted}, labelled {label}; skipped")
            results[index] = AnchorResult(index, label, predicted, fingerprint)
            atomic_write_json(anchor_path(out, index), results[index].to_document())
            continue
        tasks.append(AnchorTask(index, image, label, net, config))
    if resume:
        log.info(f"resuming: {len(results)} anchors already done, {len(tasks)} to go")

    def store(doc: AnchorDocument) -> None:
        result = AnchorResult.from_document(doc)
        results[result.index] = result
        atomic_write_json(anchor_path(out, result.index), doc)

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(analyse_anchor, task): task.index for task in tasks}
            for future in as_completed(futures):
                try:
                    store(future.result())
                except Exception as exc:
                    log.exception(f"anchor {futures[future]} failed", exc_info=exc)
                    executor.shutdown(wait=False, cancel_futures=True)
                    raise VerifierError(f"anchor {futures[future]} failed: {exc}") from exc
    else:
        for task in tasks:
            try:
                store(analyse_anchor(task))
            except Exception as exc:
                log.exception(f"anchor {task.index} failed", exc_info=exc)
                raise VerifierError(f"anchor {task.index} failed: {exc}") from exc

    ordered = [results[i] for i in sorted(results)]
    summary = summarize(ordered, config.grid, config.gammas if config.run_contrast else ())
    write_outputs(out, ordered, summary)
    return summary


def run_metadata(config: SweepConfig) -> dict:
    return {
        "version": __version__,
        "config": config.snapshot(),
        "fingerprint": config.fingerprint,
        "clipped": False,
        "reference_deduced": {"grid": REFERENCE_GRID_DEDUCED, "contrast": REFERENCE_CONTRAST_DEDUCED},
    }


def load_results(out: PathLike) -> List[AnchorResult]:
    directory = Path(out) / "anchors"
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} does not exist")
    results = []
    for path in sorted(directory.iterdir()):
        if ANCHOR_FILE_RE.match(path.name):
            results.append(AnchorResult.from_document(read_json(path)))
    return sorted(results, key=lambda r: r.index)


def _csv_text(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _percent(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.2f}"


def grid_rows(grid: VerdictGrid) -> List[List[str]]:
    """Rows by decreasing epsilon, columns by increasing beta."""
    rows = [[GRID_CORNER, *(format_decimal(b) for b in grid.betas)]]
    for e in reversed(range(len(grid.epsilons))):
        cells = [format_cell(grid.cell(b, e).status, grid.cell(b, e).provenance) for b in range(len(grid.betas))]
        rows.append([format_decimal(grid.epsilons[e]), *cells])
    return rows


def read_grid_csv(path: PathLike) -> VerdictGrid:
    with open(path, "r", encoding="utf-8", newline="") as fp:
        rows = [row for row in csv.reader(fp) if row]
    if not rows or rows[0][0] != GRID_CORNER:
        raise ValueError(f"{path} is not a grid CSV")
    betas = tuple(parse_decimal(v) for v in rows[0][1:])
    epsilons = tuple(parse_decimal(row[0]) for row in reversed(rows[1:]))
    grid = VerdictGrid(ParamGrid(betas, epsilons))
    for e, row in enumerate(reversed(rows[1:])):
        for b, text in enumerate(row[1:]):
            status, provenance = parse_cell(text)
            grid.cells[b][e] = Cell(status, provenance)
    return grid


def export_grid_csv(
    results: Sequence[AnchorResult], out: PathLike, summary: Optional[SweepSummary] = None
) -> List[Path]:
    """Per-anchor grid CSVs plus the aggregate heatmap and contrast series."""
    out = Path(out)
    summary = summary or summarize(results)
    written = []
    for result in results:
        if result.grid is not None:
            path = out / "grids" / f"anchor-{result.index:04d}.csv"
            written.append(atomic_write(path, _csv_text(grid_rows(result.grid))))
    heatmap = [[GRID_CORNER, *(format_decimal(b) for b in summary.betas)]]
    for e in reversed(range(len(summary.epsilons))):
        percents = [_percent(column[e]) for column in summary.heatmap]
        heatmap.append([format_decimal(summary.epsilons[e]), *percents])
    written.append(atomic_write(out / "heatmap.csv", _csv_text(heatmap)))
    contrast = [["gamma", "unsat_percent", "sat", "unsat", "unknown"]]
    for gamma, percent in zip(summary.gammas, summary.contrast_percent):
        counts = summary.contrast_tally.get_counts(gamma)
        contrast.append(
            [format_decimal(gamma), _percent(percent), counts.sat.overall, counts.unsat.overall, counts.unknown]
        )
    written.append(atomic_write(out / "contrast.csv", _csv_text(contrast)))
    per_anchor = [["anchor", *(format_decimal(g) for g in summary.gammas), "boundary"]]
    for result in results:
        if result.contrast is not None:
            cells = [format_cell(c.status, c.provenance) for c in result.contrast.cells]
            boundary = result.contrast.boundary
            per_anchor.append(
                [result.index, *cells, "" if boundary is None else format_decimal(result.contrast.gammas[boundary])]
            )
    written.append(atomic_write(out / "contrast_anchors.csv", _csv_text(per_anchor)))
    return written


def export_timings_csv(results: Sequence[AnchorResult], out: PathLike) -> Path:
    rows: List[List] = [["anchor", "kind", "beta", "epsilon", "gamma", "source", "status", "wall_time"]]
    for result in results:
        if result.grid is not None:
            grid = result.grid
            for record in grid.call_log:
                b, e = record.index
                beta, epsilon = format_decimal(grid.betas[b]), format_decimal(grid.epsilons[e])
                timing = f"{record.wall_time:.6f}"
                rows.append([result.index, "grid", beta, epsilon, "", record.source, record.status.value, timing])
        if result.contrast is not None:
            for record in result.contrast.call_log:
                gamma = format_decimal(result.contrast.gammas[record.index[0]])
                timing = f"{record.wall_time:.6f}"
                rows.append([result.index, "contrast", "", "", gamma, record.source, record.status.value, timing])
    return atomic_write(Path(out) / "timings.csv", _csv_text(rows))


@dataclass
class SweepSummary:
    betas: Tuple[float, ...]
    epsilons: Tuple[float, ...]
    gammas: Tuple[float, ...]
    anchors: int = 0
    analysed: int = 0
    skipped: List[Tuple[int, int, int]] = field(default_factory=list)
    exhausted_grid: List[int] = field(default_factory=list)
    exhausted_contrast: List[int] = field(default_factory=list)
    # heatmap[b][e] is the % UNSAT over anchors whose grid finished
    heatmap: List[List[Optional[float]]] = field(default_factory=list)
    contrast_percent: List[Optional[float]] = field(default_factory=list)
    grid_stats: SweepStats = field(default_factory=SweepStats)
    contrast_stats: SweepStats = field(default_factory=SweepStats)
    grid_tally: SweepTally = field(default_factory=SweepTally)
    contrast_tally: SweepTally = field(default_factory=SweepTally)

    @property
    def epsilon_drop(self) -> Optional[float]:
        """Mean decrease of % UNSAT per epsilon step."""
        drops = [
            column[e] - column[e + 1]
            for column in self.heatmap
            for e in range(len(column) - 1)
            if column[e] is not None and column[e + 1] is not None
        ]
        return sum(drops) / len(drops) if drops else None

    @property
    def beta_drop(self) -> Optional[float]:
        """Mean decrease of % UNSAT per beta step."""
        drops = [
            self.heatmap[b][e] - self.heatmap[b + 1][e]
            for b in range(len(self.heatmap) - 1)
            for e in range(len(self.epsilons))
            if self.heatmap[b][e] is not None and self.heatmap[b + 1][e] is not None
        ]
        return sum(drops) / len(drops) if drops else None

    def heatmap_monotone(self) -> bool:
        n_betas, n_epsilons = len(self.betas), len(self.epsilons)
        for b in range(n_betas):
            for e in range(n_epsilons):
                here = self.heatmap[b][e]
                if here is None:
                    continue
                for other in (
                    self.heatmap[b + 1][e] if b + 1 < n_betas else None,
                    self.heatmap[b][e + 1] if e + 1 < n_epsilons else None,
                ):
                    if other is not None and other > here:
                        return False
        return True

    def to_document(self) -> dict:
        def counts(tally: SweepTally, key) -> dict:
            c = tally.get_counts(key)
            return {
                "sat": vars(c.sat),
                "unsat": vars(c.unsat),
                "unknown": c.unknown,
            }

        return {
            "anchors": self.anchors,
            "analysed": self.analysed,
            "skipped": [{"index": i, "label": label, "predicted": p} for i, label, p in self.skipped],
            "exhausted": {"grid": self.exhausted_grid, "contrast": self.exhausted_contrast},
            "betas": list(self.betas),
            "epsilons": list(self.epsilons),
            "gammas": list(self.gammas),
            "heatmap": self.heatmap,
            "contrast_percent": self.contrast_percent,
            "grid": {
                "cells": [[counts(self.grid_tally, (e, b)) for e in self.epsilons] for b in self.betas],
                "totals": _stats_document(self.grid_stats),
                "deduced_fraction": self.grid_stats.deduced_fraction,
                "reference_deduced_fraction": REFERENCE_GRID_DEDUCED,
            },
            "contrast": {
                "cells": [counts(self.contrast_tally, g) for g in self.gammas],
                "totals": _stats_document(self.contrast_stats),
                "deduced_fraction": self.contrast_stats.deduced_fraction,
                "reference_deduced_fraction": REFERENCE_CONTRAST_DEDUCED,
            },
            "mean_unsat_drop": {"epsilon_step": self.epsilon_drop, "beta_step": self.beta_drop},
        }


def _stats_document(value: SweepStats) -> dict:
    return {
        "total": value.total,
        "verified": value.verified,
        "deduced": value.deduced,
        "falsified": value.falsified,
        "unknown": value.unknown,
        "exhausted": value.exhausted,
        "verifier_calls": value.verifier_calls,
        "sat": vars(value.sat),
        "unsat": vars(value.unsat),
    }


def summarize(
    results: Sequence[AnchorResult], grid: Optional[ParamGrid] = None, gammas: Optional[Sequence[float]] = None
) -> SweepSummary:
    """Aggregate per-anchor results into heatmap percentages and per-parameter counts."""
    if grid is None:
        first = next((r.grid for r in results if r.grid is not None), None)
        betas, epsilons = (first.betas, first.epsilons) if first is not None else ((), ())
    else:
        betas, epsilons = grid.betas, grid.epsilons
    if gammas is None:
        first_contrast = next((r.contrast for r in results if r.contrast is not None), None)
        gammas = first_contrast.gammas if first_contrast is not None else ()
    summary = SweepSummary(tuple(betas), tuple(epsilons), tuple(gammas), anchors=len(results))
    unsat = [[0] * len(epsilons) for _ in betas]
    finished_grids = 0
    contrast_unsat = [0] * len(gammas)
    finished_contrasts = 0
    for result in results:
        if result.skipped:
            summary.skipped.append((result.index, result.label, result.predicted))
            continue
        summary.analysed += 1
        if result.grid is not None:
            _tally_grid(summary, result.grid)
            if result.grid.exhausted:
                summary.exhausted_grid.append(result.index)
            else:
                finished_grids += 1
                for b, column in enumerate(result.grid.cells):
                    for e, cell in enumerate(column):
                        unsat[b][e] += cell.status is Status.unsat
        if result.contrast is not None:
            _tally_contrast(summary, result.contrast)
            if result.contrast.exhausted:
                summary.exhausted_contrast.append(result.index)
            else:
                finished_contrasts += 1
                for i, cell in enumerate(result.contrast.cells):
                    contrast_unsat[i] += cell.status is Status.unsat
    summary.heatmap = [
        [100.0 * count / finished_grids if finished_grids else None for count in column] for column in unsat
    ]
    summary.contrast_percent = [100.0 * c / finished_contrasts if finished_contrasts else None for c in contrast_unsat]
    return summary


def _tally_grid(summary: SweepSummary, grid: VerdictGrid) -> None:
    summary.grid_stats = summary.grid_stats + stats(grid)
    for b, column in enumerate(grid.cells):
        for e, cell in enumerate(column):
            summary.grid_tally.add_result((grid.epsilons[e], grid.betas[b]), cell.status, cell.provenance)
    for record in grid.call_log:
        if record.source == "verifier":
            b, e = record.index
            summary.grid_tally.add_time((grid.epsilons[e], grid.betas[b]), record.wall_time)


def _tally_contrast(summary: SweepSummary, contrast: ContrastResult) -> None:
    summary.contrast_stats = summary.contrast_stats + stats(contrast)
    for gamma, cell in zip(contrast.gammas, contrast.cells):
        summary.contrast_tally.add_result(gamma, cell.status, cell.provenance)
    for record in contrast.call_log:
        if record.source == "verifier":
            summary.contrast_tally.add_time(contrast.gammas[record.index[0]], record.wall_time)


def write_outputs(out: PathLike, results: Sequence[AnchorResult], summary: SweepSummary) -> List[Path]:
    out = Path(out)
    written = export_grid_csv(results, out, summary)
    written.append(export_timings_csv(results, out))
    skipped = [["anchor", "label", "predicted"], *([i, label, p] for i, label, p in summary.skipped)]
    written.append(atomic_write(out / "skipped.csv", _csv_text(skipped)))
    written.append(atomic_write_json(out / "summary.json", summary.to_document()))
    log.info(f"wrote {len(written)} files to {out}")
    return written
