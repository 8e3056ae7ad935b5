from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .constants import Provenance, Status
from .encoder import (
    Contrast,
    NoiseAndBrightness,
    PerturbationSpec,
    VerificationQuery,
    anchor_point,
    brightness_query,
    contrast_network,
    contrast_query,
)
from .errors import ConfigError, MisclassifiedAnchor
from .falsifier import sample_attack
from .helpers import Deadline, strictly_increasing
from .ingest import Image
from .network import Network, classify, evaluate
from .rng import SweepSeed
from .summary import StatusCounts
from .types import CallDocument, CellDocument, ContrastDocument, GridDocument
from .verifier import Budget, validate_witness, verify

log = logging.getLogger("robustgrid")

# contrast cells draw their falsifier seeds from a separate range
CONTRAST_SEED_OFFSET = 1 << 16

Index = Tuple[int, ...]


@dataclass(frozen=True)
class ParamGrid:
    betas: Tuple[float, ...]
    epsilons: Tuple[float, ...]

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        epsilons = tuple(float(e) for e in self.epsilons)
        for name, values in (("betas", betas), ("epsilons", epsilons)):
            if not values:
                raise ConfigError(f"{name} must not be empty")
            if not strictly_increasing(values):
                raise ConfigError(f"{name} must be strictly increasing")
            if values[0] < 0:
                raise ConfigError(f"{name} must be non-negative")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "epsilons", epsilons)

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.betas), len(self.epsilons)


@dataclass
class Cell:
    status: Status = Status.unknown
    # None until the cell has been resolved
    provenance: Optional[Provenance] = None
    # decided cell a deduced verdict was inferred from
    source: Optional[Index] = None
    witness: Optional[np.ndarray] = None

    @property
    def closed(self) -> bool:
        return self.provenance is not None

    def to_document(self) -> CellDocument:
        return {
            "status": self.status.value,
            "provenance": self.provenance.value if self.provenance else None,
            "source": list(self.source) if self.source is not None else None,
            "witness": [float(v) for v in self.witness] if self.witness is not None else None,
        }

    @classmethod
    def from_document(cls, doc: CellDocument) -> Cell:
        return cls(
            status=Status.get_from_name(doc["status"]),
            provenance=Provenance.get_from_name(doc["provenance"]) if doc.get("provenance") else None,
            source=tuple(doc["source"]) if doc.get("source") is not None else None,
            witness=np.array(doc["witness"], dtype=np.float64) if doc.get("witness") is not None else None,
        )


@dataclass(frozen=True)
class CallRecord:
    """One cell that was actually decided: by classification, witness reuse, the falsifier or the verifier."""

    index: Index
    status: Status
    wall_time: float
    source: str

    def to_document(self) -> CallDocument:
        return {
            "index": list(self.index),
            "status": self.status.value,
            "wall_time": self.wall_time,
            "source": self.source,
        }

    @classmethod
    def from_document(cls, doc: CallDocument) -> CallRecord:
        return cls(tuple(doc["index"]), Status.get_from_name(doc["status"]), float(doc["wall_time"]), doc["source"])


@dataclass(frozen=True, eq=False)
class CellOutcome:
    status: Status
    provenance: Provenance
    witness: Optional[np.ndarray] = None
    # None when nothing was run because the budget was already spent
    source: Optional[str] = None
    wall_time: float = 0.0


EXHAUSTED = CellOutcome(Status.unknown, Provenance.exhausted)


class _Verdicts:
    """Cells plus call log shared by the grid and the contrast line."""

    cells: List
    call_log: List[CallRecord]

    def iter_cells(self) -> Iterator[Cell]:
        raise NotImplementedError

    @property
    def verifier_calls(self) -> int:
        return sum(1 for record in self.call_log if record.source == "verifier")

    @property
    def complete(self) -> bool:
        return all(cell.closed for cell in self.iter_cells())

    @property
    def exhausted(self) -> bool:
        return any(cell.provenance is Provenance.exhausted for cell in self.iter_cells())

    def _log(self, index: Index, outcome: CellOutcome) -> None:
        if outcome.source is not None:
            self.call_log.append(CallRecord(index, outcome.status, outcome.wall_time, outcome.source))


class VerdictGrid(_Verdicts):
    """Verdicts over a (beta, epsilon) grid, indexed ``cells[b][e]``."""

    def __init__(self, grid: ParamGrid):
        self.grid = grid
        self.cells: List[List[Cell]] = [[Cell() for _ in grid.epsilons] for _ in grid.betas]
        self.call_log: List[CallRecord] = []

    @property
    def betas(self) -> Tuple[float, ...]:
        return self.grid.betas

    @property
    def epsilons(self) -> Tuple[float, ...]:
        return self.grid.epsilons

    def cell(self, b: int, e: int) -> Cell:
        return self.cells[b][e]

    def is_open(self, b: int, e: int) -> bool:
        return not self.cells[b][e].closed

    def iter_cells(self) -> Iterator[Cell]:
        for column in self.cells:
            yield from column

    def statuses(self) -> List[List[Status]]:
        return [[cell.status for cell in column] for column in self.cells]

    def record(self, b: int, e: int, outcome: CellOutcome) -> Status:
        """Store a decided result and fill every open cell it implies."""
        cell = self.cells[b][e]
        cell.status, cell.provenance, cell.witness = outcome.status, outcome.provenance, outcome.witness
        self._log((b, e), outcome)
        n_betas, n_epsilons = self.grid.shape
        if outcome.status is Status.sat:
            # larger beta and larger epsilon: the box only grows
            targets = ((b2, e2) for b2 in range(b, n_betas) for e2 in range(e, n_epsilons))
        elif outcome.status is Status.unsat:
            targets = ((b2, e2) for b2 in range(b + 1) for e2 in range(e + 1))
        else:
            return outcome.status
        for b2, e2 in targets:
            other = self.cells[b2][e2]
            if other.closed:
                continue
            other.status, other.provenance, other.source = outcome.status, Provenance.deduced, (b, e)
            other.witness = outcome.witness
        log.debug(f"cell beta={self.betas[b]} epsilon={self.epsilons[e]}: {outcome.status} ({outcome.source})")
        return outcome.status

    def step_consistent(self) -> bool:
        n_betas, n_epsilons = self.grid.shape
        for b in range(n_betas):
            for e in range(n_epsilons):
                status = self.cells[b][e].status
                if status is Status.sat:
                    larger = [self.cells[b2][e] for b2 in range(b, n_betas)] + self.cells[b][e:]
                elif status is Status.unsat:
                    larger = [self.cells[b2][e] for b2 in range(b + 1)] + self.cells[b][: e + 1]
                else:
                    continue
                if any(other.status not in (status, Status.unknown) for other in larger):
                    return False
        return True

    def to_document(self) -> GridDocument:
        return {
            "betas": list(self.betas),
            "epsilons": list(self.epsilons),
            "cells": [[cell.to_document() for cell in column] for column in self.cells],
            "call_log": [record.to_document() for record in self.call_log],
        }

    @classmethod
    def from_document(cls, doc: GridDocument) -> VerdictGrid:
        ret = cls(ParamGrid(tuple(doc["betas"]), tuple(doc["epsilons"])))
        ret.cells = [[Cell.from_document(cell) for cell in column] for column in doc["cells"]]
        ret.call_log = [CallRecord.from_document(record) for record in doc["call_log"]]
        return ret


class ContrastResult(_Verdicts):
    """Verdicts over an increasing array of contrast values gamma."""

    def __init__(self, gammas: Sequence[float], mu: float):
        self.gammas = tuple(float(g) for g in gammas)
        self.mu = float(mu)
        self.cells: List[Cell] = [Cell() for _ in self.gammas]
        self.call_log: List[CallRecord] = []

    def iter_cells(self) -> Iterator[Cell]:
        yield from self.cells

    def is_open(self, i: int) -> bool:
        return not self.cells[i].closed

    @property
    def statuses(self) -> List[Status]:
        return [cell.status for cell in self.cells]

    @property
    def boundary(self) -> Optional[int]:
        """Index of the largest gamma verified or deduced UNSAT."""
        unsat = [i for i, cell in enumerate(self.cells) if cell.status is Status.unsat]
        return unsat[-1] if unsat else None

    def record(self, i: int, outcome: CellOutcome) -> Status:
        cell = self.cells[i]
        cell.status, cell.provenance, cell.witness = outcome.status, outcome.provenance, outcome.witness
        self._log((i,), outcome)
        if outcome.status is Status.sat:
            targets = range(i + 1, len(self.cells))
        elif outcome.status is Status.unsat:
            targets = range(i)
        else:
            return outcome.status
        for j in targets:
            other = self.cells[j]
            if not other.closed:
                other.status, other.provenance, other.source, other.witness = (
                    outcome.status,
                    Provenance.deduced,
                    (i,),
                    outcome.witness,
                )
        return outcome.status

    def monotone(self) -> bool:
        seen_sat = False
        for status in self.statuses:
            if status is Status.sat:
                seen_sat = True
            elif status is Status.unsat and seen_sat:
                return False
        return True

    def to_document(self) -> ContrastDocument:
        return {
            "gammas": list(self.gammas),
            "mu": self.mu,
            "cells": [cell.to_document() for cell in self.cells],
            "boundary": self.boundary,
            "call_log": [record.to_document() for record in self.call_log],
        }

    @classmethod
    def from_document(cls, doc: ContrastDocument) -> ContrastResult:
        ret = cls(doc["gammas"], doc["mu"])
        ret.cells = [Cell.from_document(cell) for cell in doc["cells"]]
        ret.call_log = [CallRecord.from_document(record) for record in doc["call_log"]]
        return ret


def search_line(positions: Sequence[int], is_open: Callable[[int], bool], decide: Callable[[int], Status]) -> None:
    """
    Binary search along one monotone line of cells.

    `decide` must record its verdict so that `is_open` turns false for every cell
    the verdict implies. The upper median of the open cells is decided each round;
    an UNKNOWN verdict says nothing about its neighbours, so both sides are then
    searched on their own.
    """
    pending = [p for p in positions if is_open(p)]
    while pending:
        mid = pending[len(pending) // 2]
        status = decide(mid)
        if status is Status.unknown:
            search_line([p for p in pending if p < mid], is_open, decide)
            search_line([p for p in pending if p > mid], is_open, decide)
            return
        pending = [p for p in pending if is_open(p)]


def walk_grid(verdicts: VerdictGrid, decide: Callable[[int, int], CellOutcome]) -> VerdictGrid:
    """
    Resolve every cell of `verdicts` with as few decisions as the step shape allows.

    The walk starts at the smallest beta and the largest epsilon. A SAT verdict
    moves one epsilon down, an UNSAT verdict one beta to the right, and each
    verdict fills the cells it implies. An UNKNOWN verdict is searched past along
    its column before moving right. Once the walk reaches the last beta column
    or the smallest epsilon row, the rest of that line is finished by binary
    search. Cells that are already resolved are reused without probing.
    """
    n_betas, n_epsilons = verdicts.grid.shape
    last = n_betas - 1

    def visit(b: int, e: int) -> Status:
        if verdicts.is_open(b, e):
            return verdicts.record(b, e, decide(b, e))
        return verdicts.cell(b, e).status

    b, e = 0, n_epsilons - 1
    while True:
        if b == last:
            search_line(range(e + 1), lambda e2: verdicts.is_open(b, e2), lambda e2: visit(b, e2))
            break
        if e == 0:
            search_line(range(b, n_betas), lambda b2: verdicts.is_open(b2, 0), lambda b2: visit(b2, 0))
            break
        status = visit(b, e)
        if status is Status.sat:
            e -= 1
        elif status is Status.unsat:
            b += 1
        else:
            column = b
            search_line(range(e), lambda e2: verdicts.is_open(column, e2), lambda e2: visit(column, e2))
            b += 1
    return verdicts


class _CellDecider:
    """Decides single cells: stored witnesses first, then the falsifier, then the verifier."""

    def __init__(self, budget: Budget, samples: int, seed: SweepSeed, deadline: Deadline):
        self.budget = budget
        self.samples = samples
        self.seed = seed
        self.deadline = deadline
        self.witnesses: List[np.ndarray] = []

    def __call__(self, query: VerificationQuery, cell: int) -> CellOutcome:
        if self.deadline.expired():
            return EXHAUSTED
        start = time.perf_counter()
        for witness in self.witnesses:
            if validate_witness(query, witness):
                return CellOutcome(Status.sat, Provenance.falsified, witness, "witness", time.perf_counter() - start)
        if self.samples > 0:
            report = sample_attack(query, self.samples, int(self.seed.for_cell(cell)))
            if report.found is not None:
                self.witnesses.append(report.found)
                return CellOutcome(
                    Status.sat, Provenance.falsified, report.found, "falsifier", time.perf_counter() - start
                )
        verdict = verify(query, self.budget)
        if verdict.status is Status.sat:
            self.witnesses.append(verdict.witness)
        elif verdict.status is Status.unknown:
            log.warning(f"verifier returned UNKNOWN ({verdict.reason}) for {query.provenance.describe()}")
        return CellOutcome(verdict.status, Provenance.verified, verdict.witness, "verifier", verdict.stats.wall_time)


def _check_label(net: Network, anchor: Image, label: int) -> None:
    predicted = classify(net, anchor.pixels)
    if predicted != label:
        raise MisclassifiedAnchor(label, predicted)


def incremental_grid(
    net: Network,
    anchor: Image,
    label: int,
    grid: ParamGrid,
    budget: Budget,
    *,
    samples: int = 0,
    seed: Optional[SweepSeed] = None,
    anchor_seconds: Optional[float] = None,
) -> VerdictGrid:
    _check_label(net, anchor, label)
    seed = seed or SweepSeed(0)
    decider = _CellDecider(budget, samples, seed, Deadline(anchor_seconds))
    n_epsilons = len(grid.epsilons)

    def decide(b: int, e: int) -> CellOutcome:
        epsilon, beta = grid.epsilons[e], grid.betas[b]
        query = brightness_query(net, PerturbationSpec(NoiseAndBrightness(epsilon, beta), anchor, label))
        if epsilon == 0 and beta == 0:
            # the box is the anchor itself
            start = time.perf_counter()
            point = anchor_point(query)
            if query.property.holds(evaluate(query.network, point)):
                return CellOutcome(Status.sat, Provenance.falsified, point, "classify", time.perf_counter() - start)
            return CellOutcome(Status.unsat, Provenance.verified, None, "classify", time.perf_counter() - start)
        return decider(query, b * n_epsilons + e)

    verdicts = walk_grid(VerdictGrid(grid), decide)
    log.debug(f"grid done with {verdicts.verifier_calls} verifier calls out of {len(verdicts.call_log)} decided cells")
    return verdicts


def contrast_search(
    net: Network,
    anchor: Image,
    label: int,
    gammas: Sequence[float],
    mu: float,
    budget: Budget,
    *,
    samples: int = 0,
    seed: Optional[SweepSeed] = None,
    seconds: Optional[float] = None,
) -> ContrastResult:
    if not gammas:
        raise ConfigError("gammas must not be empty")
    if not strictly_increasing(gammas) or not (0 < gammas[0] and gammas[-1] <= 1):
        raise ConfigError("gammas must be strictly increasing within (0, 1]")
    _check_label(net, anchor, label)
    seed = seed or SweepSeed(0)
    decider = _CellDecider(budget, samples, seed, Deadline(seconds))
    augmented = contrast_network(net, anchor.pixels, mu)
    result = ContrastResult(gammas, mu)

    def decide(i: int) -> Status:
        query = contrast_query(net, PerturbationSpec(Contrast(gammas[i], mu), anchor, label), augmented)
        return result.record(i, decider(query, CONTRAST_SEED_OFFSET + i))

    search_line(range(len(gammas)), result.is_open, decide)
    return result


@dataclass
class SweepStats:
    total: int = 0
    verified: int = 0
    deduced: int = 0
    falsified: int = 0
    unknown: int = 0
    exhausted: int = 0
    verifier_calls: int = 0
    sat: StatusCounts = field(default_factory=StatusCounts)
    unsat: StatusCounts = field(default_factory=StatusCounts)

    @property
    def deduced_fraction(self) -> float:
        return self.deduced / self.total if self.total else 0.0

    def __add__(self, other: SweepStats) -> SweepStats:
        return SweepStats(
            self.total + other.total,
            self.verified + other.verified,
            self.deduced + other.deduced,
            self.falsified + other.falsified,
            self.unknown + other.unknown,
            self.exhausted + other.exhausted,
            self.verifier_calls + other.verifier_calls,
            self.sat + other.sat,
            self.unsat + other.unsat,
        )

    def __str__(self):
        return (
            f"{self.total} cells: {self.verified} verified ({self.falsified} falsified), "
            f"{self.deduced} deduced ({self.deduced_fraction:.0%}), {self.unknown} unknown"
        )


def stats(verdicts: _Verdicts) -> SweepStats:
    ret = SweepStats(verifier_calls=verdicts.verifier_calls)
    for cell in verdicts.iter_cells():
        ret.total += 1
        if cell.provenance is Provenance.deduced:
            ret.deduced += 1
        elif cell.provenance is not None and cell.provenance.called:
            ret.verified += 1
            if cell.provenance is Provenance.falsified:
                ret.falsified += 1
        if cell.provenance is Provenance.exhausted:
            ret.exhausted += 1
        if cell.status is Status.unknown:
            ret.unknown += 1
        elif cell.status is Status.sat:
            ret.sat.add(cell.provenance)
        else:
            ret.unsat.add(cell.provenance)
    return ret
