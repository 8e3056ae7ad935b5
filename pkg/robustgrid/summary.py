from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Hashable, List, MutableMapping, Optional

from .constants import Provenance, Status

log = logging.getLogger("robustgrid")


@dataclass
class StatusCounts:
    """How many cells ended with one status, split by how they got it.

    `verified` includes falsified cells, `falsified` counts them separately.
    """

    overall: int = 0
    deduced: int = 0
    verified: int = 0
    falsified: int = 0

    def add(self, provenance: Optional[Provenance]) -> None:
        self.overall += 1
        if provenance is Provenance.deduced:
            self.deduced += 1
        elif provenance is not None and provenance.called:
            self.verified += 1
            if provenance is Provenance.falsified:
                self.falsified += 1

    def __add__(self, other: StatusCounts) -> StatusCounts:
        return StatusCounts(
            self.overall + other.overall,
            self.deduced + other.deduced,
            self.verified + other.verified,
            self.falsified + other.falsified,
        )

    def __str__(self):
        return "Overall: {overall}\nDeduced: {deduced}\nVerified: {verified} ({falsified} falsified)".format(
            overall=self.overall, deduced=self.deduced, verified=self.verified, falsified=self.falsified
        )


@dataclass
class ParameterCounts:
    sat: StatusCounts
    unsat: StatusCounts
    unknown: int

    @property
    def total(self) -> int:
        return self.sat.overall + self.unsat.overall + self.unknown


class SweepTally:
    """Object to accumulate verdicts and verifier times per sweep parameter."""

    def __init__(self):
        self._sat: MutableMapping[Hashable, StatusCounts] = {}
        self._unsat: MutableMapping[Hashable, StatusCounts] = {}
        self._unknown: MutableMapping[Hashable, int] = {}
        self._times: MutableMapping[Hashable, List[float]] = {}

    def add_result(self, key: Hashable, status: Status, provenance: Optional[Provenance]):
        """Add one cell to this object.
        :key: Parameter value (or tuple of values) of the cell.
        :status: Final status of the cell.
        :provenance: How the cell was resolved.
        """
        self._sat.setdefault(key, StatusCounts())
        self._unsat.setdefault(key, StatusCounts())
        self._unknown.setdefault(key, 0)
        if status is Status.sat:
            self._sat[key].add(provenance)
        elif status is Status.unsat:
            self._unsat[key].add(provenance)
        else:
            self._unknown[key] += 1

    def add_time(self, key: Hashable, wall_time: float):
        self._times.setdefault(key, []).append(wall_time)

    def get_counts(self, key: Hashable) -> ParameterCounts:
        return ParameterCounts(
            self._sat.get(key, StatusCounts()),
            self._unsat.get(key, StatusCounts()),
            self._unknown.get(key, 0),
        )

    def mean_time(self, key: Hashable) -> Optional[float]:
        times = self._times.get(key)
        if not times:
            return None
        return sum(times) / len(times)
