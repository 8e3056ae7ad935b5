from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import CORNER_BITS
from .encoder import InputBox, VerificationQuery
from .network import evaluate_batch
from .verifier import validate_witness

log = logging.getLogger("robustgrid")

# candidates are evaluated this many at a time
BATCH_SIZE = 1024


@dataclass(frozen=True, eq=False)
class AttackReport:
    tried: int
    found: Optional[np.ndarray] = None

    def __str__(self):
        return f"{'hit' if self.found is not None else 'no hit'} after {self.tried} samples"


def corner_count(box: InputBox) -> int:
    return 1 << min(box.dim, CORNER_BITS)


def corners(box: InputBox, start: int, stop: int) -> np.ndarray:
    """Corners `start` to `stop`: bit i of the corner index picks the upper bound of dimension i.

    Only the lowest CORNER_BITS dimensions are enumerated, the rest stay at the box center.
    """
    bits = min(box.dim, CORNER_BITS)
    index = np.arange(start, stop)[:, None]
    choose_upper = ((index >> np.arange(bits)[None, :]) & 1).astype(bool)
    ret = np.tile(box.center, (stop - start, 1))
    ret[:, :bits] = np.where(choose_upper, box.upper[:bits], box.lower[:bits])
    return ret


def candidates(box: InputBox, samples: int, rng: np.random.Generator):
    """Yield batches of candidate points: corners, then the center, then uniform samples."""
    remaining = samples
    total_corners = min(corner_count(box), remaining)
    for start in range(0, total_corners, BATCH_SIZE):
        stop = min(start + BATCH_SIZE, total_corners)
        yield corners(box, start, stop)
    remaining -= total_corners
    if remaining <= 0:
        return
    yield box.center[None, :]
    remaining -= 1
    while remaining > 0:
        size = min(BATCH_SIZE, remaining)
        yield rng.uniform(box.lower, box.upper, size=(size, box.dim))
        remaining -= size


def sample_attack(query: VerificationQuery, samples: int, seed: int) -> AttackReport:
    """Look for a point of the box that satisfies the property by plain sampling.

    Candidates are screened in batches and every hit is checked again with
    `validate_witness`, so a reported point is always a valid witness.
    """
    if samples < 1:
        raise ValueError("sample_attack needs at least one sample")
    rng = np.random.default_rng(seed)
    box = query.input_box
    tried = 0
    for batch in candidates(box, samples, rng):
        hits = query.property.holds_batch(evaluate_batch(query.network, batch))
        for row in np.flatnonzero(hits):
            if validate_witness(query, batch[row]):
                log.debug(f"falsifier hit after {tried + row + 1} samples")
                return AttackReport(tried + int(row) + 1, batch[row].copy())
        tried += len(batch)
    return AttackReport(tried)
