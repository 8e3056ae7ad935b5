from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .bounds import NeuronBounds, interval_propagate
from .constants import ORACLE_RELU_CAP, WITNESS_MARGIN, WITNESS_NUDGE, Phase, Status, UnknownReason
from .encoder import Clause, InputBox, OutputProperty, VerificationQuery
from .errors import ConfigError, DimensionMismatch, OracleCapExceeded, VerifierError
from .exact import ExactSimplex
from .network import Network, SparseRow, compose_rows, evaluate

log = logging.getLogger("robustgrid")

Pattern = Union[Sequence[Phase], Mapping[int, Phase]]


@dataclass(frozen=True)
class Budget:
    """Limits for a single query: wall clock seconds and explored branch nodes."""

    seconds: float = 30.0
    branches: int = 20000

    def __post_init__(self):
        if not (self.seconds > 0 and self.branches > 0):
            raise ConfigError(f"budget limits must be positive, got {self.seconds}s / {self.branches} branches")

    @classmethod
    def from_document(cls, doc: Mapping) -> Budget:
        return cls(seconds=float(doc["seconds"]), branches=int(doc["branches"]))

    def to_document(self) -> dict:
        return {"seconds": self.seconds, "branches": self.branches}


@dataclass
class VerifierStats:
    branches: int = 0
    leaf_checks: int = 0
    wall_time: float = 0.0


@dataclass(frozen=True, eq=False)
class Verdict:
    status: Status
    witness: Optional[np.ndarray] = None
    stats: VerifierStats = field(default_factory=VerifierStats)
    reason: Optional[UnknownReason] = None
    budget: Optional[Budget] = None

    def __str__(self):
        extra = f" ({self.reason})" if self.reason else ""
        return (
            f"{self.status}{extra} after {self.stats.branches} branches, "
            f"{self.stats.leaf_checks} leaf checks, {self.stats.wall_time:.3f}s"
        )


def _full_pattern(net: Network, pattern: Pattern) -> Tuple[Phase, ...]:
    if isinstance(pattern, Mapping):
        pattern = [pattern.get(i, Phase.unstable) for i in range(net.relu_count)]
    pattern = tuple(pattern)
    if len(pattern) != net.relu_count or any(p is Phase.unstable for p in pattern):
        raise ValueError(f"a leaf needs a fixed phase for each of the {net.relu_count} ReLUs")
    return pattern


def _to_fraction(values) -> List[Fraction]:
    return [Fraction(float(v)) for v in values]


def _leaf_system(
    net: Network, box: InputBox, pattern: Tuple[Phase, ...]
) -> Tuple[ExactSimplex, List[SparseRow], List[Fraction]]:
    """Solver holding the box and every sign constraint, plus the exact output map of the pattern."""
    solver = ExactSimplex(_to_fraction(box.lower), _to_fraction(box.upper))
    rows: Optional[List[SparseRow]] = None
    biases: List[Fraction] = []
    blocks = net.exact_blocks
    for block in blocks[:-1]:
        if rows is None:
            pre_rows, pre_biases = list(block.rows), list(block.biases)
        else:
            pre_rows, pre_biases = compose_rows(block.rows, block.biases, rows, biases)
        rows, biases = [], []
        for i, (row, bias) in enumerate(zip(pre_rows, pre_biases)):
            slack = solver.add_row(row)
            if pattern[block.offset + i] is Phase.active:
                solver.set_bounds(slack, lower=-bias)
                rows.append(row)
                biases.append(bias)
            else:
                solver.set_bounds(slack, upper=-bias)
                rows.append({})
                biases.append(Fraction(0))
    last = blocks[-1]
    if rows is None:
        return solver, list(last.rows), list(last.biases)
    out_rows, out_biases = compose_rows(last.rows, last.biases, rows, biases)
    return solver, out_rows, out_biases


def _clause_row(clause: Clause, rows: List[SparseRow], biases: List[Fraction]) -> Tuple[SparseRow, Fraction]:
    """``clause.coeffs @ y - threshold`` as a row over the inputs and a constant."""
    acc: SparseRow = {}
    const = -Fraction(clause.threshold)
    for k, c in enumerate(clause.coeffs):
        if c == 0:
            continue
        c = Fraction(float(c))
        const += c * biases[k]
        for j, a in rows[k].items():
            acc[j] = acc.get(j, 0) + c * a
    return acc, const


def solve_leaf(
    net: Network, box: InputBox, pattern: Pattern, clauses: Sequence[Clause]
) -> Optional[List[Fraction]]:
    """Exact rational point of the leaf satisfying one of `clauses`, or None.

    Each clause is first decided at margin zero; a feasible clause is then re-solved
    with a small margin so the point survives rounding to floating point.
    """
    if box.dim != net.input_dim:
        raise DimensionMismatch(net.input_dim, box.dim, "input box dimension")
    solver, rows, biases = _leaf_system(net, box, _full_pattern(net, pattern))
    if not solver.check():
        return None
    for clause in clauses:
        row, const = _clause_row(clause, rows, biases)
        slack = solver.add_row(row)
        solver.set_bounds(slack, lower=-const)
        if not solver.check():
            solver.set_bounds(slack)
            continue
        point = solver.point()
        solver.set_bounds(slack, lower=-const + Fraction(WITNESS_MARGIN))
        if solver.check():
            point = solver.point()
        return point
    return None


def leaf_feasible(net: Network, box: InputBox, pattern: Pattern, prop: OutputProperty) -> Optional[np.ndarray]:
    point = solve_leaf(net, box, pattern, prop.clauses)
    if point is None:
        return None
    return np.array([float(v) for v in point])


def validate_witness(query: VerificationQuery, witness) -> bool:
    witness = np.asarray(witness, dtype=np.float64)
    if witness.ndim != 1 or witness.shape[0] != query.network.input_dim:
        raise DimensionMismatch(query.network.input_dim, witness.shape[-1] if witness.ndim else 0, "witness length")
    if not query.input_box.contains(witness):
        return False
    return query.property.holds(evaluate(query.network, witness))


def repair_witness(query: VerificationQuery, witness: np.ndarray) -> Optional[np.ndarray]:
    """Return `witness` if valid, else a copy nudged toward the box center if that is valid."""
    if validate_witness(query, witness):
        return witness
    step = np.clip(query.input_box.center - witness, -WITNESS_NUDGE, WITNESS_NUDGE)
    nudged = np.clip(witness + step, query.input_box.lower, query.input_box.upper)
    if validate_witness(query, nudged):
        log.debug("witness repaired by nudging toward the box center")
        return nudged
    return None


def _open_clauses(query: VerificationQuery, bounds: NeuronBounds) -> List[Clause]:
    return [c for c in query.property.clauses if bounds.clause_upper(query.network, c) >= c.threshold]


def verify(query: VerificationQuery, budget: Budget) -> Verdict:
    """
    Decide whether any point of the query's box satisfies its output property.

    Depth-first branch and bound over ReLU phases. Every node propagates interval
    bounds under its branching decisions and is pruned once no clause can reach
    its threshold. Otherwise the unstable neuron with the widest interval is split,
    the active side explored first. Nodes without unstable neurons are decided
    exactly by `solve_leaf`.
    """
    stats = VerifierStats()
    start = time.perf_counter()

    def finish(status: Status, witness=None, reason: Optional[UnknownReason] = None) -> Verdict:
        stats.wall_time = time.perf_counter() - start
        verdict = Verdict(status, witness, stats, reason, budget if reason in _BUDGET_REASONS else None)
        log.debug(f"verify: {verdict}")
        return verdict

    net = query.network
    stack: List[Dict[int, Phase]] = [{}]
    try:
        while stack:
            if time.perf_counter() - start >= budget.seconds:
                return finish(Status.unknown, reason=UnknownReason.time)
            if stats.branches >= budget.branches:
                return finish(Status.unknown, reason=UnknownReason.branches)
            splits = stack.pop()
            stats.branches += 1
            bounds = interval_propagate(net, query.input_box, splits)
            if not bounds.feasible:
                continue
            clauses = _open_clauses(query, bounds)
            if not clauses:
                continue
            neuron = bounds.widest_unstable()
            if neuron is not None:
                stack.append({**splits, neuron: Phase.inactive})
                stack.append({**splits, neuron: Phase.active})
                continue
            stats.leaf_checks += 1
            point = solve_leaf(net, query.input_box, bounds.phases, clauses)
            if point is None:
                continue
            witness = repair_witness(query, np.array([float(v) for v in point]))
            if witness is None:
                log.warning("exact leaf point did not survive rounding to floating point")
                return finish(Status.unknown, reason=UnknownReason.witness)
            return finish(Status.sat, witness)
    except ArithmeticError as exc:
        log.warning("numeric failure inside verify", exc_info=exc)
        return finish(Status.unknown, reason=UnknownReason.numeric)
    return finish(Status.unsat)


_BUDGET_REASONS = (UnknownReason.time, UnknownReason.branches)


def enumerate_oracle(query: VerificationQuery) -> Verdict:
    """Decide the query by trying every phase pattern.

    Never returns UNKNOWN. A feasible leaf whose point does not survive rounding
    to floating point raises `VerifierError` instead of yielding an invalid witness.
    """
    net = query.network
    relus = net.relu_count
    if relus > ORACLE_RELU_CAP:
        raise OracleCapExceeded(relus, ORACLE_RELU_CAP)
    stats = VerifierStats()
    start = time.perf_counter()
    for pattern in itertools.product((Phase.active, Phase.inactive), repeat=relus):
        stats.leaf_checks += 1
        point = solve_leaf(net, query.input_box, pattern, query.property.clauses)
        if point is not None:
            witness = repair_witness(query, np.array([float(v) for v in point]))
            stats.wall_time = time.perf_counter() - start
            if witness is None:
                raise VerifierError("oracle leaf point is not a valid float witness")
            return Verdict(Status.sat, witness, stats)
    stats.wall_time = time.perf_counter() - start
    return Verdict(Status.unsat, None, stats)

