from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Mapping, Optional, Tuple

import numpy as np

from .constants import BOUND_SLACK, Phase
from .encoder import Clause, InputBox
from .errors import DimensionMismatch
from .network import AffineBlock, Network

log = logging.getLogger("robustgrid")

Splits = Mapping[int, Phase]


@dataclass(frozen=True, eq=False)
class NeuronBounds:
    """Pre-activation bounds of every ReLU, indexed globally in layer order.

    `feasible` is False when a branching decision contradicts a sound bound; the
    other fields are then only partially filled and must not be used.
    """

    lower: np.ndarray
    upper: np.ndarray
    phases: Tuple[Phase, ...]
    feasible: bool
    # bounds on the input of the output block
    last_lower: np.ndarray
    last_upper: np.ndarray

    def unstable(self) -> List[int]:
        return [i for i, phase in enumerate(self.phases) if phase is Phase.unstable]

    def widest_unstable(self) -> Optional[int]:
        """Unstable neuron with the widest interval; `max` keeps the first, i.e. lowest index, on ties."""
        unstable = self.unstable()
        if not unstable:
            return None
        return max(unstable, key=lambda i: self.upper[i] - self.lower[i])

    def clause_upper(self, net: Network, clause: Clause) -> float:
        """Sound upper bound of ``clause.coeffs @ y`` over everything these bounds admit."""
        block = net.affine_blocks[-1]
        weights = clause.coeffs @ block.weights
        bias = float(clause.coeffs @ block.biases)
        mid = (self.last_lower + self.last_upper) / 2
        rad = (self.last_upper - self.last_lower) / 2
        magnitude = np.maximum(np.abs(self.last_lower), np.abs(self.last_upper))
        slack = BOUND_SLACK * (1.0 + float(np.abs(weights) @ magnitude) + abs(bias))
        return float(weights @ mid) + bias + float(np.abs(weights) @ rad) + slack


def _propagate_block(block: AffineBlock, lower: np.ndarray, upper: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mid = (lower + upper) / 2
    rad = (upper - lower) / 2
    abs_weights = np.abs(block.weights)
    center = block.weights @ mid + block.biases
    spread = abs_weights @ rad
    # outward slack scaled by the magnitudes involved in the block
    slack = BOUND_SLACK * (1.0 + abs_weights @ np.maximum(np.abs(lower), np.abs(upper)) + np.abs(block.biases))
    return center - spread - slack, center + spread + slack


def classify_phase(lower: float, upper: float) -> Phase:
    if upper <= 0:
        return Phase.inactive
    if lower >= 0:
        return Phase.active
    return Phase.unstable


def interval_propagate(net: Network, box: InputBox, splits: Optional[Splits] = None) -> NeuronBounds:
    if box.dim != net.input_dim:
        raise DimensionMismatch(net.input_dim, box.dim, "input box dimension")
    splits = splits or {}
    lower, upper = box.lower, box.upper
    all_lower: List[np.ndarray] = []
    all_upper: List[np.ndarray] = []
    phases: List[Phase] = []
    feasible = True
    for block in net.affine_blocks[:-1]:
        # every block but the last ends in a ReLU, identity layers are folded away
        pre_lower, pre_upper = _propagate_block(block, lower, upper)
        for i in range(block.weights.shape[0]):
            decision = splits.get(block.offset + i)
            if decision is Phase.active:
                if pre_upper[i] < 0:
                    feasible = False
                pre_lower[i] = max(pre_lower[i], 0.0)
            elif decision is Phase.inactive:
                if pre_lower[i] > 0:
                    feasible = False
                pre_upper[i] = min(pre_upper[i], 0.0)
            phases.append(decision or classify_phase(pre_lower[i], pre_upper[i]))
        all_lower.append(pre_lower)
        all_upper.append(pre_upper)
        if not feasible:
            break
        lower, upper = np.maximum(pre_lower, 0.0), np.maximum(pre_upper, 0.0)
    lower_flat = np.concatenate(all_lower) if all_lower else np.zeros(0)
    upper_flat = np.concatenate(all_upper) if all_upper else np.zeros(0)
    return NeuronBounds(lower_flat, upper_flat, tuple(phases), feasible, lower, upper)


def output_bounds(net: Network, bounds: NeuronBounds) -> Tuple[np.ndarray, np.ndarray]:
    return _propagate_block(net.affine_blocks[-1], bounds.last_lower, bounds.last_upper)
