# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import Activation, Phase
from .converters import format_decimal, parse_decimal
from .errors import DimensionMismatch, NetworkFormatError
from .helpers import PathLike, atomic_write_json, read_json
from .types import LayerDocument, NetworkDocument

log = logging.getLogger("robustgrid")

SparseRow = Dict[int, Fraction]


def _frozen(array, ndim: int, what: str) -> np.ndarray:
    ret = np.array(array, dtype=np.float64)
    if ret.ndim != ndim:
        raise NetworkFormatError(f"{what} must have {ndim} dimension(s), got {ret.ndim}")
    ret.setflags(write=False)
    return ret


@dataclass(frozen=True, eq=False)
class Layer:
    """One affine map followed by an activation.

    Parameters
    ----------
        weights: np.ndarray
            Matrix of shape (out_dim, in_dim).
        biases: np.ndarray
            Vector of length out_dim.
        activation: Activation
            ReLU for hidden layers, Identity for the output layer and encodings.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: Activation = Activation.relu

    def __post_init__(self):
        weights = _frozen(self.weights, 2, "weights")
        biases = _frozen(self.biases, 1, "biases")
        if weights.shape[0] == 0 or weights.shape[1] == 0:
            raise NetworkFormatError("weight matrix must not be empty")
        if biases.shape[0] != weights.shape[0]:
            raise DimensionMismatch(weights.shape[0], biases.shape[0], "bias length")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(biases))):
            raise NetworkFormatError("weights and biases must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        ret = self.weights @ values + self.biases
        if self.activation is Activation.relu:
            return np.maximum(ret, 0.0)
        return ret


@dataclass(frozen=True, eq=False)
class AffineBlock:
    """Consecutive layers with the identity layers folded into the next affine map.

    Only bound propagation and the exact solver see blocks; `evaluate` always
    runs the layers one by one.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: Activation
    offset: int
    layer: int


@dataclass(frozen=True, eq=False)
class ExactBlock:
    rows: Tuple[SparseRow, ...]
    biases: Tuple[Fraction, ...]
    activation: Activation
    offset: int

    @property
    def out_dim(self) -> int:
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class Network:
    """A feedforward network: hidden ReLU (or encoding identity) layers and an affine output layer."""

    layers: Tuple[Layer, ...]
    class_labels: Optional[Tuple[str, ...]] = field(default=None)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise NetworkFormatError("a network needs at least one layer")
        for i, (prev, layer) in enumerate(zip(layers, layers[1:]), start=2):
            if layer.in_dim != prev.out_dim:
                raise DimensionMismatch(prev.out_dim, layer.in_dim, "weight matrix columns", layer=i)
        if layers[-1].activation is not Activation.identity:
            raise NetworkFormatError("the output layer must be affine only", layer=len(layers))
        object.__setattr__(self, "layers", layers)
        if self.class_labels is not None:
            labels = tuple(str(i) for i in self.class_labels)
            if len(labels) != self.output_dim:
                raise DimensionMismatch(self.output_dim, len(labels), "class_labels length")
            object.__setattr__(self, "class_labels", labels)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> List[int]:
        return [self.input_dim, *(layer.out_dim for layer in self.layers)]

    @property
    def relu_count(self) -> int:
        return sum(layer.out_dim for layer in self.layers if layer.activation is Activation.relu)

    @cached_property
    def affine_blocks(self) -> Tuple[AffineBlock, ...]:
        blocks = []
        weights: Optional[np.ndarray] = None
        biases: Optional[np.ndarray] = None
        offset = 0
        for number, layer in enumerate(self.layers, start=1):
            if weights is None:
                weights, biases = layer.weights, layer.biases
            else:
                # fold the pending identity map into this layer
                weights, biases = layer.weights @ weights, layer.weights @ biases + layer.biases
            if layer.activation is Activation.identity and number < len(self.layers):
                continue
            blocks.append(AffineBlock(weights, biases, layer.activation, offset, number))
            if layer.activation is Activation.relu:
                offset += layer.out_dim
            weights = biases = None
        return tuple(blocks)

    @cached_property
    def exact_blocks(self) -> Tuple[ExactBlock, ...]:
        """`affine_blocks` recomputed over the rationals, so folding adds no rounding."""
        blocks = []
        rows: Optional[List[SparseRow]] = None
        biases: List[Fraction] = []
        offset = 0
        for number, layer in enumerate(self.layers, start=1):
            layer_rows = [
                {j: Fraction(float(w)) for j, w in enumerate(row) if w != 0.0} for row in layer.weights
            ]
            layer_biases = [Fraction(float(b)) for b in layer.biases]
            if rows is None:
                rows, biases = layer_rows, layer_biases
            else:
                rows, biases = compose_rows(layer_rows, layer_biases, rows, biases)
            if layer.activation is Activation.identity and number < len(self.layers):
                continue
            blocks.append(ExactBlock(tuple(rows), tuple(biases), layer.activation, offset))
            if layer.activation is Activation.relu:
                offset += layer.out_dim
            rows = None
        return tuple(blocks)


def compose_rows(
    outer: Sequence[SparseRow],
    outer_bias: Sequence[Fraction],
    inner: Sequence[SparseRow],
    inner_bias: Sequence[Fraction],
) -> Tuple[List[SparseRow], List[Fraction]]:
    """Exact composition ``outer(inner(x))`` of two sparse affine maps."""
    rows: List[SparseRow] = []
    biases: List[Fraction] = []
    for row, bias in zip(outer, outer_bias):
        acc: SparseRow = {}
        for k, w in row.items():
            bias += w * inner_bias[k]
            for j, a in inner[k].items():
                acc[j] = acc.get(j, 0) + w * a
        rows.append({j: v for j, v in acc.items() if v != 0})
        biases.append(bias)
    return rows, biases


def _check_input(net: Network, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] != net.input_dim:
        raise DimensionMismatch(net.input_dim, values.shape[-1] if values.ndim else 0, "input length")
    return values


def evaluate(net: Network, values) -> np.ndarray:
    values = _check_input(net, values)
    for layer in net.layers:
        values = layer.apply(values)
    return values


def evaluate_batch(net: Network, batch) -> np.ndarray:
    """Evaluate every row of `batch`. Results may differ from `evaluate` in the last bit."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise DimensionMismatch(net.input_dim, batch.shape[-1] if batch.ndim else 0, "batch row length")
    for layer in net.layers:
        batch = batch @ layer.weights.T + layer.biases
        if layer.activation is Activation.relu:
            batch = np.maximum(batch, 0.0)
    return batch


def pre_activations(net: Network, values) -> List[np.ndarray]:
    """Pre-activation values of every layer, in layer order."""
    values = _check_input(net, values)
    ret = []
    for layer in net.layers:
        pre = layer.weights @ values + layer.biases
        ret.append(pre)
        values = np.maximum(pre, 0.0) if layer.activation is Activation.relu else pre
    return ret


def activation_pattern(net: Network, values) -> Tuple[Phase, ...]:
    """Phase of every ReLU at `values`; a zero pre-activation counts as active."""
    pattern: List[Phase] = []
    for layer, pre in zip(net.layers, pre_activations(net, values)):
        if layer.activation is Activation.relu:
            pattern.extend(Phase.active if v >= 0 else Phase.inactive for v in pre)
    return tuple(pattern)


def classify(net: Network, values) -> int:
    """Index of the largest output. `np.argmax` keeps the first maximum, so ties go to the lowest index."""
    return int(np.argmax(evaluate(net, values)))


def prepend_layer(
    net: Network, weights, biases, activation: Activation = Activation.identity
) -> Network:
    layer = Layer(weights, biases, activation)
    if layer.out_dim != net.input_dim:
        raise DimensionMismatch(net.input_dim, layer.out_dim, "prepended weight matrix rows")
    return Network((layer, *net.layers), net.class_labels)


def _load_layer(doc: LayerDocument, number: int) -> Layer:
    if not isinstance(doc, dict):
        raise NetworkFormatError("layer must be an object", layer=number)
    try:
        activation = Activation.get_from_name(str(doc["activation"]))
        weights = [
            [parse_decimal(w, what="weight") for w in row] for row in doc["weights"]
        ]
        biases = [parse_decimal(b, what="bias") for b in doc["biases"]]
    except KeyError as exc:
        raise NetworkFormatError(f"missing or invalid field {exc}", layer=number) from exc
    except (TypeError, ValueError) as exc:
        raise NetworkFormatError(str(exc), layer=number) from exc
    if not weights or any(len(row) != len(weights[0]) for row in weights):
        raise NetworkFormatError("weight rows must be non-empty and of equal length", layer=number)
    try:
        return Layer(np.array(weights), np.array(biases), activation)
    except DimensionMismatch as exc:
        raise DimensionMismatch(exc.expected, exc.got, exc.where, layer=number) from exc
    except NetworkFormatError as exc:
        raise NetworkFormatError(str(exc), layer=number) from exc


def load_network(doc: NetworkDocument) -> Network:
    """Build a Network from its JSON document, naming the 1-based layer on any error."""
    if not isinstance(doc, dict) or "layers" not in doc or "input_dim" not in doc:
        raise NetworkFormatError("document needs 'input_dim' and 'layers'")
    input_dim = doc["input_dim"]
    if isinstance(input_dim, bool) or not isinstance(input_dim, int) or input_dim < 1:
        raise NetworkFormatError("input_dim must be a positive integer")
    layers_doc = doc["layers"]
    if not isinstance(layers_doc, list) or not layers_doc:
        raise NetworkFormatError("layers must be a non-empty list")
    layers = []
    expected = input_dim
    for number, layer_doc in enumerate(layers_doc, start=1):
        layer = _load_layer(layer_doc, number)
        if layer.in_dim != expected:
            raise DimensionMismatch(expected, layer.in_dim, "weight matrix columns", layer=number)
        expected = layer.out_dim
        layers.append(layer)
    labels = doc.get("class_labels")
    if labels is not None and not isinstance(labels, list):
        raise NetworkFormatError("class_labels must be a list")
    return Network(tuple(layers), tuple(labels) if labels is not None else None)


def save_network(net: Network) -> NetworkDocument:
    doc: NetworkDocument = {
        "input_dim": net.input_dim,
        "layers": [
            {
                "weights": [[format_decimal(w) for w in row] for row in layer.weights],
                "biases": [format_decimal(b) for b in layer.biases],
                "activation": layer.activation.value,
            }
            for layer in net.layers
        ],
    }
    if net.class_labels is not None:
        doc["class_labels"] = list(net.class_labels)
    return doc


def read_network(path: PathLike) -> Network:
    log.debug(f"loading network from {path}")
    return load_network(read_json(path))


def write_network(net: Network, path: PathLike) -> None:
    atomic_write_json(path, save_network(net))
