from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np

from .errors import DimensionMismatch, EncodingError, MisclassifiedAnchor
from .ingest import Image
from .network import Network, classify, prepend_layer

log = logging.getLogger("robustgrid")


@dataclass(frozen=True)
class Noise:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise EncodingError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class Brightness:
    beta: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise EncodingError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class NoiseAndBrightness:
    epsilon: float
    beta: float

    def __post_init__(self):
        if not (self.epsilon >= 0 and self.beta >= 0):
            raise EncodingError(f"epsilon and beta must be >= 0, got {self.epsilon}, {self.beta}")


@dataclass(frozen=True)
class Contrast:
    gamma: float
    mu: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise EncodingError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.mu <= 1.0:
            raise EncodingError(f"mu must lie in [0, 1], got {self.mu}")


PerturbationKind = Union[Noise, Brightness, NoiseAndBrightness, Contrast]


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind
    anchor: Image
    true_class: int

    def describe(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in vars(self.kind).items())


def make_perturbation(
    anchor: Image,
    true_class: int,
    *,
    epsilon: Optional[float] = None,
    beta: Optional[float] = None,
    gamma: Optional[float] = None,
    mu: Optional[float] = None,
) -> PerturbationSpec:
    """Pick the perturbation kind from the parameters that were given."""
    if gamma is not None or mu is not None:
        if epsilon:
            raise EncodingError(
                "noise and contrast cannot be combined: a contrast query has a single input c, "
                "so there is no way to also perturb every pixel independently"
            )
        if beta:
            raise EncodingError("brightness and contrast cannot be combined")
        if gamma is None or mu is None:
            raise EncodingError("contrast needs both gamma and mu")
        kind: PerturbationKind = Contrast(gamma, mu)
    elif epsilon is not None and beta is not None:
        kind = NoiseAndBrightness(epsilon, beta)
    elif beta is not None:
        kind = Brightness(beta)
    elif epsilon is not None:
        kind = Noise(epsilon)
    else:
        raise EncodingError("no perturbation parameter given")
    return PerturbationSpec(kind, anchor, true_class)


@dataclass(frozen=True, eq=False)
class InputBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=np.float64).reshape(-1)
        upper = np.array(self.upper, dtype=np.float64).reshape(-1)
        if lower.shape != upper.shape:
            raise DimensionMismatch(lower.shape[0], upper.shape[0], "box upper length")
        if not np.all(lower <= upper):
            raise EncodingError("box lower bounds must not exceed upper bounds")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.lower + (self.upper - self.lower) / 2

    def contains(self, point) -> bool:
        point = np.asarray(point, dtype=np.float64)
        return point.shape == self.lower.shape and bool(np.all((self.lower <= point) & (point <= self.upper)))

    def contains_box(self, other: InputBox) -> bool:
        return bool(np.all(self.lower <= other.lower) and np.all(other.upper <= self.upper))


@dataclass(frozen=True, eq=False)
class Clause:
    """Linear output condition ``coeffs @ y >= threshold``."""

    coeffs: np.ndarray
    threshold: float

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.float64).reshape(-1)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "threshold", float(self.threshold))

    def satisfied(self, outputs: np.ndarray) -> bool:
        return float(self.coeffs @ outputs) >= self.threshold


@dataclass(frozen=True, eq=False)
class OutputProperty:
    """Disjunction of clauses; satisfied when any clause holds.

    Misclassification properties also record `true_class` so they are decided
    by comparing outputs directly.
    """

    clauses: Tuple[Clause, ...]
    true_class: Optional[int] = None
    num_classes: Optional[int] = None

    def holds(self, outputs) -> bool:
        outputs = np.asarray(outputs, dtype=np.float64)
        if self.true_class is not None:
            c = self.true_class
            return any(outputs[j] >= outputs[c] for j in range(outputs.shape[0]) if j != c)
        return any(clause.satisfied(outputs) for clause in self.clauses)

    def holds_batch(self, outputs) -> np.ndarray:
        """Row-wise `holds` over a batch of output vectors."""
        outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
        if self.true_class is not None:
            rivals = np.delete(outputs, self.true_class, axis=1)
            return np.any(rivals >= outputs[:, [self.true_class]], axis=1)
        hits = np.zeros(outputs.shape[0], dtype=bool)
        for clause in self.clauses:
            hits |= outputs @ clause.coeffs >= clause.threshold
        return hits


def misclass_property(true_class: int, k: int) -> OutputProperty:
    if k < 2:
        raise EncodingError(f"a misclassification property needs at least two classes, got {k}")
    if not 0 <= true_class < k:
        raise EncodingError(f"class index {true_class} is out of range for {k} classes")
    clauses = []
    for j in range(k):
        if j == true_class:
            continue
        coeffs = np.zeros(k)
        coeffs[j] = 1.0
        coeffs[true_class] = -1.0
        clauses.append(Clause(coeffs, 0.0))
    return OutputProperty(tuple(clauses), true_class, k)


def reach_at_least(value: float, output: int = 0, k: int = 1) -> OutputProperty:
    """Property "y[output] >= value is reachable"."""
    coeffs = np.zeros(k)
    coeffs[output] = 1.0
    return OutputProperty((Clause(coeffs, value),))


def reach_at_most(value: float, output: int = 0, k: int = 1) -> OutputProperty:
    """Property "y[output] <= value is reachable"."""
    coeffs = np.zeros(k)
    coeffs[output] = -1.0
    return OutputProperty((Clause(coeffs, -value),))


@dataclass(frozen=True, eq=False)
class VerificationQuery:
    network: Network
    input_box: InputBox
    property: OutputProperty
    provenance: Optional[PerturbationSpec] = None
    # perturbed pixels are never clipped to [0, 1]
    clipped: bool = field(default=False)

    def __post_init__(self):
        if self.input_box.dim != self.network.input_dim:
            raise DimensionMismatch(self.network.input_dim, self.input_box.dim, "input box dimension")


def brightness_pixels(pixels, beta: float) -> np.ndarray:
    """Direct brightness shift ``x + b * 1``."""
    return np.asarray(pixels, dtype=np.float64) + beta


def contrast_pixels(pixels, c: float, mu: float) -> np.ndarray:
    """Direct contrast change ``mu * 1 + c * (x - mu * 1)``, in the order the encoding layer computes it."""
    return (np.asarray(pixels, dtype=np.float64) - mu) * c + mu


def _check_anchor(net: Network, spec: PerturbationSpec) -> np.ndarray:
    pixels = spec.anchor.pixels
    if pixels.shape[0] != net.input_dim:
        raise DimensionMismatch(net.input_dim, pixels.shape[0], "anchor pixel count")
    predicted = classify(net, pixels)
    if predicted != spec.true_class:
        raise MisclassifiedAnchor(spec.true_class, predicted)
    return pixels


def _property(net: Network, spec: PerturbationSpec) -> OutputProperty:
    return misclass_property(spec.true_class, net.output_dim)


def noise_query(net: Network, spec: PerturbationSpec) -> VerificationQuery:
    if not isinstance(spec.kind, Noise):
        raise EncodingError(f"noise_query needs a Noise perturbation, got {type(spec.kind).__name__}")
    pixels = _check_anchor(net, spec)
    box = InputBox(pixels - spec.kind.epsilon, pixels + spec.kind.epsilon)
    return VerificationQuery(net, box, _property(net, spec), spec)


@lru_cache(maxsize=16)
def brightness_network(net: Network) -> Network:
    """`net` behind an identity layer ``x_i = z_i + b`` with weights ``[I | 1]`` and zero bias.

    The construction only depends on the input width, so it is shared by every
    anchor and cell evaluated against the same network object.
    """
    n = net.input_dim
    weights = np.hstack([np.eye(n), np.ones((n, 1))])
    return prepend_layer(net, weights, np.zeros(n))


def brightness_query(net: Network, spec: PerturbationSpec) -> VerificationQuery:
    kind = spec.kind
    if isinstance(kind, NoiseAndBrightness):
        epsilon, beta = kind.epsilon, kind.beta
    elif isinstance(kind, Brightness):
        epsilon, beta = 0.0, kind.beta
    elif isinstance(kind, Noise):
        epsilon, beta = kind.epsilon, 0.0
    else:
        raise EncodingError(f"brightness_query cannot encode {type(kind).__name__}")
    pixels = _check_anchor(net, spec)
    lower = np.append(pixels - epsilon, -beta)
    upper = np.append(pixels + epsilon, beta)
    return VerificationQuery(brightness_network(net), InputBox(lower, upper), _property(net, spec), spec)


def contrast_network(net: Network, pixels, mu: float) -> Network:
    """Single-input network ``c -> net((x' - mu) * c + mu)`` for one anchor."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape[0] != net.input_dim:
        raise DimensionMismatch(net.input_dim, pixels.shape[0], "anchor pixel count")
    weights = (pixels - mu).reshape(-1, 1)
    return prepend_layer(net, weights, np.full(net.input_dim, mu))


def contrast_query(
    net: Network, spec: PerturbationSpec, augmented: Optional[Network] = None
) -> VerificationQuery:
    """Encode a contrast perturbation. Pass `augmented` to reuse the anchor's contrast network."""
    if not isinstance(spec.kind, Contrast):
        raise EncodingError(f"contrast_query needs a Contrast perturbation, got {type(spec.kind).__name__}")
    pixels = _check_anchor(net, spec)
    gamma, mu = spec.kind.gamma, spec.kind.mu
    if augmented is None:
        augmented = contrast_network(net, pixels, mu)
    box = InputBox([1.0 - gamma], [1.0 + gamma])
    return VerificationQuery(augmented, box, _property(net, spec), spec)


def encode(net: Network, spec: PerturbationSpec) -> VerificationQuery:
    if isinstance(spec.kind, Noise):
        return noise_query(net, spec)
    if isinstance(spec.kind, Contrast):
        return contrast_query(net, spec)
    return brightness_query(net, spec)


def anchor_point(query: VerificationQuery) -> np.ndarray:
    """The unperturbed input of a query: the anchor itself, with ``b = 0`` or ``c = 1`` for the encodings."""
    spec = query.provenance
    if spec is None:
        return query.input_box.center
    if isinstance(spec.kind, Contrast):
        return np.ones(1)
    if query.network.input_dim == spec.anchor.pixels.shape[0] + 1:
        return np.append(spec.anchor.pixels, 0.0)
    return spec.anchor.pixels.copy()
