from typing import Optional, Sequence

import numpy as np
import pytest

from robustgrid.constants import Activation
from robustgrid.helpers import bundled_data_path
from robustgrid.ingest import synth_dataset
from robustgrid.network import Layer, Network, load_network, read_network

# Four layer toy network with every bias at zero: two ReLUs, one ReLU, one output.
TOY_DOCUMENT = {
    "input_dim": 2,
    "layers": [
        {"weights": [["1.5", "-1.0"], ["0.0", "2.0"]], "biases": ["0.0", "0.0"], "activation": "relu"},
        {"weights": [["1.0", "-1.0"]], "biases": ["0.0"], "activation": "relu"},
        {"weights": [["0.5"]], "biases": ["0.0"], "activation": "identity"},
    ],
}


def build_network(rng: np.random.Generator, widths: Sequence[int], dyadic: bool = False) -> Network:
    """Random network with ReLU hidden layers.

    Dyadic networks use multiples of 1/8 in [-1, 1], so sums of their products
    with dyadic inputs are exact whatever the summation order.
    """
    layers = []
    for number, (n_in, n_out) in enumerate(zip(widths, widths[1:]), start=1):
        if dyadic:
            weights = rng.integers(-8, 9, size=(n_out, n_in)) / 8
            biases = rng.integers(-8, 9, size=n_out) / 8
        else:
            weights = rng.normal(size=(n_out, n_in))
            biases = rng.normal(scale=0.5, size=n_out)
        activation = Activation.identity if number == len(widths) - 1 else Activation.relu
        layers.append(Layer(weights, biases, activation))
    return Network(tuple(layers))


@pytest.fixture
def toy_net() -> Network:
    return load_network(TOY_DOCUMENT)


@pytest.fixture
def make_network():
    """Factory fixture: ``make_network(seed, widths, dyadic=False)``."""

    def factory(seed: int, widths: Sequence[int], dyadic: bool = False) -> Network:
        return build_network(np.random.default_rng(seed), widths, dyadic)

    return factory


@pytest.fixture
def relu_net():
    """``y = ReLU(a * x + b)`` followed by an identity output."""

    def factory(a: float = 1.0, b: float = 0.0, width: Optional[int] = None) -> Network:
        width = width or 1
        return Network(
            (
                Layer(np.full((width, 1), a), np.full(width, b), Activation.relu),
                Layer(np.ones((1, width)), np.zeros(1), Activation.identity),
            )
        )

    return factory


@pytest.fixture(scope="session")
def quadrant_net() -> Network:
    return read_network(bundled_data_path() / "quadrant-net.json")


@pytest.fixture(scope="session")
def anchors():
    """Held-out synthetic anchors the bundled network was built for."""
    return synth_dataset(8, 8, 8, 4)
