import copy

import numpy as np
import pytest
from conftest import TOY_DOCUMENT

from robustgrid.constants import Activation, Phase
from robustgrid.converters import format_decimal
from robustgrid.errors import DimensionMismatch, NetworkFormatError
from robustgrid.network import (
    Layer,
    Network,
    activation_pattern,
    classify,
    evaluate,
    evaluate_batch,
    load_network,
    pre_activations,
    prepend_layer,
    read_network,
    save_network,
    write_network,
)


def _random_document(rng: np.random.Generator) -> dict:
    widths = [int(rng.integers(1, 6)) for _ in range(int(rng.integers(2, 5)))]
    layers = []
    for number, (n_in, n_out) in enumerate(zip(widths, widths[1:]), start=1):
        layers.append(
            {
                "weights": [[format_decimal(w) for w in row] for row in rng.normal(size=(n_out, n_in))],
                "biases": [format_decimal(b) for b in rng.normal(size=n_out)],
                "activation": "identity" if number == len(widths) - 1 else "relu",
            }
        )
    doc = {"input_dim": widths[0], "layers": layers}
    if rng.random() < 0.5:
        doc["class_labels"] = [f"class-{i}" for i in range(widths[-1])]
    return doc


def _scores_network(scores) -> Network:
    """One-input network whose outputs are `scores` whatever the input."""
    return Network((Layer(np.zeros((len(scores), 1)), np.array(scores), Activation.identity),))


class TestLoad:
    def test_toy_document(self, toy_net):
        assert toy_net.widths == [2, 2, 1, 1]
        assert toy_net.relu_count == 3
        assert toy_net.layers[-1].activation is Activation.identity

    def test_dimension_mismatch_names_layer(self):
        doc = {
            "input_dim": 2,
            "layers": [
                {"weights": [["1", "0"], ["0", "1"], ["1", "1"]], "biases": ["0", "0", "0"], "activation": "relu"},
                {"weights": [["1", "0"], ["0", "1"]], "biases": ["0", "0"], "activation": "identity"},
            ],
        }
        with pytest.raises(DimensionMismatch) as exc:
            load_network(doc)
        assert exc.value.layer == 2
        assert "layer 2" in str(exc.value)

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            doc = _random_document(rng)
            assert save_network(load_network(copy.deepcopy(doc))) == doc

    def test_plain_numbers_accepted(self):
        doc = copy.deepcopy(TOY_DOCUMENT)
        doc["layers"][2]["weights"] = [[0.5]]
        assert evaluate(load_network(doc), [2.0, -1.0])[0] == 2.0

    @pytest.mark.parametrize("activation", ["sigmoid", "tanh", "softmax"])
    def test_other_activations_rejected(self, activation):
        doc = copy.deepcopy(TOY_DOCUMENT)
        doc["layers"][0]["activation"] = activation
        with pytest.raises(NetworkFormatError) as exc:
            load_network(doc)
        assert exc.value.layer == 1

    def test_relu_output_layer_rejected(self):
        doc = copy.deepcopy(TOY_DOCUMENT)
        doc["layers"][2]["activation"] = "relu"
        with pytest.raises(NetworkFormatError):
            load_network(doc)

    def test_bias_length_names_layer(self):
        doc = copy.deepcopy(TOY_DOCUMENT)
        doc["layers"][1]["biases"] = ["0.0", "1.0"]
        with pytest.raises(DimensionMismatch) as exc:
            load_network(doc)
        assert exc.value.layer == 2

    @pytest.mark.parametrize("value", ["nan", "1e400", "abc", True])
    def test_bad_numbers_rejected(self, value):
        doc = copy.deepcopy(TOY_DOCUMENT)
        doc["layers"][0]["biases"][0] = value
        with pytest.raises(NetworkFormatError) as exc:
            load_network(doc)
        assert exc.value.layer == 1

    def test_missing_fields(self):
        with pytest.raises(NetworkFormatError):
            load_network({"layers": []})
        with pytest.raises(NetworkFormatError):
            load_network({"input_dim": 2, "layers": [{"weights": [["1", "1"]]}]})

    def test_file_round_trip(self, tmp_path, toy_net):
        path = tmp_path / "toy.json"
        write_network(toy_net, path)
        assert save_network(read_network(path)) == save_network(toy_net)

    def test_arrays_are_read_only(self, toy_net):
        with pytest.raises(ValueError):
            toy_net.layers[0].weights[0, 0] = 3.0


class TestEvaluate:
    def test_toy_output(self, toy_net):
        assert evaluate(toy_net, [2.0, -1.0]).tolist() == [2.0]
        hidden, second, out = pre_activations(toy_net, [2.0, -1.0])
        assert hidden.tolist() == [4.0, -2.0]
        assert second.tolist() == [4.0]
        assert out.tolist() == [2.0]

    def test_zero_network(self, make_network):
        net = make_network(0, [4, 3, 2])
        zero = Network(
            tuple(
                Layer(np.zeros_like(layer.weights), np.zeros_like(layer.biases), layer.activation)
                for layer in net.layers
            )
        )
        rng = np.random.default_rng(1)
        for _ in range(10):
            assert not np.any(evaluate(zero, rng.normal(size=4)))

    def test_matches_per_neuron_loop(self, make_network):
        net = make_network(3, [5, 4, 4, 3], dyadic=True)
        rng = np.random.default_rng(4)
        for _ in range(1000):
            x = rng.integers(-64, 65, size=5) / 64
            values = list(x)
            for layer in net.layers:
                nxt = []
                for j in range(layer.out_dim):
                    total = layer.biases[j]
                    for i, v in enumerate(values):
                        total += layer.weights[j, i] * v
                    nxt.append(max(total, 0.0) if layer.activation is Activation.relu else total)
                values = nxt
            assert evaluate(net, x).tolist() == values

    def test_length_mismatch(self, toy_net):
        with pytest.raises(DimensionMismatch):
            evaluate(toy_net, [1.0, 2.0, 3.0])

    def test_batch_close_to_single(self, make_network):
        net = make_network(5, [6, 8, 3])
        batch = np.random.default_rng(6).normal(size=(50, 6))
        expected = np.array([evaluate(net, row) for row in batch])
        np.testing.assert_allclose(evaluate_batch(net, batch), expected, rtol=0, atol=1e-12)

    def test_piecewise_linear_on_shared_pattern(self, make_network):
        net = make_network(7, [3, 6, 6, 2])
        rng = np.random.default_rng(8)
        checked = 0
        while checked < 50:
            x = rng.normal(size=3)
            y = x + rng.normal(scale=1e-3, size=3)
            if activation_pattern(net, x) != activation_pattern(net, y):
                continue
            mid = evaluate(net, (x + y) / 2)
            np.testing.assert_allclose(mid, (evaluate(net, x) + evaluate(net, y)) / 2, rtol=0, atol=1e-9)
            checked += 1

    def test_activation_pattern(self, toy_net):
        assert activation_pattern(toy_net, [2.0, -1.0]) == (Phase.active, Phase.inactive, Phase.active)


class TestClassify:
    def test_unique_argmax(self):
        assert classify(_scores_network([0.1, 0.9, 0.3]), [0.0]) == 1

    def test_tie_goes_to_lowest_index(self):
        assert classify(_scores_network([0.5, 0.5]), [0.0]) == 0

    def test_single_output(self, toy_net):
        rng = np.random.default_rng(9)
        for _ in range(20):
            assert classify(toy_net, rng.normal(size=2)) == 0

    def test_invariant_under_common_output_shift(self, make_network):
        net = make_network(10, [4, 5, 3], dyadic=True)
        out = net.layers[-1]
        shifted = Network((*net.layers[:-1], Layer(out.weights, out.biases + 0.25, out.activation)))
        rng = np.random.default_rng(11)
        for _ in range(200):
            x = rng.integers(-64, 65, size=4) / 64
            assert classify(net, x) == classify(shifted, x)


class TestPrepend:
    def test_identity_prepend(self, make_network):
        net = make_network(12, [3, 4, 2])
        new = prepend_layer(net, np.eye(3), np.zeros(3))
        rng = np.random.default_rng(13)
        for _ in range(50):
            x = rng.normal(size=3)
            assert evaluate(new, x).tolist() == evaluate(net, x).tolist()

    def test_composition_law(self, make_network):
        rng = np.random.default_rng(14)
        for seed in range(100):
            net = make_network(seed, [3, 5, 2])
            n_in = int(rng.integers(1, 5))
            weights, biases = rng.normal(size=(3, n_in)), rng.normal(size=3)
            new = prepend_layer(net, weights, biases)
            assert new.input_dim == n_in
            z = rng.normal(size=n_in)
            np.testing.assert_allclose(evaluate(new, z), evaluate(net, weights @ z + biases), rtol=0, atol=1e-12)

    def test_row_count_must_match(self, toy_net):
        with pytest.raises(DimensionMismatch):
            prepend_layer(toy_net, np.ones((3, 1)), np.zeros(3))

    def test_identity_layers_folded_into_blocks(self, make_network):
        net = make_network(15, [4, 3, 3, 2])
        new = prepend_layer(net, np.hstack([np.eye(4), np.ones((4, 1))]), np.zeros(4))
        assert len(new.affine_blocks) == len(net.affine_blocks) == 3
        assert new.affine_blocks[0].weights.shape == (3, 5)
        assert [b.offset for b in new.affine_blocks] == [0, 3, 6]
        assert len(new.exact_blocks) == 3
