import numpy as np

from robustgrid.bounds import classify_phase, interval_propagate, output_bounds
from robustgrid.constants import Activation, Phase
from robustgrid.encoder import Clause, InputBox, NoiseAndBrightness, PerturbationSpec, brightness_query
from robustgrid.network import evaluate_batch


def _relu_pre_activations(net, points):
    """Pre-activations of every ReLU for each row of `points`, in global neuron order."""
    columns = []
    values = points
    for layer in net.layers:
        pre = values @ layer.weights.T + layer.biases
        if layer.activation is Activation.relu:
            columns.append(pre)
            values = np.maximum(pre, 0.0)
        else:
            values = pre
    return np.hstack(columns)


class TestIntervals:
    def test_single_relu(self, relu_net):
        bounds = interval_propagate(relu_net(), InputBox([-1.0], [2.0]))
        assert bounds.feasible
        assert bounds.phases == (Phase.unstable,)
        assert -1.0 - 1e-8 < bounds.lower[0] <= -1.0
        assert 2.0 <= bounds.upper[0] < 2.0 + 1e-8
        assert bounds.widest_unstable() == 0

    def test_point_box(self, relu_net):
        bounds = interval_propagate(relu_net(b=-0.25), InputBox([0.5], [0.5]))
        assert bounds.phases == (Phase.active,)
        assert bounds.upper[0] - bounds.lower[0] < 1e-8
        assert bounds.widest_unstable() is None

    def test_inactive_neuron(self, relu_net):
        assert interval_propagate(relu_net(a=-1.0), InputBox([1.0], [2.0])).phases == (Phase.inactive,)

    def test_samples_stay_inside(self, make_network):
        rng = np.random.default_rng(1)
        for seed in range(30):
            net = make_network(seed, [4, 6, 5, 3])
            center = rng.normal(size=4)
            radius = rng.uniform(0.0, 0.5, size=4)
            box = InputBox(center - radius, center + radius)
            bounds = interval_propagate(net, box)
            points = rng.uniform(box.lower, box.upper, size=(200, 4))
            pre = _relu_pre_activations(net, points)
            assert np.all(pre >= bounds.lower) and np.all(pre <= bounds.upper)
            out_lower, out_upper = output_bounds(net, bounds)
            outputs = evaluate_batch(net, points)
            assert np.all(outputs >= out_lower) and np.all(outputs <= out_upper)

    def test_clause_upper_is_sound(self, make_network):
        rng = np.random.default_rng(2)
        for seed in range(30):
            net = make_network(seed, [3, 5, 3])
            box = InputBox(-np.ones(3), np.ones(3))
            bounds = interval_propagate(net, box)
            clause = Clause(rng.normal(size=3), 0.0)
            outputs = evaluate_batch(net, rng.uniform(-1.0, 1.0, size=(500, 3)))
            assert np.all(outputs @ clause.coeffs <= bounds.clause_upper(net, clause))


class TestSplits:
    def test_contradicting_split_is_infeasible(self, relu_net):
        bounds = interval_propagate(relu_net(), InputBox([1.0], [2.0]), {0: Phase.inactive})
        assert not bounds.feasible

    def test_active_split_clamps_lower(self, relu_net):
        bounds = interval_propagate(relu_net(), InputBox([-1.0], [2.0]), {0: Phase.active})
        assert bounds.feasible
        assert bounds.lower[0] == 0.0
        assert bounds.phases == (Phase.active,)

    def test_inactive_split_clamps_upper(self, relu_net):
        bounds = interval_propagate(relu_net(), InputBox([-1.0], [2.0]), {0: Phase.inactive})
        assert bounds.upper[0] == 0.0
        assert bounds.last_upper.tolist() == [0.0]

    def test_ties_pick_lowest_index(self, relu_net):
        bounds = interval_propagate(relu_net(width=3), InputBox([-1.0], [1.0]))
        assert bounds.unstable() == [0, 1, 2]
        assert bounds.widest_unstable() == 0

    def test_widest_is_chosen(self, make_network):
        bounds = interval_propagate(make_network(3, [2, 6, 2]), InputBox([-3.0, -3.0], [3.0, 3.0]))
        widths = {i: bounds.upper[i] - bounds.lower[i] for i in bounds.unstable()}
        assert widths[bounds.widest_unstable()] == max(widths.values())


class TestPhases:
    def test_classify_phase(self):
        assert classify_phase(-1.0, 0.0) is Phase.inactive
        assert classify_phase(0.0, 1.0) is Phase.active
        assert classify_phase(-1.0, 1.0) is Phase.unstable

    def test_zero_noise_brightness_is_fixed(self, quadrant_net, anchors):
        for img, label in anchors:
            query = brightness_query(quadrant_net, PerturbationSpec(NoiseAndBrightness(0.0, 0.5), img, label))
            bounds = interval_propagate(query.network, query.input_box)
            assert bounds.unstable() == []
