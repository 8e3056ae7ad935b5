import numpy as np
import pytest

from robustgrid.encoder import (
    Brightness,
    Contrast,
    InputBox,
    Noise,
    NoiseAndBrightness,
    PerturbationSpec,
    VerificationQuery,
    anchor_point,
    brightness_network,
    brightness_pixels,
    brightness_query,
    contrast_network,
    contrast_pixels,
    contrast_query,
    encode,
    make_perturbation,
    misclass_property,
    noise_query,
    reach_at_least,
    reach_at_most,
)
from robustgrid.errors import DimensionMismatch, EncodingError, MisclassifiedAnchor
from robustgrid.ingest import Image
from robustgrid.network import evaluate


@pytest.fixture
def anchor(anchors):
    return anchors[0]


class TestNoise:
    def test_box(self, quadrant_net, anchor):
        img, label = anchor
        query = noise_query(quadrant_net, PerturbationSpec(Noise(0.05), img, label))
        assert query.input_box.dim == 64
        np.testing.assert_array_equal(query.input_box.lower, img.pixels - 0.05)
        np.testing.assert_array_equal(query.input_box.upper, img.pixels + 0.05)
        assert query.network is quadrant_net
        assert query.clipped is False

    def test_zero_epsilon_is_a_point(self, quadrant_net, anchor):
        img, label = anchor
        box = noise_query(quadrant_net, PerturbationSpec(Noise(0.0), img, label)).input_box
        np.testing.assert_array_equal(box.lower, box.upper)
        np.testing.assert_array_equal(box.lower, img.pixels)

    def test_misclassified_anchor(self, quadrant_net, anchor):
        img, label = anchor
        with pytest.raises(MisclassifiedAnchor) as exc:
            noise_query(quadrant_net, PerturbationSpec(Noise(0.1), img, (label + 1) % 4))
        assert exc.value.got == label

    def test_wrong_kind(self, quadrant_net, anchor):
        img, label = anchor
        with pytest.raises(EncodingError):
            noise_query(quadrant_net, PerturbationSpec(Brightness(0.1), img, label))

    def test_pixel_count_mismatch(self, quadrant_net):
        with pytest.raises(DimensionMismatch):
            noise_query(quadrant_net, PerturbationSpec(Noise(0.1), Image(4, 4, np.zeros(16)), 0))

    def test_boxes_nest(self, quadrant_net, anchor):
        img, label = anchor
        boxes = [noise_query(quadrant_net, PerturbationSpec(Noise(e), img, label)).input_box for e in (0.0, 0.1, 0.2)]
        assert boxes[2].contains_box(boxes[1]) and boxes[1].contains_box(boxes[0])
        assert not boxes[0].contains_box(boxes[1])


class TestBrightness:
    def test_query_shape(self, quadrant_net, anchor):
        img, label = anchor
        query = brightness_query(quadrant_net, PerturbationSpec(NoiseAndBrightness(0.05, 0.2), img, label))
        assert query.network.input_dim == 65
        assert query.input_box.lower[-1] == -0.2 and query.input_box.upper[-1] == 0.2
        np.testing.assert_array_equal(query.input_box.upper[:-1], img.pixels + 0.05)

    def test_network_is_shared(self, quadrant_net):
        assert brightness_network(quadrant_net) is brightness_network(quadrant_net)

    def test_small_example_is_exact(self, make_network):
        net = make_network(1, [2, 3, 2])
        pixels = np.array([0.2, 0.7])
        expected = evaluate(net, brightness_pixels(pixels, 0.1))
        assert evaluate(brightness_network(net), [0.2, 0.7, 0.1]).tolist() == expected.tolist()

    def test_random_inputs_are_exact(self, make_network):
        rng = np.random.default_rng(2)
        for seed in range(20):
            net = make_network(seed, [6, 5, 3])
            for _ in range(50):
                pixels, b = rng.uniform(size=6), rng.uniform(-0.5, 0.5)
                z = np.append(pixels, b)
                assert evaluate(brightness_network(net), z).tolist() == evaluate(net, pixels + b).tolist()

    def test_brightness_only(self, quadrant_net, anchor):
        img, label = anchor
        box = brightness_query(quadrant_net, PerturbationSpec(Brightness(0.3), img, label)).input_box
        np.testing.assert_array_equal(box.lower[:-1], img.pixels)
        assert (box.lower[-1], box.upper[-1]) == (-0.3, 0.3)

    def test_contrast_rejected(self, quadrant_net, anchor):
        img, label = anchor
        with pytest.raises(EncodingError):
            brightness_query(quadrant_net, PerturbationSpec(Contrast(0.2, 0.5), img, label))


class TestContrast:
    def test_matches_direct_change(self, make_network):
        rng = np.random.default_rng(3)
        for seed in range(20):
            net = make_network(seed, [5, 4, 2])
            pixels, mu = rng.uniform(size=5), rng.uniform()
            augmented = contrast_network(net, pixels, mu)
            for c in rng.uniform(0.0, 2.0, size=20):
                assert evaluate(augmented, [c]).tolist() == evaluate(net, contrast_pixels(pixels, c, mu)).tolist()

    def test_unit_factor_keeps_pixels(self):
        pixels = np.random.default_rng(4).uniform(0.25, 1.0, size=50)
        assert contrast_pixels(pixels, 1.0, 0.5).tolist() == pixels.tolist()

    def test_doubling(self):
        np.testing.assert_allclose(contrast_pixels([0.3, 0.9], 2.0, 0.5), [0.1, 1.3], atol=1e-15)

    def test_query(self, quadrant_net, anchor):
        img, label = anchor
        query = contrast_query(quadrant_net, PerturbationSpec(Contrast(0.3, 0.2585), img, label))
        assert query.network.input_dim == 1
        assert query.input_box.lower.tolist() == [1.0 - 0.3] and query.input_box.upper.tolist() == [1.0 + 0.3]
        direct = evaluate(quadrant_net, contrast_pixels(img.pixels, 1.0, 0.2585))
        assert evaluate(query.network, [1.0]).tolist() == direct.tolist()

    def test_reuses_augmented_network(self, quadrant_net, anchor):
        img, label = anchor
        augmented = contrast_network(quadrant_net, img.pixels, 0.5)
        query = contrast_query(quadrant_net, PerturbationSpec(Contrast(0.1, 0.5), img, label), augmented)
        assert query.network is augmented


class TestProperties:
    def test_misclass_clauses(self):
        prop = misclass_property(1, 3)
        assert [clause.coeffs.tolist() for clause in prop.clauses] == [[1.0, -1.0, 0.0], [0.0, -1.0, 1.0]]
        assert all(clause.threshold == 0.0 for clause in prop.clauses)

    @pytest.mark.parametrize(
        "outputs, expected",
        [([0.1, 0.9, 0.3], False), ([0.9, 0.9, 0.3], True), ([0.1, 0.5, 0.6], True), ([-1.0, 0.0, -1.0], False)],
    )
    def test_misclass_holds(self, outputs, expected):
        assert misclass_property(1, 3).holds(outputs) is expected

    def test_batch_matches_single(self):
        rng = np.random.default_rng(5)
        outputs = rng.integers(-2, 3, size=(200, 3)).astype(float)
        for prop in (misclass_property(1, 3), reach_at_least(0.5, 2, 3), reach_at_most(-1.0, 0, 3)):
            assert prop.holds_batch(outputs).tolist() == [prop.holds(y) for y in outputs]

    @pytest.mark.parametrize("true_class, k", [(0, 1), (3, 3), (-1, 3)])
    def test_misclass_invalid(self, true_class, k):
        with pytest.raises(EncodingError):
            misclass_property(true_class, k)

    def test_reachability(self):
        assert reach_at_least(3.0).holds([3.0]) and not reach_at_least(3.0).holds([2.9])
        assert reach_at_most(0.0).holds([0.0]) and not reach_at_most(0.0).holds([0.1])


class TestPerturbations:
    @pytest.mark.parametrize(
        "kwargs, kind",
        [
            ({"epsilon": 0.1}, Noise(0.1)),
            ({"beta": 0.2}, Brightness(0.2)),
            ({"epsilon": 0.1, "beta": 0.2}, NoiseAndBrightness(0.1, 0.2)),
            ({"gamma": 0.3, "mu": 0.5}, Contrast(0.3, 0.5)),
        ],
    )
    def test_make(self, kwargs, kind):
        assert make_perturbation(Image(1, 1, [0.5]), 0, **kwargs).kind == kind

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon": 0.1, "gamma": 0.2, "mu": 0.5},
            {"beta": 0.1, "gamma": 0.2, "mu": 0.5},
            {"gamma": 0.2},
            {},
        ],
    )
    def test_make_rejects(self, kwargs):
        with pytest.raises(EncodingError):
            make_perturbation(Image(1, 1, [0.5]), 0, **kwargs)

    @pytest.mark.parametrize(
        "build",
        [
            lambda: Noise(-0.1),
            lambda: Brightness(-0.01),
            lambda: NoiseAndBrightness(0.1, -0.1),
            lambda: Contrast(1.5, 0.2),
            lambda: Contrast(0.2, 1.2),
            lambda: Noise(float("nan")),
        ],
    )
    def test_invalid_parameters(self, build):
        with pytest.raises(EncodingError):
            build()

    def test_encode_dispatch(self, quadrant_net, anchor):
        img, label = anchor
        dims = [
            encode(quadrant_net, PerturbationSpec(kind, img, label)).network.input_dim
            for kind in (Noise(0.1), Brightness(0.1), NoiseAndBrightness(0.1, 0.1), Contrast(0.1, 0.5))
        ]
        assert dims == [64, 65, 65, 1]

    def test_anchor_point(self, quadrant_net, anchor):
        img, label = anchor
        noise = encode(quadrant_net, PerturbationSpec(Noise(0.1), img, label))
        bright = encode(quadrant_net, PerturbationSpec(NoiseAndBrightness(0.1, 0.1), img, label))
        contrast = encode(quadrant_net, PerturbationSpec(Contrast(0.1, 0.5), img, label))
        assert anchor_point(noise).tolist() == img.pixels.tolist()
        assert anchor_point(bright).tolist() == [*img.pixels.tolist(), 0.0]
        assert anchor_point(contrast).tolist() == [1.0]


class TestInputBox:
    def test_contains(self):
        box = InputBox([0.0, -1.0], [1.0, 1.0])
        assert box.contains([0.5, 0.0]) and box.contains([1.0, -1.0])
        assert not box.contains([1.1, 0.0]) and not box.contains([0.5])

    def test_inverted_bounds(self):
        with pytest.raises(EncodingError):
            InputBox([1.0], [0.0])

    def test_query_dimension(self, toy_net):
        with pytest.raises(DimensionMismatch):
            VerificationQuery(toy_net, InputBox([0.0], [1.0]), reach_at_least(1.0))
