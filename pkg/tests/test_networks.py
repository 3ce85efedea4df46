import numpy as np
import pytest

from app.decomposition.networks import (
    as_feedforward,
    flatten_pattern,
    forward,
    forward_batch,
    pattern_of,
    random_feedforward,
    random_gcn,
    random_tensor,
)
from app.schemas.network_schemas import ActivationPattern, GcnLayer, GcnNetwork
from app.utils.errors import InputError, ShapeError
from app.utils.linalg import kron, unvec, vec
from tests.conftest import make_feedforward


def test_relu_kills_negative_coordinate(quadrant_net):
    output, pattern = forward(quadrant_net, [2.0, -3.0])
    assert output.tolist() == [2.0]
    assert pattern.to_lists() == [[1, 0]]


def test_all_positive_preactivations_give_linear_composition(rng):
    net = make_feedforward(
        (np.abs(rng.normal(size=(3, 2))), np.ones(3)),
        (np.abs(rng.normal(size=(2, 3))), np.ones(2)),
        (rng.normal(size=(1, 2)), [0.5]),
    )
    x = np.array([0.3, 1.2])
    output, pattern = forward(net, x)
    w0, w1, w2 = (layer.weight for layer in net.layers)
    b0, b1, b2 = (layer.bias for layer in net.layers)
    np.testing.assert_allclose(output, w2 @ (w1 @ (w0 @ x + b0) + b1) + b2, rtol=1e-12)
    assert all(mask.all() for mask in pattern.per_layer)


def test_forward_matches_hand_rolled_loop(rng):
    net = random_feedforward([3, 4, 4, 2], seed=rng)
    x = rng.normal(size=3)
    activation = x
    for layer in net.layers[:-1]:
        activation = np.maximum(0.0, layer.weight @ activation + layer.bias)
    expected = net.layers[-1].weight @ activation + net.layers[-1].bias
    np.testing.assert_allclose(forward(net, x)[0], expected, rtol=1e-12)


def test_boundary_preactivation_counts_as_inactive(single_relu_net):
    assert pattern_of(single_relu_net, [0.0]).to_lists() == [[0]]


def test_pattern_constant_near_generic_point(rng):
    net = random_feedforward([3, 5, 5, 2], seed=7)
    x = rng.normal(size=3)
    pattern = pattern_of(net, x)
    for _ in range(50):
        assert pattern_of(net, x + 1e-9 * rng.normal(size=3)) == pattern


def test_pattern_is_deterministic(rng):
    net = random_feedforward([2, 3, 1], seed=1)
    x = rng.normal(size=2)
    assert pattern_of(net, x) == pattern_of(net, x.copy())
    assert hash(pattern_of(net, x)) == hash(pattern_of(net, x.copy()))


def test_forward_is_lipschitz(rng):
    net = random_feedforward([3, 6, 6, 2], seed=3)
    bound = np.prod([np.linalg.norm(layer.weight, 2) for layer in net.layers])
    for _ in range(20):
        x = rng.normal(size=3)
        delta = rng.normal(size=3)
        delta *= 1e-9 / np.linalg.norm(delta)
        gap = np.linalg.norm(forward(net, x + delta)[0] - forward(net, x)[0])
        assert gap <= bound * 1e-9 * (1 + 1e-6)


def test_input_shape_mismatch_is_input_error(quadrant_net):
    with pytest.raises(InputError):
        forward(quadrant_net, [1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        forward(quadrant_net, [np.inf, 0.0])


def test_layer_chain_is_validated():
    with pytest.raises(ShapeError, match=r"layers\[1\]"):
        make_feedforward((np.ones((2, 3)), np.zeros(2)), (np.ones((4, 3)), np.zeros(4)), (np.ones((1, 4)), [0.0]))


def test_gcn_forward_equals_vectorized_form(rng):
    net = random_gcn(3, [2, 3, 2], seed=rng)
    x = rng.normal(size=(3, 2))
    activation = x
    for layer in net.layers:
        z = kron(layer.weight.T, layer.operator) @ vec(activation) + vec(layer.bias)
        activation = unvec(np.maximum(0.0, z), (3, layer.weight.shape[1]))
    np.testing.assert_allclose(forward(net, x)[0], activation, rtol=1e-12, atol=1e-14)


def test_gcn_rejects_non_square_operator():
    with pytest.raises(ShapeError):
        GcnLayer(operator=np.ones((2, 3)), weight=np.ones((2, 2)), bias=np.ones((2, 2)))


def test_gcn_rejects_mixed_node_counts():
    first = GcnLayer(operator=np.eye(2), weight=np.ones((2, 2)), bias=np.zeros((2, 2)))
    second = GcnLayer(operator=np.eye(3), weight=np.ones((2, 2)), bias=np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        GcnNetwork(layers=(first, second))


@pytest.mark.parametrize("builder", [
    lambda: random_gcn(3, [2, 3, 2], seed=11),
    lambda: random_tensor([(2, 2, 2), (2, 3, 2), (2, 2, 2)], seed=11),
])
def test_as_feedforward_is_equivalent(builder, rng):
    net = builder()
    ff = as_feedforward(net)
    for _ in range(20):
        x = rng.normal(size=net.input_shape)
        output, pattern = forward(net, x)
        flat_output, flat_pattern = forward(ff, vec(x))
        np.testing.assert_allclose(flat_output, vec(output), rtol=1e-12, atol=1e-13)
        assert flat_pattern == flatten_pattern(pattern)


def test_forward_batch_agrees_with_forward(rng):
    net = random_feedforward([4, 5, 3, 2], seed=5)
    xs = rng.normal(size=(30, 4))
    outputs, bits = forward_batch(net, xs)
    for x, out, row in zip(xs, outputs, bits):
        expected_out, pattern = forward(net, x)
        np.testing.assert_allclose(out, expected_out, rtol=1e-12, atol=1e-14)
        assert ActivationPattern.from_flat(row, net.pattern_shapes) == pattern
