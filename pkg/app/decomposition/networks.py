"""
Forward passes for feedforward, graph-convolutional and tensor ReLU networks
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.schemas.network_schemas import (
    ActivationPattern,
    FeedforwardLayer,
    FeedforwardNetwork,
    GcnLayer,
    GcnNetwork,
    MultiplicativeLayer,
    TensorLayer,
    TensorNetwork,
)
from app.utils.errors import InputError, ShapeError
from app.utils.linalg import kron, tucker_contract, tucker_operator, vec

Network = Union[FeedforwardNetwork, GcnNetwork, TensorNetwork]
Seed = Union[int, np.random.Generator, None]


def relu_with_state(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """ReLU plus the activation state; s(z) = 1 iff z > 0, so s(0) = 0"""
    mask = (z > 0).astype(np.int8)
    return np.where(mask == 1, z, 0.0), mask


def check_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != tuple(net.input_shape):
        raise InputError(
            f"input has shape {x.shape}, network expects {tuple(net.input_shape)}",
            expected=list(net.input_shape),
            actual=list(x.shape),
        )
    if not np.all(np.isfinite(x)):
        raise InputError("input contains NaN or Inf entries")
    return x


def forward(net: Network, x) -> Tuple[np.ndarray, ActivationPattern]:
    """Evaluate the network and record which units were strictly positive"""
    x = check_input(net, x)
    masks: List[np.ndarray] = []
    activation = x
    if isinstance(net, FeedforwardNetwork):
        for layer in net.hidden_layers:
            activation, mask = relu_with_state(layer.weight @ activation + layer.bias)
            masks.append(mask)
        output = net.readout.weight @ activation + net.readout.bias
    elif isinstance(net, GcnNetwork):
        for layer in net.layers:
            z = layer.operator @ activation @ layer.weight + layer.bias
            activation, mask = relu_with_state(z)
            masks.append(mask)
        output = activation
    elif isinstance(net, TensorNetwork):
        for layer in net.layers:
            z = tucker_contract(activation, layer.modes) + layer.bias
            activation, mask = relu_with_state(z)
            masks.append(mask)
        output = activation
    else:
        raise InputError(f"unsupported network type {type(net).__name__}")
    return output, ActivationPattern(per_layer=tuple(masks))


def pattern_of(net: Network, x) -> ActivationPattern:
    return forward(net, x)[1]


def forward_batch(net: FeedforwardNetwork, xs) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate many inputs (rows of ``xs``); returns outputs and flat pattern bits"""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[1] != net.input_dim:
        raise InputError(f"inputs have {xs.shape[1]} features, network expects {net.input_dim}")
    activation = xs
    bits = []
    for layer in net.hidden_layers:
        activation, mask = relu_with_state(activation @ layer.weight.T + layer.bias)
        bits.append(mask)
    outputs = activation @ net.readout.weight.T + net.readout.bias
    return outputs, np.concatenate(bits, axis=1)


def gcn_layer_operator(layer: GcnLayer) -> np.ndarray:
    """vec(A X W) = kron(W.T, A) vec(X)"""
    return kron(layer.weight.T, layer.operator)


def vectorized_layers(net: Network) -> List[Tuple[np.ndarray, np.ndarray]]:
    """(weight, bias) of every activated layer acting on vec of the activation"""
    if isinstance(net, FeedforwardNetwork):
        return [(layer.weight, layer.bias) for layer in net.hidden_layers]
    if isinstance(net, GcnNetwork):
        return [(gcn_layer_operator(layer), vec(layer.bias)) for layer in net.layers]
    if isinstance(net, TensorNetwork):
        return [(tucker_operator(layer.modes), vec(layer.bias)) for layer in net.layers]
    raise InputError(f"unsupported network type {type(net).__name__}")


def as_feedforward(net: Network) -> FeedforwardNetwork:
    """Equivalent feedforward network over vec(input); GCN/tensor nets get an identity readout"""
    if isinstance(net, FeedforwardNetwork):
        return net
    hidden = [FeedforwardLayer(weight=w, bias=b) for w, b in vectorized_layers(net)]
    width = hidden[-1].weight.shape[0]
    readout = FeedforwardLayer(weight=np.eye(width), bias=np.zeros(width))
    return FeedforwardNetwork(layers=tuple(hidden) + (readout,))


def flatten_pattern(pattern: ActivationPattern) -> ActivationPattern:
    """Pattern of :func:`as_feedforward`'s network: each layer's mask vectorized"""
    return ActivationPattern(per_layer=tuple(vec(mask) for mask in pattern.per_layer))


def forward_multiplicative(
    layer: MultiplicativeLayer, x1, x2
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate relu(W x1 + b) * relu(V x2 + c); returns output and both branch patterns"""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != (layer.w.shape[1],) or x2.shape != (layer.v.shape[1],):
        raise ShapeError(
            f"inputs {x1.shape}, {x2.shape} do not match branches "
            f"({layer.w.shape[1]},), ({layer.v.shape[1]},)"
        )
    left, p1 = relu_with_state(layer.w @ x1 + layer.b)
    right, p2 = relu_with_state(layer.v @ x2 + layer.c)
    return left * right, p1, p2


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_feedforward(sizes: Sequence[int], seed: Seed = None, bias_scale: float = 0.5) -> FeedforwardNetwork:
    """Random network with layer widths ``sizes`` = [input, hidden..., output]"""
    if len(sizes) < 3:
        raise ShapeError("sizes needs an input width, at least one hidden width and an output width")
    rng = _rng(seed)
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        layers.append(
            FeedforwardLayer(
                weight=rng.normal(size=(fan_out, fan_in)) / np.sqrt(fan_in),
                bias=bias_scale * rng.normal(size=fan_out),
            )
        )
    return FeedforwardNetwork(layers=tuple(layers))


def random_gcn(node_count: int, dims: Sequence[int], seed: Seed = None, operator: Optional[np.ndarray] = None) -> GcnNetwork:
    """Random GCN on ``node_count`` nodes with feature widths ``dims`` = [n_0, ..., n_L]"""
    rng = _rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = operator if operator is not None else rng.normal(size=(node_count, node_count)) / np.sqrt(node_count)
        layers.append(
            GcnLayer(
                operator=a,
                weight=rng.normal(size=(fan_in, fan_out)) / np.sqrt(fan_in),
                bias=0.5 * rng.normal(size=(node_count, fan_out)),
            )
        )
    return GcnNetwork(layers=tuple(layers))


def random_tensor(shapes: Sequence[Sequence[int]], seed: Seed = None) -> TensorNetwork:
    """Random tensor network through the activation shapes ``shapes`` = [input, ..., output]"""
    rng = _rng(seed)
    layers = []
    for in_shape, out_shape in zip(shapes[:-1], shapes[1:]):
        if len(in_shape) != len(out_shape):
            raise ShapeError(f"mode count changes from {len(in_shape)} to {len(out_shape)}")
        modes = tuple(rng.normal(size=(a, b)) / np.sqrt(a) for a, b in zip(in_shape, out_shape))
        layers.append(TensorLayer(modes=modes, bias=0.5 * rng.normal(size=tuple(out_shape))))
    return TensorNetwork(layers=tuple(layers))
