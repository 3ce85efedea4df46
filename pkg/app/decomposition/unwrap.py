"""
Exact local linear models of ReLU networks on one activation region
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from app.decomposition.networks import Network, forward_multiplicative, vectorized_layers
from app.schemas.network_schemas import (
    ActivationPattern,
    BilinearExpansion,
    FeedforwardNetwork,
    GcnNetwork,
    LocalLinearModel,
    MultiplicativeLayer,
    TensorNetwork,
)
from app.utils.errors import InputError, PreconditionError, ShapeError
from app.utils.linalg import hadamard, vec

logger = logging.getLogger(__name__)

Affine = Tuple[np.ndarray, np.ndarray]


def _mask_rows(mask: np.ndarray, weight: np.ndarray) -> np.ndarray:
    # Hadamard with the mask repeated along columns, i.e. diag(mask) @ weight
    return mask[:, None] * weight


def partial_models(layers: Sequence[Affine], masks: Sequence[np.ndarray]) -> List[Affine]:
    """Masked models after each activated layer.

    Entry ``j`` maps the input to the post-activation of layer ``j - 1`` on the
    region; entry 0 is the identity. Conditions for layer ``j`` are built on it.
    """
    n = layers[0][0].shape[1]
    weight, bias = np.eye(n), np.zeros(n)
    models = [(weight, bias)]
    for (layer_weight, layer_bias), mask in zip(layers, masks):
        weight = _mask_rows(mask, layer_weight @ weight)
        bias = hadamard(mask, layer_weight @ bias + layer_bias)
        models.append((weight, bias))
    return models


def _compose(layers: Sequence[Affine], masks: Sequence[np.ndarray]) -> Affine:
    """W_L D_L ... D_1 W_0 with the matching bias accumulation"""
    weight, bias = layers[0]
    weight = _mask_rows(masks[0], weight)
    bias = hadamard(masks[0], bias)
    for (layer_weight, layer_bias), mask in zip(layers[1:], masks[1:]):
        weight = _mask_rows(mask, layer_weight @ weight)
        bias = hadamard(mask, layer_weight @ bias + layer_bias)
    return weight, bias


def unwrap_feedforward(net: FeedforwardNetwork, pattern: ActivationPattern) -> LocalLinearModel:
    pattern.check_shapes(net.pattern_shapes)
    layers = [(layer.weight, layer.bias) for layer in net.hidden_layers]
    weight, bias = _compose(layers, pattern.per_layer)
    readout = net.readout
    return LocalLinearModel(
        weight=readout.weight @ weight,
        bias=readout.weight @ bias + readout.bias,
        pattern=pattern,
    )


def _unwrap_vectorized(net: Network, pattern: ActivationPattern) -> LocalLinearModel:
    pattern.check_shapes(net.pattern_shapes)
    masks = [vec(mask) for mask in pattern.per_layer]
    weight, bias = _compose(vectorized_layers(net), masks)
    return LocalLinearModel(weight=weight, bias=bias, pattern=pattern)


def unwrap_gcn(net: GcnNetwork, pattern: ActivationPattern) -> LocalLinearModel:
    """Local model over vec(X): layer factors kron(W.T, A) masked by vec(P)"""
    return _unwrap_vectorized(net, pattern)


def unwrap_tensor(net: TensorNetwork, pattern: ActivationPattern) -> LocalLinearModel:
    """Local model over vec(X): layer factors kron(A_k.T, ..., A_1.T) masked by vec(P)"""
    return _unwrap_vectorized(net, pattern)


def unwrap(net: Network, pattern: ActivationPattern) -> LocalLinearModel:
    logger.debug("unwrapping %s network at pattern %s", net.family, pattern.bitstring())
    if isinstance(net, FeedforwardNetwork):
        return unwrap_feedforward(net, pattern)
    if isinstance(net, GcnNetwork):
        return unwrap_gcn(net, pattern)
    if isinstance(net, TensorNetwork):
        return unwrap_tensor(net, pattern)
    raise InputError(f"unsupported network type {type(net).__name__}")


def evaluate(model: LocalLinearModel, x) -> np.ndarray:
    return model.evaluate(x)


def _as_branch_mask(bits, size: int, name: str) -> np.ndarray:
    mask = np.asarray(bits, dtype=np.int8)
    if mask.shape != (size,):
        raise ShapeError(f"{name} has shape {mask.shape}, expected ({size},)")
    return mask


def decompose_multiplicative(
    layer: MultiplicativeLayer, p1, p2, x1, x2
) -> BilinearExpansion:
    """Split relu(W x1 + b) * relu(V x2 + c) into its four Hadamard terms.

    With u = D1 W x1 and v = D2 V x2 the layer equals
    u*v + (D1 b)*v + (D2 c)*u + (D1 b)*(D2 c).
    """
    width = layer.w.shape[0]
    p1 = _as_branch_mask(p1, width, "p1")
    p2 = _as_branch_mask(p2, width, "p2")
    _, actual1, actual2 = forward_multiplicative(layer, x1, x2)
    if not (np.array_equal(actual1, p1) and np.array_equal(actual2, p2)):
        raise PreconditionError("supplied branch patterns are not the patterns of (x1, x2)")

    u = hadamard(p1, layer.w @ np.asarray(x1, dtype=np.float64))
    v = hadamard(p2, layer.v @ np.asarray(x2, dtype=np.float64))
    b = hadamard(p1, layer.b)
    c = hadamard(p2, layer.c)
    return BilinearExpansion(
        bilinear=hadamard(u, v),
        left_bias=hadamard(b, v),
        right_bias=hadamard(c, u),
        constant=hadamard(b, c),
    )
