"""
Pydantic models for networks, activation patterns and local linear models
"""
from typing import Annotated, Any, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, model_validator

from app.utils.errors import ShapeError
from app.utils.linalg import as_matrix, as_tensor, as_vector, vec


def _as_mask(value: Any) -> np.ndarray:
    mask = np.array(value, dtype=np.int8)
    if not np.isin(mask, (0, 1)).all():
        raise ShapeError("activation pattern entries must be 0 or 1")
    mask.setflags(write=False)
    return mask


Matrix = Annotated[np.ndarray, BeforeValidator(lambda v: as_matrix(v))]
Vector = Annotated[np.ndarray, BeforeValidator(lambda v: as_vector(v))]
Tensor = Annotated[np.ndarray, BeforeValidator(lambda v: as_tensor(v))]
Mask = Annotated[np.ndarray, BeforeValidator(_as_mask)]


class ArrayModel(BaseModel):
    """Base for frozen models holding numpy arrays"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# Feedforward
class FeedforwardLayer(ArrayModel):
    weight: Matrix  # n_l x n_{l-1}
    bias: Vector  # n_l

    @model_validator(mode="after")
    def _check_bias(self):
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ShapeError(
                f"bias has {self.bias.shape[0]} entries, weight has {self.weight.shape[0]} rows",
                field="bias",
                expected=[self.weight.shape[0]],
                actual=list(self.bias.shape),
            )
        return self


class FeedforwardNetwork(ArrayModel):
    """ReLU layers followed by one affine readout (the last entry of ``layers``)"""

    family: Literal["feedforward"] = "feedforward"
    layers: Tuple[FeedforwardLayer, ...]

    @model_validator(mode="after")
    def _check_chain(self):
        if len(self.layers) < 2:
            raise ShapeError("a feedforward network needs at least one hidden layer and a readout")
        for index in range(1, len(self.layers)):
            previous = self.layers[index - 1].weight
            current = self.layers[index].weight
            if current.shape[1] != previous.shape[0]:
                raise ShapeError(
                    f"layers[{index}].weight is {current.shape[0]}x{current.shape[1]} but "
                    f"layers[{index - 1}].weight is {previous.shape[0]}x{previous.shape[1]}: "
                    f"expected {previous.shape[0]} columns",
                    field=f"layers[{index}].weight",
                    expected=[current.shape[0], previous.shape[0]],
                    actual=list(current.shape),
                )
        return self

    @property
    def hidden_layers(self) -> Tuple[FeedforwardLayer, ...]:
        return self.layers[:-1]

    @property
    def readout(self) -> FeedforwardLayer:
        return self.layers[-1]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.readout.weight.shape[0]

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return (self.input_dim,)

    @property
    def pattern_shapes(self) -> List[Tuple[int, ...]]:
        return [(layer.weight.shape[0],) for layer in self.hidden_layers]

    @property
    def hidden_neuron_count(self) -> int:
        return sum(layer.weight.shape[0] for layer in self.hidden_layers)


# Graph convolutional
class GcnLayer(ArrayModel):
    operator: Matrix  # k x k
    weight: Matrix  # n_{l-1} x n_l
    bias: Matrix  # k x n_l

    @model_validator(mode="after")
    def _check_shapes(self):
        k = self.operator.shape[0]
        if self.operator.shape != (k, k):
            raise ShapeError(
                f"operator must be square, got {self.operator.shape}",
                field="operator",
                expected=[k, k],
                actual=list(self.operator.shape),
            )
        expected = (k, self.weight.shape[1])
        if self.bias.shape != expected:
            raise ShapeError(
                f"bias must be {expected}, got {self.bias.shape}",
                field="bias",
                expected=list(expected),
                actual=list(self.bias.shape),
            )
        return self


class GcnNetwork(ArrayModel):
    """Layers X -> relu(A X W + B); every layer is activated"""

    family: Literal["gcn"] = "gcn"
    layers: Tuple[GcnLayer, ...]

    @model_validator(mode="after")
    def _check_chain(self):
        if not self.layers:
            raise ShapeError("a GCN needs at least one layer")
        k = self.layers[0].operator.shape[0]
        for index, layer in enumerate(self.layers):
            if layer.operator.shape[0] != k:
                raise ShapeError(
                    f"layers[{index}].operator is {layer.operator.shape}, expected ({k}, {k})",
                    field=f"layers[{index}].operator",
                    expected=[k, k],
                    actual=list(layer.operator.shape),
                )
            if index and layer.weight.shape[0] != self.layers[index - 1].weight.shape[1]:
                raise ShapeError(
                    f"layers[{index}].weight has {layer.weight.shape[0]} rows but "
                    f"layers[{index - 1}].weight has {self.layers[index - 1].weight.shape[1]} columns",
                    field=f"layers[{index}].weight",
                    expected=[self.layers[index - 1].weight.shape[1], layer.weight.shape[1]],
                    actual=list(layer.weight.shape),
                )
        return self

    @property
    def node_count(self) -> int:
        return self.layers[0].operator.shape[0]

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return (self.node_count, self.layers[0].weight.shape[0])

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return (self.node_count, self.layers[-1].weight.shape[1])

    @property
    def pattern_shapes(self) -> List[Tuple[int, ...]]:
        return [(self.node_count, layer.weight.shape[1]) for layer in self.layers]


# Tensor (Tucker)
class TensorLayer(ArrayModel):
    modes: Tuple[Matrix, ...]  # A_i: a_i^(l-1) x a_i^(l)
    bias: Tensor

    @model_validator(mode="after")
    def _check_bias(self):
        expected = tuple(a.shape[1] for a in self.modes)
        if self.bias.shape != expected:
            raise ShapeError(
                f"bias must have shape {expected}, got {self.bias.shape}",
                field="bias",
                expected=list(expected),
                actual=list(self.bias.shape),
            )
        return self

    @property
    def in_shape(self) -> Tuple[int, ...]:
        return tuple(a.shape[0] for a in self.modes)

    @property
    def out_shape(self) -> Tuple[int, ...]:
        return tuple(a.shape[1] for a in self.modes)


class TensorNetwork(ArrayModel):
    """Layers X -> relu([[X; A_1, ..., A_k]] + B); every layer is activated"""

    family: Literal["tensor"] = "tensor"
    layers: Tuple[TensorLayer, ...]

    @model_validator(mode="after")
    def _check_chain(self):
        if not self.layers:
            raise ShapeError("a tensor network needs at least one layer")
        for index in range(1, len(self.layers)):
            produced = self.layers[index - 1].out_shape
            consumed = self.layers[index].in_shape
            if produced != consumed:
                raise ShapeError(
                    f"layers[{index}] expects input shape {consumed} but "
                    f"layers[{index - 1}] produces {produced}",
                    field=f"layers[{index}].modes",
                    expected=list(produced),
                    actual=list(consumed),
                )
        return self

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.layers[0].in_shape

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return self.layers[-1].out_shape

    @property
    def pattern_shapes(self) -> List[Tuple[int, ...]]:
        return [layer.out_shape for layer in self.layers]


class MultiplicativeLayer(ArrayModel):
    """relu(W x1 + b) * relu(V x2 + c)"""

    w: Matrix
    b: Vector
    v: Matrix
    c: Vector

    @model_validator(mode="after")
    def _check_branches(self):
        if self.w.shape[0] != self.b.shape[0] or self.v.shape[0] != self.c.shape[0]:
            raise ShapeError("branch bias length must match weight rows")
        if self.w.shape[0] != self.v.shape[0]:
            raise ShapeError(
                f"branch outputs differ: {self.w.shape[0]} vs {self.v.shape[0]}"
            )
        return self


# Patterns and local models
class ActivationPattern(ArrayModel):
    """Per-layer 0/1 masks; entry 1 iff the pre-activation was strictly positive"""

    per_layer: Tuple[Mask, ...]

    def key(self) -> Tuple[Tuple[Tuple[int, ...], bytes], ...]:
        return tuple((mask.shape, mask.tobytes()) for mask in self.per_layer)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ActivationPattern):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    @property
    def shapes(self) -> List[Tuple[int, ...]]:
        return [mask.shape for mask in self.per_layer]

    @property
    def neuron_count(self) -> int:
        return sum(mask.size for mask in self.per_layer)

    def flat(self) -> np.ndarray:
        """All layers' masks as one 0/1 vector (column-major within a layer)"""
        if not self.per_layer:
            return np.zeros(0, dtype=np.int8)
        return np.concatenate([vec(mask) for mask in self.per_layer])

    def bitstring(self) -> str:
        return "".join(str(int(bit)) for bit in self.flat())

    def check_shapes(self, shapes: Sequence[Tuple[int, ...]]) -> None:
        if [tuple(s) for s in shapes] != self.shapes:
            raise ShapeError(
                f"pattern shapes {self.shapes} do not match network layers {list(shapes)}"
            )

    @classmethod
    def from_flat(cls, bits: Sequence[int], shapes: Sequence[Tuple[int, ...]]) -> "ActivationPattern":
        bits = np.asarray(bits, dtype=np.int8)
        masks = []
        offset = 0
        for shape in shapes:
            size = int(np.prod(shape))
            masks.append(np.reshape(bits[offset : offset + size], shape, order="F"))
            offset += size
        if offset != bits.size:
            raise ShapeError(f"{bits.size} bits do not fit layer shapes {list(shapes)}")
        return cls(per_layer=tuple(masks))

    def to_lists(self) -> List[Any]:
        return [mask.tolist() for mask in self.per_layer]


class LocalLinearModel(ArrayModel):
    """Affine map weight @ x + bias, exact on the region of ``pattern``"""

    weight: Matrix  # m x n over flattened (vec) input
    bias: Vector  # m
    pattern: ActivationPattern

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"weight has {self.weight.shape[0]} rows, bias has {self.bias.shape[0]} entries"
            )
        return self

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim > 1:
            x = vec(x)
        if x.shape[0] != self.weight.shape[1]:
            raise ShapeError(f"input has {x.shape[0]} entries, model expects {self.weight.shape[1]}")
        return self.weight @ x + self.bias


class BilinearExpansion(ArrayModel):
    """Four-term expansion of a multiplicative-interaction layer"""

    bilinear: Vector  # D1 W x1 * D2 V x2
    left_bias: Vector  # D1 b * D2 V x2
    right_bias: Vector  # D2 c * D1 W x1
    constant: Vector  # D1 b * D2 c

    @property
    def total(self) -> np.ndarray:
        return self.bilinear + self.left_bias + self.right_bias + self.constant


# Regions
class HalfSpace(ArrayModel):
    """Half-space {x : normal . x + offset > 0}, or >= 0 when ``inclusive``.

    Conditions of inactive neurons are inclusive since s(0) = 0.
    """

    normal: Vector
    offset: float
    inclusive: bool = False

    @property
    def degenerate(self) -> bool:
        return not np.any(self.normal)

    def _satisfied(self, value: float) -> bool:
        return value >= 0 if self.inclusive else value > 0

    def holds(self, x: np.ndarray) -> bool:
        if self.degenerate:
            return self._satisfied(self.offset)
        return self._satisfied(float(self.normal @ x) + self.offset)


class RegionDescription(ArrayModel):
    """Intersection of one half-space per hidden neuron, in layer-major order"""

    halfspaces: Tuple[HalfSpace, ...]
    neurons: Tuple[Tuple[int, int], ...] = ()  # (layer, neuron) per half-space
    pattern: ActivationPattern
    input_dim: Optional[int] = None


class Box(ArrayModel):
    """Axis-aligned box [low, high] in input space"""

    low: Vector
    high: Vector

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.low.shape != self.high.shape:
            raise ShapeError(f"box bounds differ in shape: {self.low.shape} vs {self.high.shape}")
        if np.any(self.low > self.high):
            raise ShapeError("box lower bound exceeds upper bound")
        return self

    @property
    def dim(self) -> int:
        return self.low.shape[0]
