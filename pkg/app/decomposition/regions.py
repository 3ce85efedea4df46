"""
Half-space descriptions of activation regions and region enumeration
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from app.config import get_settings
from app.decomposition.networks import forward_batch, pattern_of
from app.decomposition.unwrap import partial_models
from app.schemas.network_schemas import (
    ActivationPattern,
    Box,
    FeedforwardNetwork,
    HalfSpace,
    RegionDescription,
)
from app.schemas.result_schemas import RegionCensus, RegionWitness
from app.utils.errors import CapExceededError, InputError, ShapeError

logger = logging.getLogger(__name__)


def _require_feedforward(net) -> FeedforwardNetwork:
    if not isinstance(net, FeedforwardNetwork):
        raise InputError(
            "region descriptions need a feedforward network; convert with as_feedforward first"
        )
    return net


def layer_conditions(
    layer_weight: np.ndarray,
    layer_bias: np.ndarray,
    partial: Tuple[np.ndarray, np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    """Pre-activation of a layer as an affine map of the input, given the partial model before it"""
    partial_weight, partial_bias = partial
    return layer_weight @ partial_weight, layer_weight @ partial_bias + layer_bias


def _condition(normal: np.ndarray, offset: float, active: bool) -> HalfSpace:
    """z > 0 for an active neuron, -z >= 0 for an inactive one"""
    sign = 1.0 if active else -1.0
    return HalfSpace(normal=sign * normal, offset=float(sign * offset), inclusive=not active)


def region_halfspaces(net: FeedforwardNetwork, pattern: ActivationPattern) -> RegionDescription:
    """One half-space per hidden neuron; neuron i of layer j is active iff its row is positive"""
    net = _require_feedforward(net)
    pattern.check_shapes(net.pattern_shapes)
    layers = [(layer.weight, layer.bias) for layer in net.hidden_layers]
    partials = partial_models(layers, pattern.per_layer)

    halfspaces: List[HalfSpace] = []
    neurons: List[Tuple[int, int]] = []
    for j, ((weight, bias), mask) in enumerate(zip(layers, pattern.per_layer)):
        normals, offsets = layer_conditions(weight, bias, partials[j])
        for i in range(mask.shape[0]):
            halfspaces.append(_condition(normals[i], offsets[i], bool(mask[i])))
            neurons.append((j, i))
    return RegionDescription(
        halfspaces=tuple(halfspaces),
        neurons=tuple(neurons),
        pattern=pattern,
        input_dim=net.input_dim,
    )


def membership(region: RegionDescription, x) -> bool:
    """True iff every half-space holds at x"""
    x = np.asarray(x, dtype=np.float64)
    if region.input_dim is not None and x.shape != (region.input_dim,):
        raise ShapeError(f"point has shape {x.shape}, region lives in R^{region.input_dim}")
    return all(halfspace.holds(x) for halfspace in region.halfspaces)


def _normalized(halfspace: HalfSpace) -> Tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(halfspace.normal))
    return halfspace.normal / norm, halfspace.offset / norm


def slack(halfspaces: Sequence[HalfSpace], x: np.ndarray) -> float:
    """Smallest normalized margin of x over the half-spaces (inf when there are none)"""
    margin = np.inf
    for halfspace in halfspaces:
        if halfspace.degenerate:
            margin = min(margin, np.inf if halfspace.holds(x) else -np.inf)
            continue
        normal, offset = _normalized(halfspace)
        margin = min(margin, float(normal @ x) + offset)
    return margin


def find_witness(
    halfspaces: Sequence[HalfSpace],
    box: Optional[Box],
    eps: float,
    dim: Optional[int] = None,
) -> Optional[np.ndarray]:
    """Point of the box satisfying every half-space with normalized margin >= eps, or None.

    Phase-one LP over (x, t): maximize t subject to a.x + c >= t for each
    unit-normal half-space, t <= 1, x inside the box.
    """
    if dim is None:
        dim = box.dim if box is not None else halfspaces[0].normal.shape[0]
    rows, rhs = [], []
    for halfspace in halfspaces:
        if halfspace.degenerate:
            if not halfspace.holds(np.zeros(dim)):
                return None
            continue
        normal, offset = _normalized(halfspace)
        rows.append(np.append(-normal, 1.0))
        rhs.append(offset)

    x_bounds = (
        [(float(lo), float(hi)) for lo, hi in zip(box.low, box.high)]
        if box is not None
        else [(None, None)] * dim
    )
    if not rows:
        return (box.low + box.high) / 2 if box is not None else np.zeros(dim)

    result = linprog(
        c=np.append(np.zeros(dim), -1.0),
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        bounds=x_bounds + [(None, 1.0)],
        method="highs",
    )
    if result.status != 0 or -result.fun < eps:
        logger.debug("half-space system infeasible at eps=%g (status %s)", eps, result.status)
        return None
    return result.x[:dim]


def _sample_regions(net: FeedforwardNetwork, box: Box, count: int, seed: int) -> RegionCensus:
    rng = np.random.default_rng(seed)
    points = rng.uniform(box.low, box.high, size=(count, box.dim))
    _, bits = forward_batch(net, points)
    seen = {}
    for point, row in zip(points, bits):
        key = row.tobytes()
        if key not in seen:
            seen[key] = RegionWitness(
                pattern=ActivationPattern.from_flat(row, net.pattern_shapes), witness=point
            )
    return RegionCensus(strategy="sample", regions=tuple(seen.values()))


class _PrefixSearch:
    """Depth-first walk over patterns in layer-major order, pruning infeasible prefixes"""

    def __init__(self, net: FeedforwardNetwork, box: Box, eps: float):
        self.net = net
        self.box = box
        self.eps = eps
        self.layers = [(layer.weight, layer.bias) for layer in net.hidden_layers]
        self.lp_solves = 0
        self.rejected = 0
        self.found: List[RegionWitness] = []

    def run(self) -> None:
        n = self.net.input_dim
        start = (self.box.low + self.box.high) / 2
        self._enter_layer(0, [], [], (np.eye(n), np.zeros(n)), start)

    def _enter_layer(self, j, masks, halfspaces, partial, witness) -> None:
        if j == len(self.layers):
            self._accept(masks, witness)
            return
        weight, bias = self.layers[j]
        normals, offsets = layer_conditions(weight, bias, partial)
        self._branch(j, 0, [], masks, halfspaces, partial, normals, offsets, witness)

    def _branch(self, j, i, bits, masks, halfspaces, partial, normals, offsets, witness) -> None:
        if i == normals.shape[0]:
            mask = np.array(bits, dtype=np.int8)
            partial_weight = mask[:, None] * normals
            partial_bias = mask * offsets
            self._enter_layer(j + 1, masks + [mask], halfspaces, (partial_weight, partial_bias), witness)
            return
        for bit in (1, 0):
            candidate = halfspaces + [_condition(normals[i], offsets[i], bool(bit))]
            point = witness if slack(candidate[-1:], witness) >= self.eps else None
            if point is None:
                self.lp_solves += 1
                point = find_witness(candidate, self.box, self.eps)
            if point is not None:
                self._branch(j, i + 1, bits + [bit], masks, candidate, partial, normals, offsets, point)

    def _accept(self, masks, witness) -> None:
        pattern = ActivationPattern(per_layer=tuple(masks))
        if pattern_of(self.net, witness) != pattern:
            self.rejected += 1
            logger.warning("witness for pattern %s failed re-validation; dropped", pattern.bitstring())
            return
        self.found.append(RegionWitness(pattern=pattern, witness=witness))


def enumerate_regions(
    net: FeedforwardNetwork,
    box: Box,
    strategy: str = "sample",
    count: int = 1000,
    seed: int = 0,
    eps: Optional[float] = None,
    max_neurons: Optional[int] = None,
) -> RegionCensus:
    """Non-empty activation regions meeting the box, each with a witness point"""
    net = _require_feedforward(net)
    if box.dim != net.input_dim:
        raise ShapeError(f"box lives in R^{box.dim}, network input is R^{net.input_dim}")
    settings = get_settings()
    if strategy == "sample":
        census = _sample_regions(net, box, count, seed)
    elif strategy == "exhaustive":
        cap = max_neurons if max_neurons is not None else settings.max_exhaustive_neurons
        if net.hidden_neuron_count > cap:
            raise CapExceededError(
                f"exhaustive enumeration refused: {net.hidden_neuron_count} hidden neurons exceed cap {cap}",
                cap=cap,
            )
        search = _PrefixSearch(net, box, eps if eps is not None else settings.feasibility_eps)
        search.run()
        census = RegionCensus(
            strategy="exhaustive",
            regions=tuple(search.found),
            lp_solves=search.lp_solves,
            rejected_witnesses=search.rejected,
        )
    else:
        raise InputError(f"unknown enumeration strategy '{strategy}'")
    logger.info("%s enumeration found %d regions (%d LPs)", strategy, len(census.regions), census.lp_solves)
    return census


def grid_census(net: FeedforwardNetwork, box: Box, steps: int = 400) -> RegionCensus:
    """Patterns met on a regular grid over the box"""
    net = _require_feedforward(net)
    axes = [np.linspace(lo, hi, steps) for lo, hi in zip(box.low, box.high)]
    points = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    _, bits = forward_batch(net, points)
    _, first = np.unique(bits, axis=0, return_index=True)
    regions = tuple(
        RegionWitness(
            pattern=ActivationPattern.from_flat(bits[index], net.pattern_shapes),
            witness=points[index],
        )
        for index in sorted(first)
    )
    return RegionCensus(strategy="grid", regions=regions)
