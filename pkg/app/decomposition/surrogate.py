"""
Exact multivariate regression trees and propositional export of a ReLU network
"""
import logging
import re
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from app.config import get_settings
from app.decomposition.regions import find_witness, layer_conditions, region_halfspaces
from app.decomposition.unwrap import unwrap_feedforward
from app.schemas.network_schemas import ActivationPattern, Box, FeedforwardNetwork, HalfSpace
from app.schemas.result_schemas import (
    MrtLeaf,
    MrtNode,
    MrtSplit,
    MultivariateRegressionTree,
    TheoryAtom,
    TheoryExport,
    TheoryTerm,
    TreeStats,
)
from app.utils.errors import CapExceededError, InputError, ModelParseError, ShapeError
from app.utils.storage import InMemoryModelCache, ModelCache

logger = logging.getLogger(__name__)


class LazyMrt:
    """Tree evaluator that walks the split conditions for one input on demand"""

    def __init__(self, net: FeedforwardNetwork, cache: Optional[ModelCache] = None):
        self.net = net
        self.cache = cache or InMemoryModelCache()

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    def path(self, x: np.ndarray) -> ActivationPattern:
        """Pattern selected by the strict split tests along the path of x"""
        n = self.net.input_dim
        partial = (np.eye(n), np.zeros(n))
        masks = []
        for layer in self.net.hidden_layers:
            normals, offsets = layer_conditions(layer.weight, layer.bias, partial)
            mask = (normals @ x + offsets > 0).astype(np.int8)
            masks.append(mask)
            partial = (mask[:, None] * normals, mask * offsets)
        return ActivationPattern(per_layer=tuple(masks))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        pattern = self.path(x)
        model = self.cache.get_or_compute(pattern, lambda p: unwrap_feedforward(self.net, p))
        return model.evaluate(x)


Tree = Union[MultivariateRegressionTree, LazyMrt]


def _grow(net: FeedforwardNetwork, layers, j: int, i: int, bits: List[int], masks, partial, conditions) -> MrtNode:
    if j == len(layers):
        pattern = ActivationPattern(per_layer=tuple(masks))
        return MrtLeaf(model=unwrap_feedforward(net, pattern))
    normals, offsets = conditions
    if i == normals.shape[0]:
        mask = np.array(bits, dtype=np.int8)
        next_partial = (mask[:, None] * normals, mask * offsets)
        next_conditions = (
            layer_conditions(*layers[j + 1], next_partial) if j + 1 < len(layers) else None
        )
        return _grow(net, layers, j + 1, 0, [], masks + [mask], next_partial, next_conditions)
    return MrtSplit(
        layer=j,
        neuron=i,
        condition=HalfSpace(normal=normals[i], offset=float(offsets[i])),
        true_child=_grow(net, layers, j, i + 1, bits + [1], masks, partial, conditions),
        false_child=_grow(net, layers, j, i + 1, bits + [0], masks, partial, conditions),
    )


def build_mrt(
    net: FeedforwardNetwork,
    mode: str = "materialize",
    max_leaves: Optional[int] = None,
    cache: Optional[ModelCache] = None,
) -> Tree:
    """Exact tree surrogate; splits visit neurons layer by layer, then by index"""
    if not isinstance(net, FeedforwardNetwork):
        raise InputError("trees are built for feedforward networks; convert with as_feedforward first")
    if mode == "lazy":
        return LazyMrt(net, cache)
    if mode != "materialize":
        raise InputError(f"unknown tree mode '{mode}'")

    cap = max_leaves if max_leaves is not None else get_settings().max_leaves
    leaves = 2 ** net.hidden_neuron_count
    if leaves > cap:
        raise CapExceededError(f"tree would have {leaves} leaves, budget is {cap}", cap=cap)

    layers = [(layer.weight, layer.bias) for layer in net.hidden_layers]
    n = net.input_dim
    partial = (np.eye(n), np.zeros(n))
    root = _grow(net, layers, 0, 0, [], [], partial, layer_conditions(*layers[0], partial))
    logger.info("materialized tree with %d leaves", leaves)
    return MultivariateRegressionTree(root=root, input_dim=n, output_dim=net.output_dim)


def mrt_eval(tree: Tree, x) -> np.ndarray:
    """Descend by strict tests (z > 0 goes to the true branch) and apply the leaf model"""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.input_dim,):
        raise ShapeError(f"point has shape {x.shape}, tree expects ({tree.input_dim},)")
    if isinstance(tree, LazyMrt):
        return tree.evaluate(x)
    node = tree.root
    while isinstance(node, MrtSplit):
        node = node.true_child if node.condition.holds(x) else node.false_child
    return node.model.evaluate(x)


def iter_leaves(node: MrtNode):
    stack = [node]
    while stack:
        current = stack.pop()
        if isinstance(current, MrtLeaf):
            yield current
        else:
            stack.extend((current.false_child, current.true_child))


def _depth(node: MrtNode) -> int:
    if isinstance(node, MrtLeaf):
        return 0
    return 1 + max(_depth(node.true_child), _depth(node.false_child))


def mark_feasibility(
    tree: MultivariateRegressionTree, net: FeedforwardNetwork, box: Optional[Box] = None, eps: Optional[float] = None
) -> MultivariateRegressionTree:
    """Copy of the tree whose leaves record whether their region is non-empty"""
    eps = eps if eps is not None else get_settings().feasibility_eps

    def mark(node: MrtNode) -> MrtNode:
        if isinstance(node, MrtLeaf):
            region = region_halfspaces(net, node.model.pattern)
            witness = find_witness(region.halfspaces, box, eps, dim=net.input_dim)
            return MrtLeaf(model=node.model, feasible=witness is not None)
        return node.model_copy(
            update={"true_child": mark(node.true_child), "false_child": mark(node.false_child)}
        )

    return tree.model_copy(update={"root": mark(tree.root)})


def prune_infeasible(
    tree: MultivariateRegressionTree, net: FeedforwardNetwork, box: Optional[Box] = None, eps: Optional[float] = None
) -> MultivariateRegressionTree:
    """Drop empty-region leaves; a split left with one child collapses into it.

    The pruned tree stays exact on ``box`` (everywhere when ``box`` is None).
    """
    marked = mark_feasibility(tree, net, box, eps)

    def prune(node: MrtNode) -> Optional[MrtNode]:
        if isinstance(node, MrtLeaf):
            return node if node.feasible else None
        true_child = prune(node.true_child)
        false_child = prune(node.false_child)
        if true_child is None or false_child is None:
            return true_child if false_child is None else false_child
        return node.model_copy(update={"true_child": true_child, "false_child": false_child})

    root = prune(marked.root)
    if root is None:
        raise InputError("no leaf of the tree has a non-empty region inside the box")
    return marked.model_copy(update={"root": root})


def tree_stats(tree: Tree) -> TreeStats:
    if isinstance(tree, LazyMrt):
        hidden = tree.net.hidden_neuron_count
        return TreeStats(mode="lazy", hidden_neurons=hidden, depth=hidden, leaves=2 ** hidden)
    leaves = list(iter_leaves(tree.root))
    flags = [leaf.feasible for leaf in leaves]
    return TreeStats(
        mode="materialize",
        hidden_neurons=leaves[0].model.pattern.neuron_count,
        depth=_depth(tree.root),
        leaves=len(leaves),
        feasible_leaves=sum(bool(f) for f in flags) if all(f is not None for f in flags) else None,
    )


# Propositional export
def atom_name(layer: int, neuron: int, prefix: str) -> str:
    return f"h{layer}_{neuron}" + (f"[{prefix}]" if prefix else "")


def export_theory(net: FeedforwardNetwork, patterns: Sequence[ActivationPattern]) -> TheoryExport:
    """Atoms h{layer}_{neuron}[prefix] with their half-spaces, and one conjunction per pattern"""
    if not patterns:
        raise InputError("export_theory needs at least one pattern")
    atoms: Dict[str, TheoryAtom] = {}
    terms: List[TheoryTerm] = []
    for index, pattern in enumerate(patterns):
        region = region_halfspaces(net, pattern)
        layer_bits = ["".join(str(int(b)) for b in mask) for mask in pattern.per_layer]
        literals = []
        for halfspace, (layer, neuron) in zip(region.halfspaces, region.neurons):
            active = bool(pattern.per_layer[layer][neuron])
            prefix = "".join(layer_bits[:layer])
            name = atom_name(layer, neuron, prefix)
            if name not in atoms:
                # region half-spaces are signed by the state; atoms store the activation condition
                sign = 1.0 if active else -1.0
                atoms[name] = TheoryAtom(
                    name=name,
                    layer=layer,
                    neuron=neuron,
                    prefix=prefix,
                    normal=sign * halfspace.normal,
                    offset=sign * halfspace.offset,
                )
            literals.append(name if active else f"~{name}")
        terms.append(TheoryTerm(region_id=f"r{index}", literals=literals))
    return TheoryExport(atoms=tuple(atoms.values()), terms=tuple(terms))


def _number(value: float) -> str:
    return repr(float(value))


def format_theory(theory: TheoryExport) -> str:
    lines = []
    for atom in theory.atoms:
        normal = ",".join(_number(v) for v in atom.normal)
        lines.append(
            f"atom {atom.name} layer={atom.layer} neuron={atom.neuron} "
            f"prefix={atom.prefix or '-'} normal={normal} offset={_number(atom.offset)}"
        )
    for term in theory.terms:
        lines.append(" ".join(["term", term.region_id] + term.literals))
    return "\n".join(lines) + "\n"


_ATOM_LINE = re.compile(
    r"^atom (?P<name>\S+) layer=(?P<layer>\d+) neuron=(?P<neuron>\d+) "
    r"prefix=(?P<prefix>[01]+|-) normal=(?P<normal>\S+) offset=(?P<offset>\S+)$"
)


def parse_theory(text: str) -> TheoryExport:
    atoms, terms = [], []
    for number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("atom "):
            match = _ATOM_LINE.match(line)
            if match is None:
                raise ModelParseError(f"line {number}: malformed atom", line=number)
            prefix = match["prefix"]
            atoms.append(
                TheoryAtom(
                    name=match["name"],
                    layer=int(match["layer"]),
                    neuron=int(match["neuron"]),
                    prefix="" if prefix == "-" else prefix,
                    normal=[float(v) for v in match["normal"].split(",")],
                    offset=float(match["offset"]),
                )
            )
        elif line.startswith("term "):
            _, region_id, *literals = line.split()
            terms.append(TheoryTerm(region_id=region_id, literals=literals))
        else:
            raise ModelParseError(f"line {number}: expected 'atom' or 'term'", line=number)
    return TheoryExport(atoms=tuple(atoms), terms=tuple(terms))


def theory_holds(theory: TheoryExport, region_id: str, x) -> bool:
    """Evaluate one region's conjunction at x"""
    atoms = {atom.name: atom for atom in theory.atoms}
    term = next((t for t in theory.terms if t.region_id == region_id), None)
    if term is None:
        raise InputError(f"theory has no term '{region_id}'")
    x = np.asarray(x, dtype=np.float64)
    for literal in term.literals:
        negated = literal.startswith("~")
        halfspace = atoms[literal.lstrip("~")].halfspace()
        if negated:
            halfspace = HalfSpace(normal=-halfspace.normal, offset=-halfspace.offset, inclusive=True)
        if not halfspace.holds(x):
            return False
    return True
