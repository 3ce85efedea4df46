"""
Handlers for unwrap, region, tree, theory and enumerate subcommands
"""
import logging
from argparse import Namespace
from typing import Tuple

import numpy as np

from app.commands.inputs import parse_array, parse_box, parse_inputs
from app.decomposition.networks import as_feedforward, flatten_pattern, forward
from app.decomposition.regions import enumerate_regions, membership, region_halfspaces
from app.decomposition.surrogate import (
    build_mrt,
    export_theory,
    format_theory,
    mark_feasibility,
    tree_stats,
)
from app.decomposition.unwrap import unwrap
from app.utils.errors import InvariantViolation
from app.utils.linalg import vec
from app.utils.model_io import (
    census_payload,
    dump_result,
    linear_model_payload,
    load_model,
    make_result,
    model_hash,
    region_payload,
    tree_payload,
)

logger = logging.getLogger(__name__)

Output = Tuple[str, int]


def handle_unwrap(args: Namespace) -> Output:
    """Local linear model of the region containing --input"""
    net = load_model(args.model)
    x = parse_array(args.input, net.input_shape)
    output, pattern = forward(net, x)
    model = unwrap(net, pattern)

    expected = vec(output)
    actual = model.evaluate(x)
    error = float(np.max(np.abs(actual - expected) / np.maximum(1.0, np.abs(expected))))
    if error > 1e-9:
        raise InvariantViolation(f"local model disagrees with forward pass at input (error {error:.3e})")

    payload = linear_model_payload(model)
    if args.eval:
        payload["evaluation"] = {"network": expected.tolist(), "model": actual.tolist()}
    result = make_result("linear_model", payload, model_hash(args.model), x.tolist())
    return dump_result(result), 0


def handle_region(args: Namespace) -> Output:
    """Half-space description of the region containing --input"""
    net = load_model(args.model)
    x = parse_array(args.input, net.input_shape)
    ff = as_feedforward(net)
    _, pattern = forward(net, x)
    region = region_halfspaces(ff, flatten_pattern(pattern))
    payload = region_payload(region)
    payload["contains_input"] = membership(region, vec(x))
    result = make_result("region", payload, model_hash(args.model), x.tolist())
    return dump_result(result), 0


def handle_tree(args: Namespace) -> Output:
    """Tree statistics, and the full materialized tree with --full"""
    net = load_model(args.model)
    ff = as_feedforward(net)
    if not args.materialize:
        tree = build_mrt(ff, mode="lazy")
        return dump_result(make_result("tree", {"stats": tree_stats(tree).model_dump()}, model_hash(args.model))), 0

    tree = build_mrt(ff, mode="materialize", max_leaves=args.max_leaves)
    if args.feasibility:
        tree = mark_feasibility(tree, ff)
    payload = {"stats": tree_stats(tree).model_dump()}
    if args.full:
        payload["tree"] = tree_payload(tree)
    return dump_result(make_result("tree", payload, model_hash(args.model))), 0


def handle_theory(args: Namespace) -> Output:
    """Atoms and region terms for the patterns of --inputs; bare text with --text"""
    net = load_model(args.model)
    ff = as_feedforward(net)
    inputs = parse_inputs(args.inputs, net.input_shape)
    patterns = []
    for x in inputs:
        pattern = flatten_pattern(forward(net, x)[1])
        if pattern not in patterns:
            patterns.append(pattern)
    theory = export_theory(ff, patterns)
    logger.info("theory export: %d atoms, %d terms", len(theory.atoms), len(theory.terms))
    text = format_theory(theory)
    if args.text:
        return text, 0
    payload = {"text": text, "atoms": len(theory.atoms), "terms": len(theory.terms)}
    result = make_result("theory", payload, model_hash(args.model), [x.tolist() for x in inputs])
    return dump_result(result), 0


def handle_enumerate(args: Namespace) -> Output:
    """Census of activation regions meeting the --box"""
    net = load_model(args.model)
    ff = as_feedforward(net)
    box = parse_box(args.box[0], args.box[1], ff.input_dim)
    census = enumerate_regions(
        ff, box, strategy=args.strategy, count=args.count, seed=args.seed, eps=args.eps
    )
    result = make_result("census", census_payload(census), model_hash(args.model), seed=args.seed)
    return dump_result(result), 0
