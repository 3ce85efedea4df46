"""
Property suite behind the verify subcommand
"""
import logging
from argparse import Namespace
from typing import Callable, List, Tuple

import numpy as np

from app.config import get_settings
from app.decomposition.networks import Network, as_feedforward, forward, forward_batch, pattern_of
from app.decomposition.regions import membership, region_halfspaces
from app.decomposition.shap import shap_bruteforce, shap_global
from app.decomposition.surrogate import build_mrt, mrt_eval
from app.decomposition.unwrap import unwrap
from app.schemas.result_schemas import PropertyResult, VerifyReport
from app.utils.linalg import vec
from app.utils.model_io import dump_result, load_model, make_result, model_hash

logger = logging.getLogger(__name__)

GENERIC_MARGIN = 1e-7
SHAP_MAX_FEATURES = 8
SHAP_MAX_CHECKS = 10


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    return float(np.max(np.abs(actual - expected) / np.maximum(1.0, np.abs(expected))))


def _check(name: str, points, measure: Callable[[np.ndarray], float], tol: float) -> PropertyResult:
    worst = 0.0
    for x in points:
        worst = max(worst, measure(x))
    return PropertyResult(name=name, passed=worst <= tol, checked=len(points), max_error=worst)


def check_decomposition(net: Network, points, tol: float) -> PropertyResult:
    def measure(x):
        output, pattern = forward(net, x)
        return relative_error(unwrap(net, pattern).evaluate(x), vec(output))

    return _check("decomposition_equals_forward", points, measure, tol)


def check_regions(net: Network, points) -> PropertyResult:
    """x lies in its own region; another generic y lies there iff it shares the pattern"""
    ff = as_feedforward(net)
    flat = [vec(x) for x in points]
    mismatches, checked = 0, 0
    for x, y in zip(flat, flat[1:] + flat[:1]):
        region = region_halfspaces(ff, pattern_of(ff, x))
        margins = [
            abs(float(h.normal @ p) + h.offset) for h in region.halfspaces if not h.degenerate for p in (x, y)
        ]
        if margins and min(margins) <= GENERIC_MARGIN:
            continue
        checked += 1
        if not membership(region, x):
            mismatches += 1
        if membership(region, y) != (pattern_of(ff, y) == region.pattern):
            mismatches += 1
    return PropertyResult(
        name="region_membership", passed=mismatches == 0, checked=checked, max_error=float(mismatches)
    )


def check_trees(net: Network, points, tol: float) -> List[PropertyResult]:
    ff = as_feedforward(net)
    flat = [vec(x) for x in points]
    outputs, _ = forward_batch(ff, np.stack(flat))
    results = []
    lazy = build_mrt(ff, mode="lazy")
    worst = max(relative_error(mrt_eval(lazy, x), out) for x, out in zip(flat, outputs))
    results.append(PropertyResult(name="lazy_tree_equals_forward", passed=worst <= tol, checked=len(flat), max_error=worst))

    if 2 ** ff.hidden_neuron_count > get_settings().max_leaves:
        results.append(
            PropertyResult(
                name="tree_equals_forward", passed=False, checked=0, skipped=True,
                detail=f"{ff.hidden_neuron_count} hidden neurons exceed the leaf budget",
            )
        )
        return results
    tree = build_mrt(ff, mode="materialize")
    worst = max(relative_error(mrt_eval(tree, x), out) for x, out in zip(flat, outputs))
    results.append(PropertyResult(name="tree_equals_forward", passed=worst <= tol, checked=len(flat), max_error=worst))
    return results


def check_shap(net: Network, points, tol: float) -> PropertyResult:
    ff = as_feedforward(net)
    if ff.input_dim > SHAP_MAX_FEATURES:
        return PropertyResult(
            name="shap_global_equals_bruteforce", passed=False, checked=0, skipped=True,
            detail=f"{ff.input_dim} features exceed {SHAP_MAX_FEATURES}",
        )
    pairs = list(zip(points, points[1:]))[:SHAP_MAX_CHECKS]
    worst = 0.0
    for x, baseline in pairs:
        exact = shap_global(net, x, baseline)
        oracle = shap_bruteforce(net, x, baseline)
        outputs, _ = forward_batch(ff, np.stack([vec(x), vec(baseline)]))
        worst = max(
            worst,
            relative_error(exact.values, oracle.values),
            relative_error(exact.totals(), outputs[0] - outputs[1]),
        )
    return PropertyResult(name="shap_global_equals_bruteforce", passed=worst <= tol, checked=len(pairs), max_error=worst)


def run_verify(net: Network, samples: int, seed: int, tol: float) -> VerifyReport:
    """Run every property on ``samples`` seeded standard-normal inputs"""
    rng = np.random.default_rng(seed)
    points = [rng.normal(size=net.input_shape) for _ in range(samples)]
    properties = [check_decomposition(net, points, tol), check_regions(net, points)]
    properties.extend(check_trees(net, points, tol))
    properties.append(check_shap(net, points, tol))
    for prop in properties:
        logger.info("%s: %s (max error %.3e over %d)", prop.name,
                    "skipped" if prop.skipped else ("pass" if prop.passed else "FAIL"),
                    prop.max_error, prop.checked)
    return VerifyReport(family=net.family, samples=samples, seed=seed, tolerance=tol, properties=properties)


def handle_verify(args: Namespace) -> Tuple[str, int]:
    net = load_model(args.model)
    report = run_verify(net, args.samples, args.seed, args.tol)
    result = make_result("verify_report", report.model_dump(), model_hash(args.model), seed=args.seed)
    return dump_result(result), 0 if report.passed else 2
