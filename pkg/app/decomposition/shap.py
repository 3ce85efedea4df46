"""
Exact SHAP values of ReLU networks from their local linear models, plus a brute-force oracle
"""
import logging
from math import factorial
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np

from app.config import get_settings
from app.decomposition.networks import Network, as_feedforward, check_input, forward_batch
from app.decomposition.unwrap import unwrap_feedforward
from app.schemas.network_schemas import ActivationPattern, FeedforwardNetwork, LocalLinearModel
from app.schemas.result_schemas import Attribution, CoalitionMask
from app.utils.errors import CapExceededError, InputError, PreconditionError
from app.utils.linalg import vec
from app.utils.storage import InMemoryModelCache, ModelCache

logger = logging.getLogger(__name__)

Coalition = Union[CoalitionMask, Iterable[int]]


def masked_input(x, baseline, coalition: Coalition) -> np.ndarray:
    """Keep x on the coalition, baseline everywhere else"""
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if x.shape != baseline.shape:
        raise InputError(f"input {x.shape} and baseline {baseline.shape} differ in shape")
    included = coalition.included if isinstance(coalition, CoalitionMask) else frozenset(coalition)
    keep = np.zeros(x.shape[0], dtype=bool)
    keep[list(included)] = True
    return np.where(keep, x, baseline)


def shapley_weight(n: int, size: int) -> float:
    """|S|! (n - |S| - 1)! / n!"""
    return factorial(size) * factorial(n - size - 1) / factorial(n)


def coalition_masks(n: int) -> np.ndarray:
    """Row t is the coalition whose bit k is set iff feature k is kept"""
    return ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)


def _flatten(net: Network, x, baseline) -> Tuple[FeedforwardNetwork, np.ndarray, np.ndarray]:
    x = vec(check_input(net, x))
    baseline = vec(check_input(net, baseline))
    return as_feedforward(net), x, baseline


def _check_cap(n: int, max_features: Optional[int]) -> Tuple[int, bool]:
    cap = max_features if max_features is not None else get_settings().max_shap_features
    return cap, n <= cap


def shap_bruteforce(net: Network, x, baseline, max_features: Optional[int] = None) -> Attribution:
    """Shapley values of v(S) = f(masked_input(x, baseline, S)) by full coalition enumeration"""
    ff, x, baseline = _flatten(net, x, baseline)
    n = x.shape[0]
    cap, within = _check_cap(n, max_features)
    if not within:
        raise CapExceededError(f"brute-force SHAP refused: {n} features exceed cap {cap}", cap=cap)

    masks = coalition_masks(n)
    values, _ = forward_batch(ff, np.where(masks, x, baseline))
    sizes = masks.sum(axis=1)
    weights = np.array([shapley_weight(n, s) for s in range(n)])
    subsets = np.arange(2**n)

    phi = np.zeros((n, values.shape[1]))
    for i in range(n):
        bit = 1 << i
        without = subsets[(subsets & bit) == 0]
        marginals = values[without | bit] - values[without]
        phi[i] = (weights[sizes[without]][:, None] * marginals).sum(axis=0)
    return Attribution(values=phi, input=x, baseline=baseline, mode="bruteforce", stats={"evaluations": 2**n})


def shap_local(
    net: Network,
    x,
    baseline,
    max_features: Optional[int] = None,
    check_samples: Optional[int] = None,
    seed: int = 0,
) -> Attribution:
    """phi_ij = w_ji (x_i - baseline_i), valid when every masked point shares x's region"""
    ff, x, baseline = _flatten(net, x, baseline)
    n = x.shape[0]
    _, own_bits = forward_batch(ff, x[None, :])
    pattern = ActivationPattern.from_flat(own_bits[0], ff.pattern_shapes)
    model = unwrap_feedforward(ff, pattern)

    cap, exact = _check_cap(n, max_features)
    if exact:
        masks = coalition_masks(n)
    else:
        count = check_samples or get_settings().local_check_samples
        masks = np.random.default_rng(seed).random((count, n)) < 0.5
        logger.warning("local SHAP precondition checked on %d sampled coalitions (n=%d > cap %d)", count, n, cap)

    _, bits = forward_batch(ff, np.where(masks, x, baseline))
    violations = int(np.any(bits != pattern.flat(), axis=1).sum())
    if violations:
        raise PreconditionError(
            f"{violations} masked inputs leave the activation region of x; use global mode",
            violations=violations,
        )
    values = (model.weight * (x - baseline)).T
    return Attribution(
        values=values,
        input=x,
        baseline=baseline,
        mode="local",
        approximate=not exact,
        stats={"checked_coalitions": int(masks.shape[0])},
    )


def _models_for(
    ff: FeedforwardNetwork, bits: np.ndarray, cache: ModelCache
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct-pattern weights/biases and, per row, the index of its pattern"""
    index: Dict[bytes, int] = {}
    rows = np.empty(bits.shape[0], dtype=np.int64)
    models = []
    for r, row in enumerate(bits):
        key = row.tobytes()
        if key not in index:
            pattern = ActivationPattern.from_flat(row, ff.pattern_shapes)
            model: LocalLinearModel = cache.get_or_compute(pattern, lambda p: unwrap_feedforward(ff, p))
            index[key] = len(models)
            models.append(model)
        rows[r] = index[key]
    weights = np.stack([m.weight for m in models])
    biases = np.stack([m.bias for m in models])
    return weights, biases, rows


def _marginal(w_a, b_a, w_b, b_b, x_s, x_bar_s, in_s, i) -> np.ndarray:
    """Marginal contribution of feature i written with the two regions' local models.

    ``x_s`` keeps S and i, ``x_bar_s`` keeps S only; leading axis is the coalition.
    """
    out_s = ~in_s
    out_s[:, i] = False
    diff = w_a - w_b
    return (
        b_a
        - b_b
        + w_a[:, :, i] * x_s[:, i, None]
        - w_b[:, :, i] * x_bar_s[:, i, None]
        + np.einsum("smk,sk->sm", diff, x_s * in_s)
        + np.einsum("smk,sk->sm", diff, x_bar_s * out_s)
    )


def shap_global(
    net: Network,
    x,
    baseline,
    max_features: Optional[int] = None,
    sample: Optional[int] = None,
    seed: int = 0,
    cache: Optional[ModelCache] = None,
) -> Attribution:
    """Shapley values assembled from the local models of every masked point's region.

    Exact up to the feature cap; beyond it ``sample`` seeded random permutations
    are averaged and the result is flagged approximate.
    """
    if sample is not None and sample < 1:
        raise InputError(f"sample must be a positive permutation count, got {sample}", field="sample")
    ff, x, baseline = _flatten(net, x, baseline)
    n = x.shape[0]
    cache = cache if cache is not None else InMemoryModelCache()
    cap, exact = _check_cap(n, max_features)
    if not exact and sample is None:
        raise CapExceededError(
            f"exact global SHAP refused: {n} features exceed cap {cap}; pass a sample count",
            cap=cap,
        )

    if exact:
        phi, points = _global_exact(ff, x, baseline, cache)
    else:
        phi, points = _global_sampled(ff, x, baseline, cache, sample, seed)
        logger.warning("global SHAP estimated from %d permutations", sample)

    stats = dict(cache.stats(), points=points)
    logger.info("global SHAP: %d points, %d unwrap calls", points, stats["unwrap_calls"])
    return Attribution(
        values=phi, input=x, baseline=baseline, mode="global", approximate=not exact, stats=stats
    )


def _global_exact(ff, x, baseline, cache) -> Tuple[np.ndarray, int]:
    n = x.shape[0]
    masks = coalition_masks(n)
    points = np.where(masks, x, baseline)
    _, bits = forward_batch(ff, points)
    weights, biases, rows = _models_for(ff, bits, cache)
    sizes = masks.sum(axis=1)
    kernel = np.array([shapley_weight(n, s) for s in range(n)])
    subsets = np.arange(2**n)

    phi = np.zeros((n, biases.shape[1]))
    for i in range(n):
        bit = 1 << i
        without = subsets[(subsets & bit) == 0]
        with_i = without | bit
        a, b = rows[with_i], rows[without]
        delta = _marginal(
            weights[a], biases[a], weights[b], biases[b],
            points[with_i], points[without], masks[without].copy(), i,
        )
        phi[i] = (kernel[sizes[without]][:, None] * delta).sum(axis=0)
    return phi, points.shape[0]


def _global_sampled(ff, x, baseline, cache, permutations: int, seed: int) -> Tuple[np.ndarray, int]:
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    phi = np.zeros((n, ff.output_dim))
    evaluated = 0
    for _ in range(permutations):
        order = rng.permutation(n)
        # chain[t] keeps the first t features of the permutation
        chain = np.zeros((n + 1, n), dtype=bool)
        for t, feature in enumerate(order, 1):
            chain[t] = chain[t - 1]
            chain[t, feature] = True
        points = np.where(chain, x, baseline)
        _, bits = forward_batch(ff, points)
        weights, biases, rows = _models_for(ff, bits, cache)
        evaluated += n + 1
        for t, feature in enumerate(order):
            a, b = rows[t + 1 : t + 2], rows[t : t + 1]
            delta = _marginal(
                weights[a], biases[a], weights[b], biases[b],
                points[t + 1 : t + 2], points[t : t + 1], chain[t : t + 1].copy(), feature,
            )
            phi[feature] += delta[0]
    return phi / permutations, evaluated
