import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from app.decomposition.networks import pattern_of, random_feedforward, random_gcn
from app.decomposition.regions import (
    enumerate_regions,
    find_witness,
    grid_census,
    membership,
    region_halfspaces,
    slack,
)
from app.decomposition.unwrap import partial_models
from app.schemas.network_schemas import ActivationPattern, Box, HalfSpace, RegionDescription
from app.utils.errors import CapExceededError, InputError


def _box(dim, radius=1.0):
    return Box(low=-radius * np.ones(dim), high=radius * np.ones(dim))


def _generic(net, x, margin=1e-6):
    """No hidden pre-activation within ``margin`` of zero"""
    region = region_halfspaces(net, pattern_of(net, x))
    return slack(region.halfspaces, x) > margin


def test_quadrant_halfspaces(quadrant_net):
    pattern = ActivationPattern(per_layer=([1, 0],))
    region = region_halfspaces(quadrant_net, pattern)
    assert [h.normal.tolist() for h in region.halfspaces] == [[1.0, 0.0], [-0.0, -1.0]]
    assert [h.offset for h in region.halfspaces] == [0.0, 0.0]
    assert region.neurons == ((0, 0), (0, 1))
    assert membership(region, [1.0, -1.0])
    assert not membership(region, [1.0, 1.0])


def test_all_ones_normals_are_unmasked_partial_products(rng):
    net = random_feedforward([3, 4, 3, 1], seed=rng)
    pattern = ActivationPattern(per_layer=tuple(np.ones(s, dtype=np.int8) for s in net.pattern_shapes))
    region = region_halfspaces(net, pattern)
    w0, w1 = net.layers[0].weight, net.layers[1].weight
    normals = np.array([h.normal for h in region.halfspaces])
    np.testing.assert_allclose(normals[:4], w0, rtol=1e-12)
    np.testing.assert_allclose(normals[4:], w1 @ w0, rtol=1e-12)
    layers = [(layer.weight, layer.bias) for layer in net.hidden_layers]
    _, partial_bias = partial_models(layers, pattern.per_layer)[1]
    offsets = np.array([h.offset for h in region.halfspaces])
    np.testing.assert_allclose(offsets[4:], w1 @ partial_bias + net.layers[1].bias, rtol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_membership_agrees_with_forward(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 5))
    widths = [int(w) for w in rng.integers(2, 7, size=int(rng.integers(1, 4)))]
    net = random_feedforward([dim] + widths + [1], seed=rng)
    mismatches = 0
    checked = 0
    for x, y in rng.normal(size=(500, 2, dim)):
        if not (_generic(net, x) and _generic(net, y)):
            continue
        checked += 1
        pattern = pattern_of(net, x)
        region = region_halfspaces(net, pattern)
        mismatches += not membership(region, x)
        mismatches += membership(region, y) != (pattern_of(net, y) == pattern)
    assert checked > 400
    assert mismatches == 0


def test_membership_of_empty_intersection_is_everything():
    region = RegionDescription(halfspaces=(), pattern=ActivationPattern(per_layer=()))
    assert membership(region, [3.0, -7.0])


def test_membership_is_strict():
    region = RegionDescription(
        halfspaces=(HalfSpace(normal=[1.0], offset=0.0),),
        pattern=ActivationPattern(per_layer=([1],)),
        input_dim=1,
    )
    assert membership(region, [1.0])
    assert not membership(region, [0.0])


def test_degenerate_halfspace_uses_offset():
    assert HalfSpace(normal=[0.0, 0.0], offset=1.0).holds(np.zeros(2))
    assert not HalfSpace(normal=[0.0, 0.0], offset=0.0).holds(np.zeros(2))


def test_inactive_degenerate_halfspace_holds_at_zero_offset():
    silenced = HalfSpace(normal=[0.0, 0.0], offset=-0.0, inclusive=True)
    assert silenced.holds(np.array([0.3, -0.2]))
    assert slack([silenced], np.zeros(2)) == np.inf
    assert find_witness([silenced], _box(2), eps=1e-7) is not None
    assert not HalfSpace(normal=[0.0, 0.0], offset=-1.0, inclusive=True).holds(np.zeros(2))


def test_silenced_neuron_keeps_its_region(stacked_identity_net):
    x = np.array([-0.5, 0.5])
    region = region_halfspaces(stacked_identity_net, pattern_of(stacked_identity_net, x))
    assert region.pattern.bitstring() == "0101"
    assert region.halfspaces[2].degenerate and region.halfspaces[2].inclusive
    assert membership(region, x)
    assert not membership(region, np.array([0.5, 0.5]))


def test_exhaustive_finds_regions_with_silenced_neurons(stacked_identity_net):
    box = _box(2)
    exhaustive = enumerate_regions(stacked_identity_net, box, strategy="exhaustive")
    sampled = enumerate_regions(stacked_identity_net, box, strategy="sample", count=500, seed=0)
    expected = {"0000", "0101", "1010", "1111"}
    assert {region.pattern.bitstring() for region in exhaustive.regions} == expected
    assert {region.pattern.bitstring() for region in sampled.regions} == expected
    assert exhaustive.rejected_witnesses == 0


def test_region_halfspaces_needs_feedforward():
    net = random_gcn(2, [2, 2], seed=0)
    with pytest.raises(InputError):
        region_halfspaces(net, pattern_of(net, np.ones((2, 2))))


def test_find_witness_reports_empty_intersection():
    halfspaces = [HalfSpace(normal=[1.0], offset=0.0), HalfSpace(normal=[-1.0], offset=0.0)]
    assert find_witness(halfspaces, _box(1), eps=1e-7) is None
    witness = find_witness(halfspaces[:1], _box(1), eps=1e-7)
    assert witness[0] > 0


def test_single_neuron_has_two_regions(single_relu_net):
    census = enumerate_regions(single_relu_net, _box(1), strategy="exhaustive")
    assert len(census.regions) == 2
    signs = sorted(np.sign(region.witness[0]) for region in census.regions)
    assert signs == [-1.0, 1.0]


def test_identity_layer_has_four_quadrants(quadrant_net):
    census = enumerate_regions(quadrant_net, _box(2), strategy="exhaustive")
    assert {region.pattern.bitstring() for region in census.regions} == {"00", "01", "10", "11"}


@pytest.mark.parametrize("seed", range(5))
def test_exhaustive_covers_grid_census(seed):
    rng = np.random.default_rng(seed)
    widths = [int(rng.integers(2, 4)), int(rng.integers(1, 4))]
    net = random_feedforward([2] + widths + [1], seed=rng)
    assert net.hidden_neuron_count <= 6
    box = _box(2, radius=2.0)
    census = enumerate_regions(net, box, strategy="exhaustive")
    grid = grid_census(net, box, steps=400)
    assert grid.pattern_keys() <= census.pattern_keys()
    for region in census.regions:
        assert pattern_of(net, region.witness) == region.pattern
        assert np.all(region.witness >= box.low) and np.all(region.witness <= box.high)


def test_sampled_regions_are_found_exhaustively(rng):
    net = random_feedforward([2, 3, 2, 1], seed=rng)
    box = _box(2)
    sampled = enumerate_regions(net, box, strategy="sample", count=2000, seed=3)
    exhaustive = enumerate_regions(net, box, strategy="exhaustive")
    assert sampled.pattern_keys() <= exhaustive.pattern_keys()
    for region in sampled.regions:
        assert pattern_of(net, region.witness) == region.pattern


def test_regions_are_convex(rng):
    net = random_feedforward([2, 4, 3, 1], seed=rng)
    census = enumerate_regions(net, _box(2), strategy="sample", count=500, seed=1)
    by_key = {}
    for x in rng.uniform(-1, 1, size=(500, 2)):
        if _generic(net, x):
            by_key.setdefault(pattern_of(net, x).key(), []).append(x)
    for region in census.regions:
        points = by_key.get(region.pattern.key(), [])
        description = region_halfspaces(net, region.pattern)
        for a, b in zip(points[:-1], points[1:]):
            for t in np.linspace(0.0, 1.0, 7)[1:-1]:
                assert membership(description, t * a + (1 - t) * b)


def test_exhaustive_refuses_above_cap():
    net = random_feedforward([2, 8, 8, 1], seed=0)
    with pytest.raises(CapExceededError) as info:
        enumerate_regions(net, _box(2), strategy="exhaustive", max_neurons=10)
    assert info.value.context["cap"] == 10


def test_unknown_strategy(quadrant_net):
    with pytest.raises(InputError):
        enumerate_regions(quadrant_net, _box(2), strategy="bisect")


HYPOTHESIS_NET = random_feedforward([2, 4, 3, 1], seed=42)


@given(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_region_of_x_holds_exactly_the_same_pattern_points(x, y):
    x, y = np.array(x), np.array(y)
    assume(_generic(HYPOTHESIS_NET, x) and _generic(HYPOTHESIS_NET, y))
    pattern = pattern_of(HYPOTHESIS_NET, x)
    region = region_halfspaces(HYPOTHESIS_NET, pattern)
    assert membership(region, x)
    assert membership(region, y) == (pattern_of(HYPOTHESIS_NET, y) == pattern)
