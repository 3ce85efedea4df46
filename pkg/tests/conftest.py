"""
Shared fixtures: small hand-built networks, seeded generators, model files
"""
import json

import hypothesis
import numpy as np
import pytest

from app.schemas.network_schemas import FeedforwardLayer, FeedforwardNetwork
from app.utils.model_io import model_to_dict

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.load_profile("default")


def make_feedforward(*layers) -> FeedforwardNetwork:
    """Build a network from (weight, bias) pairs; the last pair is the readout"""
    return FeedforwardNetwork(
        layers=tuple(FeedforwardLayer(weight=w, bias=b) for w, b in layers)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def single_relu_net():
    """f(x) = relu(x)"""
    return make_feedforward(([[1.0]], [0.0]), ([[1.0]], [0.0]))


@pytest.fixture
def quadrant_net():
    """Identity hidden layer on R^2 with readout x1 + x2"""
    return make_feedforward((np.eye(2), np.zeros(2)), ([[1.0, 1.0]], [0.0]))


@pytest.fixture
def write_model(tmp_path):
    """Write a network to a JSON model file and return its path"""

    def write(net, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(model_to_dict(net)))
        return path

    return write


@pytest.fixture
def stacked_identity_net():
    """Two zero-bias identity layers on R^2; a neuron silenced in layer 0 stays silent in layer 1"""
    return make_feedforward(
        (np.eye(2), np.zeros(2)), (np.eye(2), np.zeros(2)), ([[1.0, 1.0]], [0.0])
    )
