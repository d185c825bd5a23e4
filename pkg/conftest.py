"""
Shared fixtures: a hand-built 12-node graph and a small generated graph.
"""

import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from modules.graph_generator import GeneratorConfig, generate_synthetic
from modules.monitor_graph import (
    DIMENSION,
    METRIC,
    METRIC_DIMENSION,
    MONITOR,
    MONITOR_DIMENSION,
    MONITOR_METRIC,
    build_graph,
    init_node_features,
)

# 4 monitors, 3 metrics, 5 dimensions; every monitor keeps a strict subset
TOY_EDGES = {
    METRIC_DIMENSION: np.array([[0, 0], [0, 1], [0, 2], [1, 2], [1, 3], [2, 3], [2, 4]]),
    MONITOR_METRIC: np.array([[0, 0], [1, 0], [1, 1], [2, 1], [2, 2], [3, 2]]),
    MONITOR_DIMENSION: np.array([[0, 0], [0, 1], [1, 1], [1, 3], [2, 2], [2, 4], [3, 3]]),
}

SMALL_GENERATOR = dict(
    n_monitors=60,
    n_metrics=20,
    n_dimensions=40,
    n_groups=4,
    n_teams=3,
    groups_per_team=2,
    mean_dims_per_metric=4.0,
    d_feat=4,
    seed=5,
)


def make_toy_graph(d_feat: int = 3, seed: int = 0):
    g = build_graph({MONITOR: 4, METRIC: 3, DIMENSION: 5}, TOY_EDGES, seed=seed)
    return init_node_features(g, d_feat, seed)


def make_small_graph(**overrides):
    cfg = GeneratorConfig(**dict(SMALL_GENERATOR, **overrides))
    return init_node_features(generate_synthetic(cfg), cfg.d_feat, cfg.seed)


@pytest.fixture
def toy_graph():
    return make_toy_graph()


@pytest.fixture(scope="session")
def small_graph():
    return make_small_graph()
