"""
Tests for the synthetic monitor entity graph generator.
"""

import logging
import os
import sys

import numpy as np
import pytest

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from conftest import SMALL_GENERATOR
from modules.errors import InfeasibleConfigError
from modules.graph_generator import GeneratorConfig, generate_synthetic
from modules.monitor_graph import (
    DIMENSION,
    METRIC,
    METRIC_DIMENSION,
    MONITOR,
    MONITOR_DIMENSION,
    MONITOR_METRIC,
    closure_violations,
    strict_subset_fraction,
)


def _config(**overrides):
    return GeneratorConfig(**dict(SMALL_GENERATOR, **overrides))


def test_same_config_same_graph():
    assert generate_synthetic(_config()) == generate_synthetic(_config())


def test_seed_changes_graph():
    a = generate_synthetic(_config(seed=1))
    b = generate_synthetic(_config(seed=2))
    assert a != b


def test_counts_and_names():
    cfg = _config(n_monitors=200, n_metrics=60, n_dimensions=120, n_groups=10, n_teams=5)
    g = generate_synthetic(cfg)
    assert g.counts == {MONITOR: 200, METRIC: 60, DIMENSION: 120}
    assert g.features is None
    assert g.names[MONITOR][0].startswith("svc")
    assert "-monitor-0" in g.names[MONITOR][0]
    assert g.names[DIMENSION][7].endswith("-7")


def test_closure_holds():
    g = generate_synthetic(_config(n_monitors=200, n_metrics=60, n_dimensions=120, n_groups=10, n_teams=5))
    assert closure_violations(g) == 0


def test_every_metric_emits_two_dimensions():
    g = generate_synthetic(_config())
    assert g.degree(METRIC_DIMENSION, "src").min() >= 2
    assert g.degree(MONITOR_METRIC, "src").min() >= 1


def test_strict_subset_share():
    g = generate_synthetic(_config(n_monitors=200, n_metrics=60, n_dimensions=120, n_groups=10, n_teams=5))
    fraction = strict_subset_fraction(g)
    assert 0.85 <= fraction < 1.0


def test_every_monitor_uses_a_dimension():
    g = generate_synthetic(_config())
    assert g.degree(MONITOR_DIMENSION, "src").min() >= 1


def test_keep_everything_when_no_strict_subsets():
    g = generate_synthetic(_config(strict_subset_fraction=0.0))
    assert strict_subset_fraction(g) == 0.0
    assert closure_violations(g) == 0


def test_dimension_degrees_have_a_long_tail():
    g = generate_synthetic(_config(n_monitors=200, n_metrics=200, n_dimensions=400, n_groups=10, n_teams=5))
    degrees = g.degree(METRIC_DIMENSION, "dst")
    assert degrees.max() > 4 * np.median(degrees)


@pytest.mark.parametrize("overrides", [
    {"n_monitors": 0},
    {"power_law_exponent": 1.0},
    {"subset_ratio": 0.0},
    {"strict_subset_fraction": 1.5},
    {"mean_dims_per_metric": 100.0},
    {"n_groups": 50},
    {"groups_per_team": 5},
])
def test_infeasible_configs(overrides):
    with pytest.raises(InfeasibleConfigError):
        _config(**overrides)


def test_unreachable_degree_cap():
    with pytest.raises(InfeasibleConfigError):
        generate_synthetic(_config(max_dimension_degree=1, mean_dims_per_metric=10.0))


def test_presets():
    production = GeneratorConfig.production()
    assert (production.n_monitors, production.n_metrics, production.n_dimensions) == (18291, 4623, 8356)
    scaled = GeneratorConfig.scaling(1000)
    assert scaled.max_dimension_degree == 50
    assert scaled.n_metrics == 250
    assert GeneratorConfig.desk(seed=3).seed == 3
