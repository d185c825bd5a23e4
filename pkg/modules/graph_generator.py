import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from modules.errors import InfeasibleConfigError
from modules.monitor_graph import (
    DIMENSION,
    METRIC,
    METRIC_DIMENSION,
    MONITOR,
    MONITOR_DIMENSION,
    MONITOR_METRIC,
    MonitorEntityGraph,
    build_graph,
)
from modules.random_streams import make_rng
from modules.settings import ConfigMixin

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@dataclass
class GeneratorConfig(ConfigMixin):
    """
    Knobs of the synthetic monitor entity graph.

    Teams own monitors and metrics and prefer a few correlation groups of
    dimensions. Dimensions lean towards metrics of teams that prefer their
    group, and monitors pick their used dimensions from their team's
    preferred groups first with probability ``long_range_strength``.
    """

    n_monitors: int = 2000
    n_metrics: int = 500
    n_dimensions: int = 900
    power_law_exponent: float = 2.1
    mean_dims_per_metric: float = 8.0
    mean_metrics_per_monitor: float = 2.0
    # Mean fraction of emitted dimensions a strict-subset monitor keeps (Beta distributed)
    subset_ratio: float = 0.4
    subset_concentration: float = 4.0
    strict_subset_fraction: float = 0.94
    n_groups: int = 30
    n_teams: int = 20
    groups_per_team: int = 3
    team_affinity: float = 5.0
    team_metric_share: float = 0.8
    long_range_strength: float = 0.9
    max_dimension_degree: Optional[int] = None
    d_feat: int = 32
    seed: int = 7

    def __post_init__(self):
        for name in ("n_monitors", "n_metrics", "n_dimensions", "n_groups", "n_teams", "groups_per_team", "d_feat"):
            if int(getattr(self, name)) < 1:
                raise InfeasibleConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.power_law_exponent <= 1.0:
            raise InfeasibleConfigError(f"power_law_exponent must be > 1, got {self.power_law_exponent}")
        if not 0.0 < self.subset_ratio <= 1.0:
            raise InfeasibleConfigError(f"subset_ratio must be in (0, 1], got {self.subset_ratio}")
        for name in ("strict_subset_fraction", "long_range_strength", "team_metric_share"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InfeasibleConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.n_dimensions < 2:
            raise InfeasibleConfigError("At least 2 dimensions are needed so every metric can emit 2")
        if self.mean_dims_per_metric > self.n_dimensions:
            raise InfeasibleConfigError(
                f"mean_dims_per_metric ({self.mean_dims_per_metric}) exceeds n_dimensions ({self.n_dimensions})"
            )
        if self.mean_metrics_per_monitor < 1 or self.mean_metrics_per_monitor > self.n_metrics:
            raise InfeasibleConfigError(
                f"mean_metrics_per_monitor must be in [1, n_metrics], got {self.mean_metrics_per_monitor}"
            )
        if self.n_groups > self.n_dimensions:
            raise InfeasibleConfigError(f"n_groups ({self.n_groups}) exceeds n_dimensions ({self.n_dimensions})")
        if self.groups_per_team > self.n_groups:
            raise InfeasibleConfigError(f"groups_per_team ({self.groups_per_team}) exceeds n_groups ({self.n_groups})")
        if self.max_dimension_degree is not None and self.max_dimension_degree < 1:
            raise InfeasibleConfigError("max_dimension_degree must be positive when set")

    @classmethod
    def desk(cls, **overrides) -> "GeneratorConfig":
        return cls().replace(**overrides)

    @classmethod
    def production(cls, **overrides) -> "GeneratorConfig":
        base = cls(
            n_monitors=18291,
            n_metrics=4623,
            n_dimensions=8356,
            mean_dims_per_metric=23.6,
            mean_metrics_per_monitor=2.85,
            n_groups=250,
            n_teams=150,
            d_feat=64,
        )
        return base.replace(**overrides)

    @classmethod
    def scaling(cls, n_monitors: int, **overrides) -> "GeneratorConfig":
        """Bounded-degree config whose other counts grow with ``n_monitors``."""
        n_metrics = max(10, n_monitors // 4)
        n_dims = max(20, (9 * n_monitors) // 20)
        base = cls(
            n_monitors=n_monitors,
            n_metrics=n_metrics,
            n_dimensions=n_dims,
            n_groups=max(2, n_dims // 30),
            n_teams=max(2, n_monitors // 100),
            max_dimension_degree=50,
        )
        return base.replace(**overrides)


def _power_law_degrees(
    n: int,
    exponent: float,
    target_mean: float,
    cap: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Integer degrees with a power-law tail and a prescribed mean.

    Draws x = floor(s * u^(-1/(exponent-1)) + 0.5) clipped to [1, cap] and
    bisects the scale s until the sample mean matches ``target_mean``.
    """
    u = 1.0 - rng.random(n)
    base = u ** (-1.0 / (exponent - 1.0))

    def degrees_at(scale: float) -> np.ndarray:
        return np.clip(np.floor(scale * base + 0.5), 1, cap).astype(np.int64)

    if degrees_at(float(cap)).mean() < target_mean:
        raise InfeasibleConfigError(
            f"Mean dimension degree {target_mean:.2f} is unreachable with at most {cap} metrics per dimension"
        )
    if target_mean <= 1.0:
        logger.warning(f"Target mean dimension degree {target_mean:.2f} <= 1; every dimension gets a single metric")
        return np.ones(n, dtype=np.int64)

    low, high = 1e-6, float(cap)
    for _ in range(80):
        mid = 0.5 * (low + high)
        if degrees_at(mid).mean() < target_mean:
            low = mid
        else:
            high = mid
    return degrees_at(high)


def _assign_teams(n: int, n_teams: int, rng: np.random.Generator) -> np.ndarray:
    teams = np.arange(n) % n_teams
    return teams[rng.permutation(n)]


def generate_synthetic(cfg: GeneratorConfig) -> MonitorEntityGraph:
    """
    Generate a monitor entity graph with the structure seen in real monitor fleets.

    Dimension degrees on metric_has_dimension follow a power law. Each
    monitor's dimensions are drawn from the union of its metrics' dimensions
    (closure); a ``strict_subset_fraction`` share of monitors keep a strict
    subset, chosen group by group so co-usage is bimodal.

    Args:
        cfg: generator configuration

    Returns:
        MonitorEntityGraph without features; same cfg gives an identical graph

    Raises:
        InfeasibleConfigError: when the counts cannot realise the requested degrees
    """
    n_m, n_k, n_d = cfg.n_monitors, cfg.n_metrics, cfg.n_dimensions

    # Teams, groups and preferences
    monitor_team = _assign_teams(n_m, cfg.n_teams, make_rng(cfg.seed, "generator", "monitor-teams"))
    metric_team = _assign_teams(n_k, cfg.n_teams, make_rng(cfg.seed, "generator", "metric-teams"))
    dim_group = _assign_teams(n_d, cfg.n_groups, make_rng(cfg.seed, "generator", "dimension-groups"))
    pref_rng = make_rng(cfg.seed, "generator", "preferences")
    team_groups = np.stack([
        pref_rng.choice(cfg.n_groups, size=cfg.groups_per_team, replace=False) for _ in range(cfg.n_teams)
    ])
    prefers = np.zeros((cfg.n_teams, cfg.n_groups), dtype=bool)
    for team in range(cfg.n_teams):
        prefers[team, team_groups[team]] = True

    # metric_has_dimension: power-law dimension degrees
    cap = n_k if cfg.max_dimension_degree is None else min(n_k, cfg.max_dimension_degree)
    target_mean = cfg.mean_dims_per_metric * n_k / n_d
    dim_degree = _power_law_degrees(n_d, cfg.power_law_exponent, target_mean, cap, make_rng(cfg.seed, "generator", "degrees"))

    kd_rng = make_rng(cfg.seed, "generator", "metric-dimension")
    metric_dims: List[set] = [set() for _ in range(n_k)]
    for d in range(n_d):
        weights = 1.0 + cfg.team_affinity * prefers[metric_team, dim_group[d]]
        chosen = kd_rng.choice(n_k, size=int(dim_degree[d]), replace=False, p=weights / weights.sum())
        for k in chosen:
            metric_dims[int(k)].add(d)

    # Every metric emits at least two dimensions, topped up from its team's groups
    for k in range(n_k):
        while len(metric_dims[k]) < 2:
            preferred = np.flatnonzero(prefers[metric_team[k], dim_group])
            pool = preferred if kd_rng.random() < 0.8 and preferred.size else np.arange(n_d)
            metric_dims[k].add(int(pool[kd_rng.integers(pool.size)]))

    # monitor_emits_metric
    mk_rng = make_rng(cfg.seed, "generator", "monitor-metric")
    metrics_by_team = [np.flatnonzero(metric_team == t) for t in range(cfg.n_teams)]
    monitor_metrics: List[np.ndarray] = []
    for m in range(n_m):
        count = int(min(n_k, 1 + mk_rng.poisson(cfg.mean_metrics_per_monitor - 1.0)))
        own = metrics_by_team[monitor_team[m]]
        chosen: set = set()
        while len(chosen) < count:
            if own.size and mk_rng.random() < cfg.team_metric_share:
                chosen.add(int(own[mk_rng.integers(own.size)]))
            else:
                chosen.add(int(mk_rng.integers(n_k)))
        monitor_metrics.append(np.array(sorted(chosen), dtype=np.int64))

    # monitor_associated_with_dimension: closure-respecting subset selection
    md_rng = make_rng(cfg.seed, "generator", "monitor-dimension")
    alpha = cfg.subset_ratio * cfg.subset_concentration
    beta = (1.0 - cfg.subset_ratio) * cfg.subset_concentration
    md_edges = []
    for m in range(n_m):
        emitted = np.array(sorted(set().union(*(metric_dims[int(k)] for k in monitor_metrics[m]))), dtype=np.int64)
        keep_all = cfg.subset_ratio >= 1.0 or md_rng.random() >= cfg.strict_subset_fraction
        if keep_all:
            used = emitted
        else:
            ratio = md_rng.beta(alpha, beta) if beta > 0 else 1.0
            size = int(np.clip(np.floor(ratio * emitted.size + 0.5), 1, emitted.size - 1))
            used = _pick_by_groups(emitted, dim_group, prefers[monitor_team[m]], size, cfg.long_range_strength, md_rng)
        md_edges.extend((m, int(d)) for d in used)

    names = {
        MONITOR: [f"svc{monitor_team[m]}-monitor-{m}" for m in range(n_m)],
        METRIC: [f"svc{metric_team[k]}-metric-{k}" for k in range(n_k)],
        DIMENSION: [f"dim-g{dim_group[d]}-{d}" for d in range(n_d)],
    }
    edges = {
        MONITOR_DIMENSION: np.array(md_edges, dtype=np.int64).reshape(-1, 2),
        METRIC_DIMENSION: np.array([(k, d) for k in range(n_k) for d in sorted(metric_dims[k])], dtype=np.int64).reshape(-1, 2),
        MONITOR_METRIC: np.array([(m, int(k)) for m in range(n_m) for k in monitor_metrics[m]], dtype=np.int64).reshape(-1, 2),
    }
    g = build_graph(names, edges, seed=cfg.seed)
    logger.info(f"Generated synthetic graph: {g}")
    return g


def _pick_by_groups(
    emitted: np.ndarray,
    dim_group: np.ndarray,
    team_prefers: np.ndarray,
    size: int,
    long_range_strength: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fill ``size`` slots with whole correlation groups; the last group may be cut."""
    groups: Dict[int, List[int]] = {}
    for d in emitted:
        groups.setdefault(int(dim_group[d]), []).append(int(d))
    order = list(rng.permutation(sorted(groups)))
    if rng.random() < long_range_strength:
        order = [gid for gid in order if team_prefers[gid]] + [gid for gid in order if not team_prefers[gid]]

    picked: List[int] = []
    for gid in order:
        members = groups[int(gid)]
        room = size - len(picked)
        if room <= 0:
            break
        if len(members) <= room:
            picked.extend(members)
        else:
            picked.extend(int(d) for d in rng.choice(members, size=room, replace=False))
    return np.array(sorted(picked), dtype=np.int64)
