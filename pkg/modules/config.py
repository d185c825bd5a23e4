import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from modules.baselines import BASELINES, BaselineConfig
from modules.errors import ConfigError
from modules.graph_generator import GeneratorConfig
from modules.losses import LossConfig
from modules.model import ModelConfig
from modules.settings import ConfigMixin
from modules.trainer import TrainConfig

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

PRESETS = ("desk", "production")
MODEL_VARIANTS = ("base", "al", "al_rl", "full")
VARIANTS = MODEL_VARIANTS + BASELINES
CANDIDATE_MODES = ("fixed", "pool")


@dataclass
class EvalConfig(ConfigMixin):
    candidates: str = "fixed"
    pool_size: int = 50
    evidence_k: int = 3
    heatmap_nodes: int = 20
    scaling_sizes: Tuple[int, ...] = (1000, 2000, 4000, 8000)
    scaling_epochs: int = 1
    scaling_timeout: Optional[float] = None

    def __post_init__(self):
        self.scaling_sizes = tuple(int(s) for s in self.scaling_sizes)
        if self.candidates not in CANDIDATE_MODES:
            raise ValueError(f"candidates must be one of {CANDIDATE_MODES}, got {self.candidates!r}")
        if self.pool_size < 1 or self.heatmap_nodes < 1 or self.evidence_k < 0:
            raise ValueError("pool_size and heatmap_nodes must be >= 1, evidence_k >= 0")


@dataclass
class AblationConfig(ConfigMixin):
    """Sweep grid. Path settings only vary for variants that use random-walk aggregation."""

    variants: Tuple[str, ...] = ("full",)
    path_lengths: Tuple[int, ...] = (2, 6, 10)
    paths_per_node: Tuple[int, ...] = (5,)
    lambda_al: Tuple[float, ...] = (0.1,)
    seeds: Tuple[int, ...] = (0,)

    def __post_init__(self):
        self.variants = tuple(self.variants)
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ValueError(f"Unknown variant(s) {unknown}; choose from {VARIANTS}")
        self.path_lengths = tuple(int(L) for L in self.path_lengths)
        self.paths_per_node = tuple(int(w) for w in self.paths_per_node)
        self.lambda_al = tuple(float(x) for x in self.lambda_al)
        self.seeds = tuple(int(s) for s in self.seeds)


SECTIONS = {
    "generator": GeneratorConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "ablate": AblationConfig,
    "baseline": BaselineConfig,
}


@dataclass
class RunConfig:
    preset: str = "desk"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig.desk)
    model: ModelConfig = field(default_factory=ModelConfig.desk)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig.desk)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablate: AblationConfig = field(default_factory=AblationConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def to_dict(self) -> Dict[str, Any]:
        data = {"preset": self.preset}
        data.update({name: getattr(self, name).to_dict() for name in SECTIONS})
        return data

    def with_seed(self, seed: int) -> "RunConfig":
        """Same config with ``seed`` driving generation, splitting and training."""
        return RunConfig(
            preset=self.preset,
            generator=self.generator.replace(seed=seed),
            model=self.model,
            loss=self.loss,
            train=self.train.replace(seed=seed),
            eval=self.eval,
            ablate=self.ablate,
            baseline=self.baseline,
        )

    @property
    def seed(self) -> int:
        return self.train.seed


def preset_config(preset: str = "desk") -> RunConfig:
    """
    Built-in presets: "desk" (small graph, small widths) and "production"
    (fleet-scale counts and wider layers).
    """
    if preset == "desk":
        return RunConfig()
    if preset == "production":
        return RunConfig(
            preset="production",
            generator=GeneratorConfig.production(),
            model=ModelConfig.production(),
            loss=LossConfig(),
            train=TrainConfig.production(),
        )
    raise ConfigError(f"Unknown preset '{preset}'; choose from {PRESETS}")


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """
    Overlay a JSON run config on its preset.

    Raises:
        ConfigError: unknown section or key, or an invalid value
    """
    if not isinstance(data, dict):
        raise ConfigError("Run config must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS) - {"preset"})
    if unknown:
        raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}")
    base = preset_config(data.get("preset", "desk"))
    sections = {name: cls.from_dict(data.get(name) or {}, base=getattr(base, name)) for name, cls in SECTIONS.items()}
    return RunConfig(preset=base.preset, **sections)


def load_run_config(path: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    """
    Read a run config file (or the desk preset when ``path`` is None).

    Args:
        path: JSON file with optional "preset" and sections generator/model/loss/train/eval/ablate/baseline
        seed: global seed override

    Returns:
        RunConfig
    """
    if path is None:
        cfg = preset_config("desk")
    else:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as e:
            raise ConfigError(f"Could not read config {path}: {str(e)}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {str(e)}")
        cfg = run_config_from_dict(data)
        logger.info(f"Loaded {cfg.preset} run config from {path}")
    return cfg.with_seed(seed) if seed is not None else cfg


def apply_variant(model_cfg: ModelConfig, loss_cfg: LossConfig, variant: str) -> Tuple[ModelConfig, LossConfig]:
    """
    Route a model variant to its configuration.

    base   - attention layers with BCE only
    al     - adds the attention-alignment loss
    al_rl  - adds the TOP1-max ranking loss
    full   - adds random-walk aggregation and dynamic loss balancing

    Raises:
        ConfigError: unknown variant or a baseline variant
    """
    if variant not in MODEL_VARIANTS:
        raise ConfigError(f"'{variant}' is not a model variant; choose from {MODEL_VARIANTS}")
    use_align = variant != "base"
    use_top1 = variant in ("al_rl", "full")
    full = variant == "full"
    return (
        model_cfg.replace(use_rwa=full),
        loss_cfg.replace(use_align=use_align, use_top1=use_top1, balance=full),
    )


def is_baseline(variant: str) -> bool:
    if variant not in VARIANTS:
        raise ConfigError(f"Unknown variant '{variant}'; choose from {VARIANTS}")
    return variant in BASELINES


def ablation_cells(cfg: AblationConfig) -> List[Dict[str, Any]]:
    """One dict per sweep cell; path settings are None for variants without random-walk aggregation."""
    cells = []
    for seed in cfg.seeds:
        for variant in cfg.variants:
            lambdas = cfg.lambda_al if variant in ("al", "al_rl", "full") else (None,)
            for lambda_al in lambdas:
                if variant == "full":
                    for length in cfg.path_lengths:
                        for per_node in cfg.paths_per_node:
                            cells.append({"variant": variant, "path_length": length, "paths_per_node": per_node,
                                          "lambda_al": lambda_al, "seed": seed})
                else:
                    cells.append({"variant": variant, "path_length": None, "paths_per_node": None,
                                  "lambda_al": lambda_al, "seed": seed})
    return cells
