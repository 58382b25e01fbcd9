"""
Runtime Factory
Creates and configures an experiment runtime for one command invocation
"""
import logging
from dataclasses import dataclass, field

from orbitsym.config import ExperimentConfig, get_config
from orbitsym.extensions import SeedStreams, configure_logging, init_error_reporting

__version__ = "1.0.0"

logger = logging.getLogger(__name__)


@dataclass
class Runtime:
    """Validated config, its seed streams and where each value came from"""
    cfg: ExperimentConfig
    streams: SeedStreams
    provenance: dict = field(default_factory=dict)


def create_runtime(config_path=None, overrides=None, seed=None, out_dir=None, task=None, log_level=None):
    """
    Runtime factory pattern.
    Layers task defaults, the JSON config file, --set overrides, then
    --seed and --out, logging where every non-default value came from.
    """
    configure_logging(log_level)
    init_error_reporting()

    provenance = {}
    if config_path:
        cfg = ExperimentConfig.load(config_path, provenance=provenance)
    else:
        cfg = ExperimentConfig.for_task(task or get_config().TASK)
    if task and cfg.task != task:
        cfg.set("task", task, source="--task", provenance=provenance)

    cfg.apply_overrides(overrides, provenance=provenance)
    if seed is not None:
        cfg.set("seed", seed, source="--seed", provenance=provenance)
    if out_dir is not None:
        cfg.set("out_dir", out_dir, source="--out", provenance=provenance)
    cfg.validate()

    for key, source in sorted(provenance.items()):
        logger.info("config %s set from %s", key, source)
    logger.info("runtime ready: task=%s method=%s group=%s seed=%d", cfg.task, cfg.method, cfg.group, cfg.seed)
    return Runtime(cfg=cfg, streams=SeedStreams(cfg.seed), provenance=provenance)


__all__ = ["Runtime", "create_runtime", "__version__"]
