from .brb import BrbConfig, apply_brb, soft_reset, momentum_reset
from .config import ExperimentConfig, load_config
from .harness import ExperimentRunner, run_suite, timing_report, export_embeddings
from .recluster import ReclusterConfig
from .settings import config_numerics

__all__ = ['BrbConfig', 'ExperimentConfig', 'ExperimentRunner', 'ReclusterConfig', 'apply_brb',
           'config_numerics', 'export_embeddings', 'load_config', 'momentum_reset', 'run_suite',
           'soft_reset', 'timing_report']
