"""Ready-made experiment configurations and grid expansion for sweeps."""
import itertools
from typing import Any, Iterable

from .config import DatasetSpec, ExperimentConfig, update_config
from .types_ import Algorithm, Variant


def optdigits(path: str = 'data/optdigits.csv',
              algorithm: Algorithm = 'DEC',
              variant: Variant = 'brb',
              scenario: int = 2,
              seeds: Iterable[int] = (0, 1, 2),
              augment: bool = True) -> ExperimentConfig:
    """8x8 grayscale digits, 5620 samples, 10 classes, last CSV column is the label."""
    return ExperimentConfig.model_validate({
        'label': f'optdigits-{algorithm}-{variant}',
        'dataset': DatasetSpec(kind='csv', name='optdigits', path=path,
                               label_column=-1, height=8, width=8, channels=1),
        'algorithm': algorithm,
        'scenario': scenario,
        'brb': {'variant': variant, 'alpha': 0.8, 'interval': 20},
        'augmentation': {'enabled': augment, 'max_translation': 1, 'max_rotation': 16.0},
        'seeds': list(seeds),
    })


def overlapping_blobs(algorithm: Algorithm = 'DCN',
                      variant: Variant = 'brb',
                      seeds: Iterable[int] = range(5),
                      clustering_epochs: int = 60,
                      interval: int = 10) -> ExperimentConfig:
    """Five overlapping 10-d blobs trained from scratch with a small network."""
    return ExperimentConfig.model_validate({
        'label': f'blobs-{algorithm}-{variant}',
        'dataset': DatasetSpec(kind='blobs', name='overlapping-blobs', k=5, n_per_cluster=200,
                               dim=10, separation=3.0, spread=1.2, blob_seed=7),
        'algorithm': algorithm,
        'scenario': 2,
        'hidden_dims': [64, 32],
        'batch_size': 128,
        'clustering_epochs': clustering_epochs,
        'brb': {'variant': variant, 'interval': interval,
                'recluster': {'subsample': 1000}},
        'seeds': list(seeds),
    })


def expand_grid(base: ExperimentConfig, grid: dict[str, list[Any]]) -> list[ExperimentConfig]:
    """
    One config per point of the cartesian product of ``grid``.

    Keys are dotted config paths (``brb.alpha``); each variant's label records its values.
    """
    keys = list(grid)
    configs = []
    for values in itertools.product(*(grid[key] for key in keys)):
        changes = dict(zip(keys, values))
        suffix = ','.join(f'{key}={value}' for key, value in changes.items())
        changes['label'] = f'{base.run_label}[{suffix}]' if suffix else base.run_label
        configs.append(update_config(base, changes))
    return configs
