"""
Experiment configuration.

Config files are flat ``key=value`` text read with python-dotenv. Dotted keys address
nested models (``brb.alpha=0.8``); list fields take comma-separated values
(``hidden_dims=1024,512,256``). Command-line overrides are applied on top of the file.
"""
from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .brb import BrbConfig
from .data import AugmentConfig, Dataset, ImageGeometry, load_dense_csv, make_blobs, z_transform
from .exceptions import ConfigurateException, DataIOException
from .logger import logger
from .numerics import SeededRng
from .objectives import LossWeights
from .types_ import Algorithm, ZMode

LIST_KEYS = frozenset({'hidden_dims', 'seeds'})
NONE_VALUES = frozenset({'', 'none', 'null'})


class DatasetSpec(BaseModel):
    """
    Either a CSV file (``kind=csv``) or synthetic Gaussian blobs (``kind=blobs``).

    Blobs are generated from ``blob_seed`` so every experiment seed sees the same data.
    """
    model_config = ConfigDict(extra='forbid')

    kind: Literal['csv', 'blobs'] = 'blobs'
    name: str | None = None
    path: str | None = None
    label_column: int | None = -1
    height: int | None = Field(default=None, ge=1)
    width: int | None = Field(default=None, ge=1)
    channels: int = Field(default=1, ge=1)
    standardize: bool = True
    z_mode: ZMode | None = None
    k: int = Field(default=5, ge=1)
    n_per_cluster: int = Field(default=200, ge=1)
    dim: int = Field(default=10, ge=1)
    separation: float = Field(default=4.0, gt=0)
    spread: float = Field(default=1.0, gt=0)
    blob_seed: int = Field(default=0, ge=0)

    @property
    def geometry(self) -> ImageGeometry | None:
        if self.height is None or self.width is None:
            return None
        return ImageGeometry(height=self.height, width=self.width, channels=self.channels)

    def load(self) -> Dataset:
        if self.kind == 'csv':
            if not self.path:
                raise ConfigurateException(detail={'dataset.path': 'required for csv datasets'})
            dataset = load_dense_csv(self.path, self.label_column, self.name, self.geometry)
        else:
            dataset = make_blobs(self.k, self.n_per_cluster, self.dim, self.separation,
                                 self.spread, SeededRng(self.blob_seed).child('blobs'),
                                 name=self.name or 'blobs')
        return z_transform(dataset, self.z_mode) if self.standardize else dataset


class ExperimentConfig(BaseModel):
    """
    Defaults: batch 256, learning rate 1e-3, 250 pretraining and 400 clustering epochs,
    architecture D-1024-512-256-d with d equal to the number of clusters.
    """
    model_config = ConfigDict(extra='forbid')

    label: str | None = None
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    algorithm: Algorithm = 'DEC'
    scenario: int = Field(default=1, ge=1, le=2)
    brb: BrbConfig = Field(default_factory=BrbConfig)
    loss_weights: LossWeights | None = None
    hidden_dims: list[int] = Field(default_factory=lambda: [1024, 512, 256])
    embedding_dim: int | None = Field(default=None, ge=1)
    n_clusters: int | None = Field(default=None, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=256, ge=1)
    pretrain_epochs: int | None = Field(default=None, ge=0)
    clustering_epochs: int = Field(default=400, ge=1)
    augmentation: AugmentConfig = Field(default_factory=AugmentConfig)
    seeds: list[int] = Field(default_factory=lambda: [0])
    eval_every: int = Field(default=1, ge=1)
    diagnostics_every: int | None = Field(default=None, ge=1)
    track_distance_ratio: bool = True
    grad_clip: float | None = Field(default=None, gt=0)
    dcn_persist_counts: bool = True
    output_dir: str = 'runs'

    @field_validator('hidden_dims')
    @classmethod
    def _widths(cls, value: list[int]) -> list[int]:
        if any(w < 1 for w in value):
            raise ValueError('hidden widths must be >= 1')
        return value

    @field_validator('seeds')
    @classmethod
    def _seeds(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError('at least one seed is required')
        if any(not 0 <= s < 2 ** 64 for s in value):
            raise ValueError('seeds must be 64-bit unsigned integers')
        return value

    @property
    def run_label(self) -> str:
        return self.label or f'{self.algorithm}-{self.brb.variant}-s{self.scenario}'

    def resolved_loss_weights(self) -> LossWeights:
        return self.loss_weights or LossWeights.for_algorithm(self.algorithm)

    def resolved_pretrain_epochs(self) -> int:
        if self.pretrain_epochs is not None:
            return self.pretrain_epochs
        return 250 if self.scenario == 1 else 0


def _wrap(error: ValidationError) -> ConfigurateException:
    return ConfigurateException("Invalid experiment config",
                                detail={'errors': error.errors(include_url=False, include_context=False)})


def _nest(flat: dict[str, Any]) -> dict[str, Any]:
    tree: dict[str, Any] = {}
    for key, value in flat.items():
        node = tree
        *parents, leaf = key.split('.')
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurateException(detail={key: f"'{part}' is not a section"})
            node = child
        node[leaf] = value
    return tree


def _coerce(key: str, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    text = value.strip()
    if text.lower() in NONE_VALUES:
        return None
    if key.split('.')[-1] in LIST_KEYS:
        return [item.strip() for item in text.split(',') if item.strip()]
    return text


def build_config(values: dict[str, Any]) -> ExperimentConfig:
    """Validates flat or dotted ``key -> value`` pairs into an ExperimentConfig."""
    flat = {key.strip(): _coerce(key.strip(), value) for key, value in values.items()}
    try:
        return ExperimentConfig.model_validate(_nest(flat))
    except ValidationError as e:
        raise _wrap(e) from None


def load_config(path: str | Path | None = None,
                overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Reads a config file and applies overrides.

    :param path: flat key-value file; None starts from defaults
    :param overrides: dotted keys that replace file values
    """
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise DataIOException("Config file not found", detail={'path': str(path)})
        values.update(dotenv_values(path))
        logger.debug("Read %d config keys from %s", len(values), path)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


def update_config(config: ExperimentConfig, changes: dict[str, Any]) -> ExperimentConfig:
    """Copy of ``config`` with dotted-key ``changes`` applied and revalidated."""
    data = config.model_dump()
    for key, value in changes.items():
        node = data
        *parents, leaf = key.split('.')
        for part in parents:
            if not isinstance(node.get(part), dict):
                raise ConfigurateException(detail={key: 'unknown section'})
            node = node[part]
        node[leaf] = value
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise _wrap(e) from None
