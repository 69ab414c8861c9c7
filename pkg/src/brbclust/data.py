"""
Datasets: CSV loading, z-transformation, synthetic blobs, subsampling and
lightweight image augmentation.

Images are stored flattened in ``(height, width, channels)`` order.
"""
import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .exceptions import ConfigurateException, DataIOException, InputException, ShapeException
from .logger import logger
from .numerics import SeededRng, pairwise_sq_dists, sample_gaussian
from .settings import config_numerics
from .types_ import DenseMatrix, Labels, ZMode


class ImageGeometry(BaseModel):
    height: int = Field(ge=1)
    width: int = Field(ge=1)
    channels: int = Field(default=1, ge=1)

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels


class AugmentConfig(BaseModel):
    """
    Simplified affine augmentation.

    :param max_translation: integer pixel shift bound per axis
    :param max_rotation: rotation bound in degrees
    :param jitter_std: std of additive Gaussian noise per entry
    """
    model_config = ConfigDict(extra='forbid')

    enabled: bool = False
    max_translation: int = Field(default=1, ge=0)
    max_rotation: float = Field(default=16.0, ge=0)
    jitter_std: float = Field(default=0.0, ge=0)


@dataclass
class Dataset:
    name: str
    x: DenseMatrix
    y_true: Labels | None = None
    geometry: ImageGeometry | None = None

    def __post_init__(self):
        if self.x.ndim != 2:
            raise ShapeException("Dataset features must be 2-dimensional", detail={'shape': self.x.shape})
        if self.y_true is not None and self.y_true.shape[0] != self.x.shape[0]:
            raise ShapeException("Label count differs from row count",
                                 detail={'rows': self.x.shape[0], 'labels': self.y_true.shape[0]})
        if self.geometry is not None and self.geometry.size != self.x.shape[1]:
            raise ShapeException("Image geometry does not match feature count",
                                 detail={'geometry': self.geometry.size, 'features': self.x.shape[1]})

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def k(self) -> int | None:
        if self.y_true is None:
            return None
        return int(np.unique(self.y_true).size)


def _parse_cell(cell: str, line: int, column: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataIOException("Non-numeric cell",
                              detail={'line': line, 'column': column, 'value': cell}) from None


def load_dense_csv(path: str | Path,
                   label_column: int | None = -1,
                   name: str | None = None,
                   geometry: ImageGeometry | None = None) -> Dataset:
    """
    Reads a headerless numeric CSV.

    :param label_column: index of the integer label column (negative counts from the
                         end), or None when the file has no labels
    :return: Dataset with raw features; labels remapped to 0..k-1
    """
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    try:
        with path.open(newline='') as fh:
            for line, cells in enumerate(csv.reader(fh), start=1):
                if not cells or all(not c.strip() for c in cells):
                    continue
                if width is None:
                    width = len(cells)
                elif len(cells) != width:
                    raise DataIOException("Ragged row",
                                          detail={'line': line, 'expected': width, 'found': len(cells)})
                rows.append([_parse_cell(c, line, i) for i, c in enumerate(cells)])
    except OSError as e:
        raise DataIOException("Cannot read dataset", detail={'path': str(path), 'error': str(e)}) from e
    if not rows:
        raise DataIOException("Dataset file is empty", detail={'path': str(path)})
    table = np.asarray(rows, dtype=np.float64)
    labels = None
    if label_column is not None:
        if not -width <= label_column < width or width < 2:
            raise DataIOException("Label column missing",
                                  detail={'label_column': label_column, 'columns': width})
        raw = table[:, label_column]
        if not np.all(np.equal(np.mod(raw, 1), 0)):
            bad = int(np.flatnonzero(np.mod(raw, 1) != 0)[0]) + 1
            raise DataIOException("Label is not integral", detail={'row': bad})
        _, labels = np.unique(raw.astype(np.int64), return_inverse=True)
        labels = labels.astype(np.int64)
        table = np.delete(table, label_column % width, axis=1)
    dataset = Dataset(name=name or path.stem, x=table, y_true=labels, geometry=geometry)
    logger.info("Loaded %s: n=%d, D=%d, k=%s", dataset.name, dataset.n, dataset.dim, dataset.k)
    return dataset


def _standardize(values: np.ndarray, axis) -> np.ndarray:
    mean = values.mean(axis=axis, keepdims=True)
    std = values.std(axis=axis, keepdims=True)
    return (values - mean) / np.where(std > 0, std, 1.0)


def default_z_mode(geometry: ImageGeometry | None) -> ZMode:
    if geometry is None:
        return 'per_feature'
    return 'global' if geometry.channels == 1 else 'per_channel'


def z_transform(dataset: Dataset, mode: ZMode | None = None) -> Dataset:
    """
    Zero mean, unit variance.

    ``per_feature`` standardizes each column, ``global`` the whole matrix (grayscale
    images) and ``per_channel`` each colour channel. Constant groups map to 0.
    """
    mode = mode or default_z_mode(dataset.geometry)
    x = dataset.x
    if mode == 'per_feature':
        out = _standardize(x, 0)
    elif mode == 'global':
        out = _standardize(x, None)
    else:
        if dataset.geometry is None:
            raise ConfigurateException(detail={'z_mode': 'per_channel needs image geometry'})
        channels = dataset.geometry.channels
        out = _standardize(x.reshape(x.shape[0], -1, channels), (0, 1)).reshape(x.shape)
    return replace(dataset, x=out)


def make_blobs(k: int, n_per_cluster: int, dim: int,
               separation: float, spread: float, rng: SeededRng,
               name: str = 'blobs') -> Dataset:
    """
    Isotropic Gaussian blobs whose centers are pairwise at least ``separation`` apart.

    Centers are rejection-sampled in a box that grows with k; each center gets
    ``config_numerics.max_blob_retries`` attempts.
    """
    if k < 1 or n_per_cluster < 1 or dim < 1:
        raise ConfigurateException(detail={'k': k, 'n_per_cluster': n_per_cluster, 'dim': dim})
    if separation <= 0 or spread <= 0:
        raise ConfigurateException(detail={'separation': separation, 'spread': spread})
    half = separation * max(1.0, k ** (1.0 / dim))
    centers = np.zeros((0, dim))
    for j in range(k):
        for _ in range(config_numerics.max_blob_retries):
            candidate = rng.uniform(-half, half, (1, dim))
            if not centers.shape[0] or pairwise_sq_dists(candidate, centers).min() >= separation ** 2:
                centers = np.vstack([centers, candidate])
                break
        else:
            raise ConfigurateException("Blob centers cannot be packed",
                                       detail={'placed': j, 'k': k, 'separation': separation})
    labels = np.repeat(np.arange(k, dtype=np.int64), n_per_cluster)
    x = centers[labels] + sample_gaussian(rng, labels.shape[0], dim, 0.0, spread)
    return Dataset(name=name, x=x, y_true=labels)


def transform_image(image: np.ndarray, shift: tuple[int, int], angle: float) -> np.ndarray:
    """
    Nearest-neighbour rotation about the image center followed by an integer shift.

    :param image: (height, width, channels)
    :param shift: (dy, dx) in pixels
    :param angle: degrees, counter-clockwise
    """
    height, width = image.shape[:2]
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing='ij')
    src_r = (rows - shift[0]).astype(np.float64)
    src_c = (cols - shift[1]).astype(np.float64)
    if angle:
        theta = np.deg2rad(angle)
        cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
        dy, dx = src_r - cy, src_c - cx
        src_r = np.cos(theta) * dy - np.sin(theta) * dx + cy
        src_c = np.sin(theta) * dy + np.cos(theta) * dx + cx
    src_r = np.floor(src_r + 0.5).astype(np.int64)
    src_c = np.floor(src_c + 0.5).astype(np.int64)
    inside = (src_r >= 0) & (src_r < height) & (src_c >= 0) & (src_c < width)
    out = np.zeros_like(image)
    out[inside] = image[src_r[inside], src_c[inside]]
    return out


def augment_batch(batch: DenseMatrix, geometry: ImageGeometry | None,
                  config: AugmentConfig, rng: SeededRng) -> DenseMatrix:
    """Independent random transform per row; shape and row order are preserved."""
    if not config.enabled:
        return batch
    out = batch.copy()
    n = batch.shape[0]
    if geometry is not None and (config.max_translation or config.max_rotation):
        t = config.max_translation
        shifts = rng.child('shift').integers(-t, t + 1, (n, 2)) if t else np.zeros((n, 2), dtype=np.int64)
        angles = rng.child('angle').uniform(-config.max_rotation, config.max_rotation, n) \
            if config.max_rotation else np.zeros(n)
        shape = (geometry.height, geometry.width, geometry.channels)
        for i in range(n):
            image = transform_image(batch[i].reshape(shape), (int(shifts[i, 0]), int(shifts[i, 1])),
                                    float(angles[i]))
            out[i] = image.reshape(-1)
    if config.jitter_std > 0:
        out += sample_gaussian(rng.child('jitter'), n, batch.shape[1], 0.0, config.jitter_std)
    return out


def subsample_indices(n: int, size: int, rng: SeededRng) -> np.ndarray:
    """``min(size, n)`` distinct sorted indices drawn uniformly without replacement."""
    if size < 1:
        raise InputException("Subsample size must be >= 1", detail={'size': size})
    if size >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size, replace=False))
