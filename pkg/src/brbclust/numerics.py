"""
Dense float64 linear algebra and seeded sampling.

Every matrix in the package is a 2-d ``numpy.float64`` array (``DenseMatrix``).
Randomness flows exclusively through ``SeededRng``, a thin wrapper over NumPy's
``PCG64`` bit generator seeded through ``SeedSequence``. PCG64 has a documented,
platform independent bit stream, so equal seeds give equal draws on every machine.
"""
import hashlib
from typing import Any

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import ShapeException, NumericalFailure
from .types_ import DenseMatrix


class SeededRng:
    """
    Reproducible random stream.

    Child streams are derived from the root seed and a path of names, never from the
    parent's draw position, so adding draws to one consumer does not shift another.

    :param seed: 64-bit unsigned root seed
    :param path: names of the derivation path (empty for the root stream)
    """

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ShapeException("Seed must be a 64-bit unsigned integer",
                                 detail={'seed': seed})
        self.seed = seed
        self.path = path
        spawn_key = tuple(_stable_key(name) for name in path)
        self._generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)))

    def child(self, name: str | int) -> 'SeededRng':
        """Independent stream named ``name`` below this one."""
        return SeededRng(self.seed, self.path + (str(name),))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def uniform(self, low: float, high: float, size: Any = None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def normal(self, size: Any = None) -> np.ndarray:
        return self._generator.standard_normal(size)

    def integers(self, low: int, high: int, size: Any = None) -> np.ndarray:
        return self._generator.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False, p: np.ndarray = None) -> np.ndarray:
        return self._generator.choice(n, size=size, replace=replace, p=p)

    def __repr__(self):
        return f"<SeededRng seed={self.seed} path={'/'.join(self.path) or '-'}>"


def _stable_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], 'little')


def as_matrix(value: Any, name: str = 'matrix') -> DenseMatrix:
    """Coerces to a 2-d float64 array."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ShapeException(f"{name} must be 2-dimensional", detail={'ndim': arr.ndim})
    return arr


def check_finite(arr: np.ndarray, what: str, **context: Any) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure(f"Non-finite values in {what}", detail=context or None)
    return arr


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Standard matrix product ``a @ b``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeException("matmul dimension mismatch",
                             detail={'a': a.shape, 'b': b.shape})
    return check_finite(a @ b, 'matmul')


def pairwise_sq_dists(points: DenseMatrix, centers: DenseMatrix) -> DenseMatrix:
    """
    Squared Euclidean distances ``D[i, j] = ||points[i] - centers[j]||^2``.

    Computed from explicit differences, so the result is exactly symmetric for
    ``points is centers`` and exactly zero on coincident rows.
    """
    if points.ndim != 2 or centers.ndim != 2 or points.shape[1] != centers.shape[1]:
        raise ShapeException("pairwise_sq_dists dimension mismatch",
                             detail={'points': points.shape, 'centers': centers.shape})
    return check_finite(cdist(points, centers, 'sqeuclidean'), 'pairwise distances')


def sample_gaussian(rng: SeededRng, rows: int, cols: int,
                    mean: float = 0.0, std: float = 1.0) -> DenseMatrix:
    """I.i.d. normal entries."""
    if std < 0:
        raise ShapeException("std must be >= 0", detail={'std': std})
    if std == 0:
        return np.full((rows, cols), float(mean))
    return mean + std * rng.normal((rows, cols))


def sample_uniform(rng: SeededRng, rows: int, cols: int,
                   low: float, high: float) -> DenseMatrix:
    """I.i.d. uniform entries in ``[low, high)``."""
    if high < low:
        raise ShapeException("high must be >= low", detail={'low': low, 'high': high})
    return rng.uniform(low, high, (rows, cols))
