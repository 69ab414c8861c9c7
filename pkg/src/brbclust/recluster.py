"""
Centroid-producing clustering used for initial clustering and BRB reclustering.

Each call runs a single initialization; there are no restarts.
"""
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.spatial.distance import cdist

from .exceptions import InputException, NumericalFailure, ConfigurateException
from .logger import logger, log
from .numerics import SeededRng, pairwise_sq_dists
from .settings import config_numerics
from .types_ import DenseMatrix, Labels, ReclusterAlgorithm


class ReclusterConfig(BaseModel):
    """
    :param algorithm: kmeans | kmeans_pp_init | kmedoids (``em`` is reserved, not implemented)
    :param k: number of clusters; filled in from the dataset when left empty
    :param max_iters: Lloyd / Voronoi iteration cap
    :param tol: relative inertia change that stops Lloyd iterations
    :param subsample: number of embedded samples reclustered at each BRB event
    :param medoid_swaps: refine k-medoids with best-improvement single swaps after the
        alternating iteration converges
    """
    model_config = ConfigDict(extra='forbid')

    algorithm: ReclusterAlgorithm = 'kmeans'
    k: int | None = Field(default=None, ge=1)
    max_iters: int = Field(default=300, ge=1)
    tol: float = Field(default=1e-6, ge=0)
    subsample: int = Field(default=10000, ge=1)
    medoid_swaps: bool = False

    @field_validator('algorithm')
    @classmethod
    def _reserved(cls, value: str) -> str:
        if value == 'em':
            raise ValueError("'em' reclustering is reserved and not implemented")
        return value

    @model_validator(mode='after')
    def _subsample_covers_k(self) -> 'ReclusterConfig':
        if self.k is not None and self.subsample < self.k:
            raise ValueError(f"subsample ({self.subsample}) must be >= k ({self.k})")
        return self


def _require_k(points: DenseMatrix, k: int | None) -> int:
    if k is None:
        raise ConfigurateException(detail={'k': 'number of clusters is not set'})
    if points.ndim != 2 or points.shape[0] < k:
        raise InputException("Fewer points than clusters",
                             detail={'points': points.shape[0] if points.ndim == 2 else None, 'k': k})
    return k


def _seed_indices(points: DenseMatrix, k: int, rng: SeededRng) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(0, n))]
    closest = pairwise_sq_dists(points, points[chosen[0]:chosen[0] + 1])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, 1, p=closest / total)[0])
        else:
            # every point coincides with a chosen center
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(remaining[rng.integers(0, remaining.size)])
        chosen.append(idx)
        closest = np.minimum(closest, pairwise_sq_dists(points, points[idx:idx + 1])[:, 0])
    return np.asarray(chosen, dtype=np.int64)


def kmeans_pp_seed(points: DenseMatrix, k: int, rng: SeededRng) -> DenseMatrix:
    """
    k-means++ seeding: the first center uniformly, each next one with probability
    proportional to the squared distance to the nearest chosen center.
    """
    _require_k(points, k)
    return points[_seed_indices(points, k, rng)].copy()


def _inertia(points: DenseMatrix, centers: DenseMatrix) -> tuple[Labels, float, np.ndarray]:
    dists = pairwise_sq_dists(points, centers)
    labels = np.argmin(dists, axis=1).astype(np.int64)
    closest = dists[np.arange(points.shape[0]), labels]
    return labels, float(closest.sum()), closest


def _update_means(points: DenseMatrix, labels: Labels, centers: DenseMatrix) -> tuple[DenseMatrix, Labels]:
    k = centers.shape[0]
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(centers)
    np.add.at(sums, labels, points)
    new = centers.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    empty = np.flatnonzero(~filled)
    if empty.size:
        labels = labels.copy()
        cost = np.sum((points - new[labels]) ** 2, axis=1)
        for j in empty:
            far = int(np.argmax(cost))
            logger.warning("k-means cluster %d is empty; seizing point %d", j, far)
            new[j] = points[far]
            labels[far] = j
            cost[far] = -1.0
    return new, labels


def kmeans(points: DenseMatrix, config: ReclusterConfig,
           rng: SeededRng) -> tuple[DenseMatrix, Labels, float]:
    """
    Lloyd's algorithm from a k-means++ seed.

    Stops when the relative inertia decrease drops to ``config.tol`` or after
    ``config.max_iters`` iterations. Empty clusters seize the point farthest from its
    center. Inertia is checked to be nonincreasing at every iteration.

    :return: centers (k x d), labels, inertia of the returned centers
    """
    k = _require_k(points, config.k)
    centers = kmeans_pp_seed(points, k, rng)
    labels, inertia, _ = _inertia(points, centers)
    rtol = config_numerics.inertia_rtol
    for it in range(config.max_iters):
        centers, labels = _update_means(points, labels, centers)
        labels, current, _ = _inertia(points, centers)
        if current > inertia * (1.0 + rtol) + rtol:
            raise NumericalFailure("k-means inertia increased",
                                   detail={'iteration': it, 'previous': inertia, 'current': current})
        change = (inertia - current) / inertia if inertia > 0 else 0.0
        inertia = current
        if change <= config.tol:
            break
    return centers, labels, inertia


def kmedoids(points: DenseMatrix, config: ReclusterConfig,
             rng: SeededRng) -> tuple[DenseMatrix, Labels]:
    """
    Alternating (Voronoi iteration) k-medoids from a k-means++ seed.

    Each medoid becomes the member minimizing the sum of Euclidean distances to the
    rest of its cluster. Every returned center is a data point.

    The alternating iteration stops at a local optimum of ``kmedoids_cost``. With
    ``config.medoid_swaps`` it is followed by best-improvement swaps of one medoid
    against one non-medoid until no swap lowers the cost.
    """
    k = _require_k(points, config.k)
    medoids = _seed_indices(points, k, rng)
    for _ in range(config.max_iters):
        dist = cdist(points, points[medoids])
        labels = np.argmin(dist, axis=1).astype(np.int64)
        updated = medoids.copy()
        for j in range(k):
            members = np.flatnonzero(labels == j)
            if members.size == 0:
                continue
            within = cdist(points[members], points[members]).sum(axis=1)
            updated[j] = members[int(np.argmin(within))]
        if np.array_equal(updated, medoids):
            break
        medoids = updated
    if config.medoid_swaps:
        medoids = _swap_medoids(points, medoids, config.max_iters)
    labels = np.argmin(cdist(points, points[medoids]), axis=1).astype(np.int64)
    return points[medoids].copy(), labels


def _swap_medoids(points: DenseMatrix, medoids: np.ndarray, max_iters: int) -> np.ndarray:
    n, k = points.shape[0], medoids.size
    # candidates are scored in blocks of at most ~4M distances
    block = max(1, 4_000_000 // (n * k))
    medoids = medoids.copy()
    for _ in range(max_iters):
        to_medoids = cdist(points, points[medoids])
        cost = float(to_medoids.min(axis=1).sum())
        # distance to the nearest medoid once medoid j is removed
        without = np.full((n, k), np.inf)
        for j in range(k):
            if k > 1:
                without[:, j] = np.delete(to_medoids, j, axis=1).min(axis=1)
        best_cost, best_swap = cost, None
        for start in range(0, n, block):
            candidates = np.arange(start, min(start + block, n))
            to_candidates = cdist(points, points[candidates])
            swapped = np.minimum(to_candidates[:, :, None], without[:, None, :]).sum(axis=0)
            c, j = np.unravel_index(int(np.argmin(swapped)), swapped.shape)
            if swapped[c, j] < best_cost - 1e-12 * max(1.0, cost):
                best_cost, best_swap = float(swapped[c, j]), (int(candidates[c]), int(j))
        if best_swap is None:
            break
        candidate, j = best_swap
        logger.debug("k-medoids swap: medoid %d -> point %d, cost %.6g -> %.6g", j, candidate, cost, best_cost)
        medoids[j] = candidate
    return medoids


def kmedoids_cost(points: DenseMatrix, medoids: DenseMatrix) -> float:
    """Sum of Euclidean distances from every point to its nearest medoid."""
    return float(cdist(points, medoids).min(axis=1).sum())


@log()
def recluster_embeddings(embeddings: DenseMatrix, config: ReclusterConfig,
                         rng: SeededRng) -> tuple[DenseMatrix, Labels]:
    """Dispatches to the configured algorithm; returns centroids and subsample labels."""
    if config.algorithm == 'kmeans':
        centers, labels, _ = kmeans(embeddings, config, rng)
    elif config.algorithm == 'kmeans_pp_init':
        centers = kmeans_pp_seed(embeddings, _require_k(embeddings, config.k), rng)
        labels = np.argmin(pairwise_sq_dists(embeddings, centers), axis=1).astype(np.int64)
    elif config.algorithm == 'kmedoids':
        centers, labels = kmedoids(embeddings, config, rng)
    else:
        raise ConfigurateException(detail={'algorithm': f'{config.algorithm} is not supported'})
    return centers, labels
