"""
Clustering evaluation: matched accuracy, NMI, ARI, class-distance diagnostics,
silhouette, cluster-label change and the centroid distance ratio.
"""
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .exceptions import InputException
from .logger import logger
from .models import DistanceRatioHistogram
from .numerics import pairwise_sq_dists
from .types_ import DenseMatrix, Labels


def _as_labels(values, name: str) -> Labels:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InputException(f"{name} must be one-dimensional", detail={'shape': arr.shape})
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise InputException(f"{name} must be integral")
    return arr.astype(np.int64)


def _check_pair(a, b) -> tuple[Labels, Labels]:
    a = _as_labels(a, 'labels_a')
    b = _as_labels(b, 'labels_b')
    if a.shape[0] != b.shape[0]:
        raise InputException("Label vectors differ in length",
                             detail={'a': a.shape[0], 'b': b.shape[0]})
    if a.shape[0] == 0:
        raise InputException("Label vectors are empty")
    return a, b


def contingency(a: Labels, b: Labels) -> np.ndarray:
    """Counts ``n[i, j]`` of samples in cluster i of ``a`` and j of ``b`` (relabeled densely)."""
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def clustering_accuracy(y_true, y_pred, k: int | None = None) -> float:
    """
    Best matched fraction over label bijections, times 100.

    The bijection comes from the Hungarian method on the k x k co-occurrence matrix.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    if y_true.min() < 0 or y_pred.min() < 0:
        raise InputException("Labels must be nonnegative")
    size = max(int(y_true.max()), int(y_pred.max())) + 1
    if k is not None:
        if size > k:
            raise InputException("Label out of range", detail={'k': k, 'max_label': size - 1})
        size = k
    profit = np.zeros((size, size), dtype=np.int64)
    np.add.at(profit, (y_pred, y_true), 1)
    rows, cols = linear_sum_assignment(profit, maximize=True)
    return 100.0 * profit[rows, cols].sum() / y_true.shape[0]


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(a, b) -> float:
    """
    ``2 I(a; b) / (H(a) + H(b))`` with natural logarithms.

    Two single-cluster partitions are identical, so their NMI is 1.
    """
    a, b = _check_pair(a, b)
    table = contingency(a, b)
    n = a.shape[0]
    h_a = _entropy(table.sum(axis=1), n)
    h_b = _entropy(table.sum(axis=0), n)
    if h_a + h_b == 0:
        return 1.0
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    rows, cols = np.nonzero(table)
    pij = table[rows, cols] / n
    mi = float(np.sum(pij * np.log(pij / (pa[rows] * pb[cols]))))
    return float(np.clip(2.0 * mi / (h_a + h_b), 0.0, 1.0))


def _comb2(x: np.ndarray | int) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def _same_partition(table: np.ndarray) -> bool:
    nonzero = table > 0
    return bool(np.all(nonzero.sum(axis=0) == 1) and np.all(nonzero.sum(axis=1) == 1))


def ari(a, b) -> float:
    """
    Adjusted Rand index from the contingency table.

    When the expected and maximal index coincide the ratio is undefined: the result is
    1 for identical partitions and 0 otherwise.
    """
    a, b = _check_pair(a, b)
    table = contingency(a, b)
    total = float(_comb2(a.shape[0]))
    sum_ij = float(np.sum(_comb2(table)))
    sum_a = float(np.sum(_comb2(table.sum(axis=1))))
    sum_b = float(np.sum(_comb2(table.sum(axis=0))))
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    maximum = 0.5 * (sum_a + sum_b)
    denom = maximum - expected
    if denom == 0:
        return 1.0 if _same_partition(table) else 0.0
    return (sum_ij - expected) / denom


def cluster_label_change(current, previous) -> float:
    """``100 * (1 - NMI)`` between consecutive hard assignments."""
    return float(np.clip(100.0 * (1.0 - nmi(current, previous)), 0.0, 100.0))


def l2_normalize(embeddings: DenseMatrix) -> DenseMatrix:
    norms = np.linalg.norm(embeddings, axis=1, keepdims=True)
    return np.divide(embeddings, norms, out=np.zeros_like(embeddings), where=norms > 0)


def _class_distances(embeddings: DenseMatrix, labels, normalize: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-sample mean distance to its own class (``a``) and to the nearest other class (``b``).

    :return: a, b and a mask of samples whose class has at least two members
    """
    labels = _as_labels(labels, 'labels')
    if embeddings.ndim != 2 or embeddings.shape[0] != labels.shape[0]:
        raise InputException("Embeddings and labels differ in length",
                             detail={'embeddings': embeddings.shape, 'labels': labels.shape})
    classes, inverse = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise InputException("At least two classes are required", detail={'classes': classes.size})
    points = l2_normalize(embeddings) if normalize else embeddings
    dist = cdist(points, points)
    onehot = np.zeros((labels.shape[0], classes.size))
    onehot[np.arange(labels.shape[0]), inverse] = 1.0
    sums = dist @ onehot
    sizes = onehot.sum(axis=0)
    rows = np.arange(labels.shape[0])
    own = sizes[inverse]
    valid = own > 1
    if not np.all(valid):
        logger.warning("Skipping %d samples of singleton classes", int((~valid).sum()))
    a = np.where(valid, sums[rows, inverse] / np.maximum(own - 1, 1), 0.0)
    others = sums / sizes
    others[rows, inverse] = np.inf
    b = others.min(axis=1)
    return a, b, valid


def intra_inter_cd(embeddings: DenseMatrix, labels, normalize: bool = True) -> tuple[float, float]:
    """
    Mean intra-class and nearest inter-class distance, by default on l2-normalized
    embeddings. Samples of singleton classes have no intra term and are skipped there.
    """
    a, b, valid = _class_distances(embeddings, labels, normalize)
    intra = float(a[valid].mean()) if valid.any() else 0.0
    return intra, float(b.mean())


def silhouette(embeddings: DenseMatrix, labels, normalize: bool = True) -> float:
    """Mean of (b - a) / max(a, b) over samples outside singleton classes."""
    a, b, valid = _class_distances(embeddings, labels, normalize)
    if not valid.any():
        return 0.0
    a, b = a[valid], b[valid]
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros_like(a), where=denom > 0)
    return float(s.mean())


def distance_ratios(embeddings: DenseMatrix, centroids: DenseMatrix) -> np.ndarray:
    """rho = closest / second-closest centroid distance; 1 where both are zero."""
    if centroids.shape[0] < 2:
        raise InputException("Distance ratio needs at least two centroids",
                             detail={'k': centroids.shape[0]})
    dist = np.sqrt(pairwise_sq_dists(embeddings, centroids))
    two = np.partition(dist, 1, axis=1)[:, :2]
    d1, d2 = two[:, 0], two[:, 1]
    return np.divide(d1, d2, out=np.ones_like(d1), where=d2 > 0)


def distance_ratio_hist(embeddings: DenseMatrix, centroids: DenseMatrix,
                        bins: int = 20, epoch: int | None = None,
                        tag: str | None = None) -> DistanceRatioHistogram:
    rho = distance_ratios(embeddings, centroids)
    counts, edges = np.histogram(rho, bins=bins, range=(0.0, 1.0))
    return DistanceRatioHistogram(epoch=epoch, tag=tag,
                                  edges=edges.tolist(), counts=counts.tolist())


def matched_centroid_shift(old: DenseMatrix, new: DenseMatrix) -> float:
    """Mean distance between two centroid sets after optimal one-to-one matching."""
    cost = cdist(old, new)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())
