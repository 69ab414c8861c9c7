"""
Centroid-based clustering objectives: DEC, IDEC and DCN.

All losses are averaged over the batch. The DEC/IDEC target distribution P is a
constant during differentiation; it is recomputed from the current Q for every batch
unless the caller supplies it.
"""
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field

from .exceptions import ConfigurateException, ContractViolation, NumericalFailure, ShapeException
from .network import NetworkParams, forward, backward, reconstruction_loss, reconstruction_grad
from .numerics import pairwise_sq_dists
from .settings import config_numerics
from .types_ import Algorithm, DenseMatrix, Labels


class LossWeights(BaseModel):
    """``L = ssl * L_SSL + cluster * L_C``"""
    ssl: float = Field(ge=0)
    cluster: float = Field(ge=0)

    @classmethod
    def for_algorithm(cls, algorithm: Algorithm) -> 'LossWeights':
        defaults = {'DEC': (0.0, 1.0), 'IDEC': (1.0, 0.1), 'DCN': (1.0, 0.025)}
        ssl, cluster = defaults[algorithm]
        return cls(ssl=ssl, cluster=cluster)


@dataclass
class ClusterState:
    """
    Current clustering: centroids plus hard (DCN) or soft (DEC/IDEC) assignments.

    For DEC/IDEC ``centroids`` is the optimizer-owned parameter block. ``counts`` are
    the DCN per-cluster counters of the online center update.
    """
    centroids: DenseMatrix
    assignments: Labels | None = None
    soft: DenseMatrix | None = None
    counts: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def copy(self) -> 'ClusterState':
        return ClusterState(
            centroids=self.centroids.copy(),
            assignments=None if self.assignments is None else self.assignments.copy(),
            soft=None if self.soft is None else self.soft.copy(),
            counts=None if self.counts is None else self.counts.copy())

    def reset_counts(self) -> None:
        self.counts = np.ones(self.k, dtype=np.int64)

    def validate(self) -> None:
        if self.soft is not None:
            _check_simplex(self.soft, 'soft assignments')
        if self.assignments is not None and self.assignments.size:
            if self.assignments.min() < 0 or self.assignments.max() >= self.k:
                raise ContractViolation("Hard assignment out of range", detail={'k': self.k})
        if self.counts is not None and np.any(self.counts < 1):
            raise ContractViolation("DCN counts must be >= 1")


def _check_simplex(rows: DenseMatrix, what: str) -> None:
    if rows.size == 0:
        return
    atol = config_numerics.simplex_atol
    if np.any(rows < -atol) or np.any(rows > 1 + atol) or \
            not np.allclose(rows.sum(axis=1), 1.0, rtol=0, atol=atol):
        raise ContractViolation(f"{what} rows are not on the simplex")


def _student_kernel(embeddings: DenseMatrix, centroids: DenseMatrix) -> DenseMatrix:
    if centroids.shape[0] == 0:
        raise ConfigurateException(detail={'k': 'must be >= 1'})
    if embeddings.shape[1] != centroids.shape[1]:
        raise ShapeException("Embedding and centroid dimensions differ",
                             detail={'embeddings': embeddings.shape, 'centroids': centroids.shape})
    return 1.0 / (1.0 + pairwise_sq_dists(embeddings, centroids))


def dec_soft_assign(embeddings: DenseMatrix, centroids: DenseMatrix) -> DenseMatrix:
    """Student-t soft assignments Q (n x k); rows sum to one."""
    kernel = _student_kernel(embeddings, centroids)
    return kernel / kernel.sum(axis=1, keepdims=True)


def dec_target(q: DenseMatrix) -> DenseMatrix:
    """Sharpened target P from Q, normalized by soft cluster frequencies."""
    _check_simplex(q, 'Q')
    freq = q.sum(axis=0)
    if np.any(freq <= 0):
        raise NumericalFailure("Soft cluster frequency is zero",
                               detail={'empty_clusters': np.flatnonzero(freq <= 0).tolist()})
    weight = q ** 2 / freq
    return weight / weight.sum(axis=1, keepdims=True)


def dec_kl_loss(p: DenseMatrix, q: DenseMatrix) -> float:
    """KL(P || Q) summed over all rows; 0 log 0 = 0."""
    if p.shape != q.shape:
        raise ShapeException("P and Q shapes differ", detail={'p': p.shape, 'q': q.shape})
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def dcn_assign(embeddings: DenseMatrix, centroids: DenseMatrix) -> Labels:
    """Nearest centroid; ties go to the lowest index."""
    return np.argmin(pairwise_sq_dists(embeddings, centroids), axis=1).astype(np.int64)


def dcn_cluster_loss(embeddings: DenseMatrix, centroids: DenseMatrix, assignments: Labels) -> float:
    """``0.5 * sum ||z_i - mu_h(i)||^2``, averaged over the batch."""
    if assignments.shape[0] != embeddings.shape[0]:
        raise ShapeException("Assignments length differs from batch",
                             detail={'assignments': assignments.shape, 'batch': embeddings.shape})
    diff = embeddings - centroids[assignments]
    return float(0.5 * np.sum(diff ** 2) / embeddings.shape[0])


def dcn_center_update(centroids: DenseMatrix, counts: np.ndarray,
                      z: np.ndarray, j: int) -> tuple[DenseMatrix, np.ndarray]:
    """
    Online k-means step ``mu_j <- mu_j - (mu_j - z) / c_j`` followed by ``c_j += 1``.

    Mutates and returns ``centroids`` and ``counts``.
    """
    if counts[j] < 1:
        raise ContractViolation("DCN count must be >= 1", detail={'cluster': j, 'count': int(counts[j])})
    centroids[j] -= (centroids[j] - z) / counts[j]
    counts[j] += 1
    return centroids, counts


def dcn_update_centers(centroids: DenseMatrix, counts: np.ndarray,
                       embeddings: DenseMatrix, assignments: Labels) -> tuple[DenseMatrix, np.ndarray]:
    """Sequential center updates in sample order."""
    for z, j in zip(embeddings, assignments):
        dcn_center_update(centroids, counts, z, int(j))
    return centroids, counts


def hard_labels(algorithm: Algorithm, embeddings: DenseMatrix, centroids: DenseMatrix) -> Labels:
    """argmax Q for DEC/IDEC, nearest centroid for DCN; lowest index wins ties."""
    if algorithm == 'DCN':
        return dcn_assign(embeddings, centroids)
    return np.argmax(dec_soft_assign(embeddings, centroids), axis=1).astype(np.int64)


@dataclass
class LossResult:
    total: float
    ssl: float
    cluster: float
    grads: NetworkParams | None = None
    centroid_grads: DenseMatrix | None = None
    targets: DenseMatrix | None = None
    assignments: Labels | None = None


def _kl_terms(embeddings: DenseMatrix, centroids: DenseMatrix,
              p: DenseMatrix) -> tuple[float, DenseMatrix, DenseMatrix]:
    kernel = _student_kernel(embeddings, centroids)
    q = kernel / kernel.sum(axis=1, keepdims=True)
    n = embeddings.shape[0]
    loss = dec_kl_loss(p, q) / n
    g = 2.0 * (p - q) * kernel / n
    grad_h = g.sum(axis=1, keepdims=True) * embeddings - g @ centroids
    grad_m = g.sum(axis=0)[:, None] * centroids - g.T @ embeddings
    return loss, grad_h, grad_m


def _evaluate(algorithm: Algorithm,
              batch: DenseMatrix,
              params: NetworkParams,
              state: ClusterState,
              weights: LossWeights,
              augmented: DenseMatrix | None,
              targets: DenseMatrix | None,
              assignments: Labels | None,
              with_grads: bool,
              epoch: int | None) -> LossResult:
    if augmented is not None and augmented.shape != batch.shape:
        raise ShapeException("Augmented batch is not row-aligned with the original",
                             detail={'batch': batch.shape, 'augmented': augmented.shape})
    views = [forward(params, batch)]
    inputs = [batch]
    if augmented is not None:
        views.append(forward(params, augmented))
        inputs.append(augmented)
    share = 1.0 / len(views)
    centroids = state.centroids
    soft = algorithm in ('DEC', 'IDEC')

    # targets and assignments come from the original samples only
    if soft:
        if targets is None:
            targets = dec_target(dec_soft_assign(views[0][0], centroids))
    elif assignments is None:
        assignments = dcn_assign(views[0][0], centroids)

    ssl = 0.0
    cluster = 0.0
    grads = params.zeros_like() if with_grads else None
    centroid_grads = np.zeros_like(centroids) if with_grads else None
    for x, (h, z, cache) in zip(inputs, views):
        ssl += share * reconstruction_loss(x, z)
        if soft:
            loss_c, grad_h, grad_m = _kl_terms(h, centroids, targets)
        else:
            loss_c = dcn_cluster_loss(h, centroids, assignments)
            grad_h = (h - centroids[assignments]) / h.shape[0]
            grad_m = None
        cluster += share * loss_c
        if not with_grads:
            continue
        grad_rec = weights.ssl * share * reconstruction_grad(x, z) if weights.ssl > 0 else None
        grad_emb = weights.cluster * share * grad_h if weights.cluster > 0 else None
        view_grads = backward(params, cache, grad_emb, grad_rec)
        for (_, acc), (_, part) in zip(grads.named_layers(), view_grads.named_layers()):
            acc.weights += part.weights
            acc.biases += part.biases
        if grad_m is not None and weights.cluster > 0:
            centroid_grads += weights.cluster * share * grad_m

    total = weights.ssl * ssl + weights.cluster * cluster
    if not np.isfinite(total):
        raise NumericalFailure("Loss is not finite",
                               detail={'epoch': epoch, 'algorithm': algorithm,
                                       'ssl': ssl, 'cluster': cluster})
    if with_grads:
        for name, g in grads.named_tensors().items():
            if not np.all(np.isfinite(g)):
                raise NumericalFailure("Gradient is not finite",
                                       detail={'epoch': epoch, 'tensor': name})
    return LossResult(total=float(total), ssl=float(ssl), cluster=float(cluster),
                      grads=grads, centroid_grads=centroid_grads,
                      targets=targets, assignments=assignments)


def combined_loss_and_grads(algorithm: Algorithm,
                            batch: DenseMatrix,
                            params: NetworkParams,
                            state: ClusterState,
                            weights: LossWeights,
                            augmented: DenseMatrix | None = None,
                            targets: DenseMatrix | None = None,
                            assignments: Labels | None = None,
                            epoch: int | None = None) -> LossResult:
    """
    ``weights.ssl * L_SSL + weights.cluster * L_C`` and its gradients.

    With ``augmented`` both terms become the average over the original and the
    augmented batch, with targets (DEC/IDEC) or assignments (DCN) taken from the
    original samples. DCN centroids are not parameters: their gradient block is zero.

    :param targets: fixed P for DEC/IDEC; computed from the batch when omitted
    :param assignments: fixed DCN assignments; nearest centroid when omitted
    :param epoch: context attached to numerical-failure errors
    """
    try:
        return _evaluate(algorithm, batch, params, state, weights, augmented,
                         targets, assignments, True, epoch)
    except NumericalFailure as e:
        e.detail = {**(e.detail or {}), 'epoch': epoch, 'algorithm': algorithm}
        raise


def augmented_losses(algorithm: Algorithm,
                     batch: DenseMatrix,
                     augmented: DenseMatrix,
                     params: NetworkParams,
                     state: ClusterState,
                     weights: LossWeights,
                     targets: DenseMatrix | None = None,
                     assignments: Labels | None = None) -> tuple[float, float]:
    """Augmentation-consistent ``(L_SSL^A, L_C^A)`` without gradients."""
    result = _evaluate(algorithm, batch, params, state, weights, augmented,
                       targets, assignments, False, None)
    return result.ssl, result.cluster
