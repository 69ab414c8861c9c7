"""
Breaking the reclustering barrier: soft weight resets, reclustering on a fresh
subsample, and centroid momentum resets, plus the disentangled and noise ablations.

Every event draws from named child streams of the rng it receives
(``subsample``, ``reset``, ``recluster``, ``noise``), so variants that share a step
also share its randomness.
"""
import time

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .data import subsample_indices
from .exceptions import ConfigurateException
from .logger import logger, log
from .metrics import distance_ratio_hist, matched_centroid_shift
from .models import BrbEvent, BrbTimings
from .network import InitDistribution, NetworkParams, encode
from .numerics import SeededRng, sample_gaussian
from .objectives import ClusterState, dcn_assign
from .optim import AdamState
from .recluster import ReclusterConfig, recluster_embeddings
from .types_ import Algorithm, DenseMatrix, Variant

CENTROIDS = 'centroids'


class BrbConfig(BaseModel):
    """
    :param alpha: interpolation factor of the soft reset, 1 keeps the weights
    :param interval: epochs between events
    :param reset_embedding_layer: also soft-reset the last encoder layer
    :param reset_decoder: also soft-reset every decoder layer
    :param momentum_reset: zero centroid Adam moments after new centroids are set
    :param reset_network_momentum: zero Adam moments of soft-reset tensors as well
    :param noise_beta: perturbation scale of the ``noise`` variant
    """
    model_config = ConfigDict(extra='forbid')

    alpha: float = Field(default=0.8, gt=0, le=1)
    interval: int = Field(default=20, ge=1)
    reset_embedding_layer: bool = False
    reset_decoder: bool = False
    momentum_reset: bool = True
    reset_network_momentum: bool = False
    variant: Variant = 'brb'
    noise_beta: float = Field(default=0.3, ge=0)
    recluster: ReclusterConfig = Field(default_factory=ReclusterConfig)
    init: InitDistribution = Field(default_factory=InitDistribution)

    def due(self, epoch: int) -> bool:
        return self.variant != 'off' and epoch > 0 and epoch % self.interval == 0

    def for_k(self, k: int) -> 'BrbConfig':
        try:
            recluster = ReclusterConfig.model_validate({**self.recluster.model_dump(), 'k': k})
        except ValidationError as e:
            raise ConfigurateException("Invalid reclustering config",
                                       detail={'errors': e.errors(include_url=False, include_context=False)}) from None
        return self.model_copy(update={'recluster': recluster})


def reset_scope(params: NetworkParams, reset_embedding_layer: bool = False,
                reset_decoder: bool = False) -> list[str]:
    """Names of the layers a soft reset touches."""
    last = len(params.encoder) - 1
    names = [f'encoder.{i}' for i in range(len(params.encoder))
             if i < last or reset_embedding_layer]
    if reset_decoder:
        names += [f'decoder.{i}' for i in range(len(params.decoder))]
    return names


def soft_reset(params: NetworkParams, init: InitDistribution, alpha: float, rng: SeededRng,
               reset_embedding_layer: bool = False, reset_decoder: bool = False) -> NetworkParams:
    """
    Returns a copy where every in-scope weight ``w`` becomes ``alpha * w + (1 - alpha) * phi``
    with ``phi`` freshly drawn from ``init``; biases shrink to ``alpha * b``.

    Out-of-scope layers are copied unchanged. ``alpha == 1`` is an exact copy and
    ``alpha == 0`` replaces the in-scope layers by a fresh draw.
    """
    if not 0 <= alpha <= 1:
        raise ConfigurateException(detail={"alpha": f"must be in [0, 1], got {alpha}"})
    result = params.copy()
    if alpha == 1.0:
        return result
    scope = set(reset_scope(params, reset_embedding_layer, reset_decoder))
    for name, layer in result.named_layers():
        if name not in scope:
            continue
        fresh = init.sample_weights(layer.spec, rng.child(name))
        layer.weights = alpha * layer.weights + (1.0 - alpha) * fresh
        layer.biases = alpha * layer.biases + (1.0 - alpha) * init.sample_biases(layer.spec)
    result.mark_updated()
    return result


def momentum_reset(adam: AdamState, algorithm: Algorithm) -> list[str]:
    """Zeros the centroid moments; DCN has no centroid parameters, so nothing changes."""
    if algorithm == 'DCN':
        logger.warning("Momentum reset skipped: DCN centroids are not optimizer parameters")
        return []
    return adam.zero([CENTROIDS])


def _embed_subsample(params: NetworkParams, data: DenseMatrix, cfg: BrbConfig,
                     rng: SeededRng) -> tuple[np.ndarray, DenseMatrix]:
    idx = subsample_indices(data.shape[0], cfg.recluster.subsample, rng.child('subsample'))
    return idx, encode(params, data[idx])


def disentangled_variant(params: NetworkParams, state: ClusterState, cfg: BrbConfig,
                         data: DenseMatrix, rng: SeededRng) -> ClusterState:
    """
    Labels from a soft-reset copy, centroids from the untouched network.

    A copy of ``params`` is soft-reset and used to embed the subsample; each sample is
    labelled by its nearest current centroid in that perturbed space. New centroids
    are the per-label means of the unperturbed embeddings; a label nobody receives
    keeps its centroid. ``params`` is not modified.
    """
    idx, clean = _embed_subsample(params, data, cfg, rng)
    perturbed_net = soft_reset(params, cfg.init, cfg.alpha, rng.child('reset'),
                               cfg.reset_embedding_layer, cfg.reset_decoder)
    perturbed = encode(perturbed_net, data[idx])
    labels = dcn_assign(perturbed, state.centroids)
    centroids = state.centroids.copy()
    for j in range(state.k):
        members = labels == j
        if members.any():
            centroids[j] = clean[members].mean(axis=0)
    updated = state.copy()
    updated.centroids = centroids
    return updated


def perturb_embeddings(embeddings: DenseMatrix, beta: float, rng: SeededRng) -> DenseMatrix:
    """``h + beta * eps`` with Gaussian ``eps`` rescaled to ``||h||`` row by row (0 when h = 0)."""
    eps = sample_gaussian(rng, embeddings.shape[0], embeddings.shape[1])
    h_norm = np.linalg.norm(embeddings, axis=1, keepdims=True)
    e_norm = np.linalg.norm(eps, axis=1, keepdims=True)
    scale = np.divide(h_norm, e_norm, out=np.zeros_like(h_norm), where=(e_norm > 0) & (h_norm > 0))
    return embeddings + beta * eps * scale


def noise_variant(params: NetworkParams, state: ClusterState, cfg: BrbConfig,
                  data: DenseMatrix, rng: SeededRng) -> ClusterState:
    """Reclusters noise-perturbed subsample embeddings; ``params`` is not modified."""
    if cfg.recluster.k != state.k:
        cfg = cfg.for_k(state.k)
    _, clean = _embed_subsample(params, data, cfg, rng)
    noisy = perturb_embeddings(clean, cfg.noise_beta, rng.child('noise'))
    centroids, _ = recluster_embeddings(noisy, cfg.recluster, rng.child('recluster'))
    updated = state.copy()
    updated.centroids = centroids
    return updated


def _rho(params: NetworkParams, centroids: DenseMatrix, eval_data: DenseMatrix | None,
         epoch: int, tag: str):
    if eval_data is None or centroids.shape[0] < 2:
        return None
    return distance_ratio_hist(encode(params, eval_data), centroids, epoch=epoch, tag=tag)


@log()
def apply_brb(params: NetworkParams,
              adam: AdamState,
              state: ClusterState,
              epoch: int,
              cfg: BrbConfig,
              data: DenseMatrix,
              rng: SeededRng,
              algorithm: Algorithm,
              eval_data: DenseMatrix | None = None
              ) -> tuple[NetworkParams, AdamState, ClusterState, BrbEvent | None]:
    """
    One event at the start of ``epoch``.

    ``brb``: soft reset, embed a fresh subsample, recluster, replace centroids, reset
    centroid momentum and (DCN) counts. ``reset_only`` stops after the soft reset,
    ``recluster_only`` skips it. ``disentangled`` and ``noise`` replace the centroids
    through their ablation procedures. ``off`` returns everything unchanged.

    :param rng: event stream; the harness derives one per epoch
    :param eval_data: when given, distance-ratio histograms are taken before and after
    :return: params, adam, state, event (None for ``off``)
    """
    if cfg.variant == 'off':
        return params, adam, state, None
    if cfg.recluster.k is None or cfg.recluster.k != state.k:
        cfg = cfg.for_k(state.k)
    timings = BrbTimings()
    event = BrbEvent(epoch=epoch, variant=cfg.variant)
    event.rho_before = _rho(params, state.centroids, eval_data, epoch, 'before')
    old_centroids = state.centroids.copy()

    if cfg.variant in ('brb', 'reset_only'):
        started = time.perf_counter()
        params = soft_reset(params, cfg.init, cfg.alpha, rng.child('reset'),
                            cfg.reset_embedding_layer, cfg.reset_decoder)
        timings.reset_seconds = time.perf_counter() - started
        event.reset_tensors = [f'{layer}.{part}'
                               for layer in reset_scope(params, cfg.reset_embedding_layer, cfg.reset_decoder)
                               for part in ('weights', 'biases')]
        if cfg.reset_network_momentum:
            event.momentum_reset_tensors += adam.zero(event.reset_tensors)

    if cfg.variant in ('brb', 'recluster_only'):
        started = time.perf_counter()
        idx, embeddings = _embed_subsample(params, data, cfg, rng)
        timings.embed_seconds = time.perf_counter() - started
        started = time.perf_counter()
        centroids, _ = recluster_embeddings(embeddings, cfg.recluster, rng.child('recluster'))
        timings.cluster_seconds = time.perf_counter() - started
        event.subsample_size = int(idx.shape[0])
        state = state.copy()
        state.centroids = centroids
    elif cfg.variant in ('disentangled', 'noise'):
        started = time.perf_counter()
        procedure = disentangled_variant if cfg.variant == 'disentangled' else noise_variant
        state = procedure(params, state, cfg, data, rng)
        timings.cluster_seconds = time.perf_counter() - started
        event.subsample_size = min(cfg.recluster.subsample, data.shape[0])

    if cfg.variant != 'reset_only':
        started = time.perf_counter()
        if cfg.momentum_reset:
            event.momentum_reset_tensors += momentum_reset(adam, algorithm)
        if algorithm == 'DCN':
            state.reset_counts()
        timings.momentum_seconds = time.perf_counter() - started
        event.centroid_shift = matched_centroid_shift(old_centroids, state.centroids)

    event.rho_after = _rho(params, state.centroids, eval_data, epoch, 'after')
    event.timings = timings
    logger.info("BRB %s at epoch %d: reset %.4fs, embed %.4fs, cluster %.4fs, momentum %.4fs",
                cfg.variant, epoch, timings.reset_seconds, timings.embed_seconds,
                timings.cluster_seconds, timings.momentum_seconds)
    return params, adam, state, event
