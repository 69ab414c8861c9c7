import numpy as np
import pytest

from brbclust.config import DatasetSpec, ExperimentConfig
from brbclust.data import Dataset, make_blobs
from brbclust.network import InitDistribution, build_specs, init_network
from brbclust.numerics import SeededRng
from brbclust.objectives import ClusterState
from brbclust.settings import config_numerics


# --- Random streams ---
@pytest.fixture
def rng() -> SeededRng:
    return SeededRng(1234)


# --- Networks ---
@pytest.fixture
def tiny_net(rng):
    encoder, decoder = build_specs(12, [8, 6], 3)
    return init_network(encoder, decoder, InitDistribution(), rng.child('net'))


@pytest.fixture
def biased_net(tiny_net, rng):
    # nonzero biases keep every pre-activation off the ReLU kink
    stream = rng.child('biases')
    for name, layer in tiny_net.named_layers():
        layer.biases = stream.child(name).uniform(-0.5, 0.5, layer.spec.out_dim)
    return tiny_net


@pytest.fixture
def tiny_batch(rng) -> np.ndarray:
    return rng.child('batch').normal((8, 12))


@pytest.fixture
def tiny_state(rng) -> ClusterState:
    return ClusterState(centroids=rng.child('centroids').normal((3, 3)))


# --- Data ---
@pytest.fixture
def blobs() -> Dataset:
    return make_blobs(3, 40, 4, 8.0, 0.5, SeededRng(7).child('blobs'))


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return ExperimentConfig.model_validate({
        'dataset': DatasetSpec(kind='blobs', k=3, n_per_cluster=30, dim=6,
                               separation=6.0, spread=0.5, blob_seed=3),
        'algorithm': 'DEC',
        'scenario': 1,
        'hidden_dims': [8],
        'batch_size': 32,
        'pretrain_epochs': 2,
        'clustering_epochs': 5,
        'brb': {'interval': 2, 'recluster': {'subsample': 60}},
        'seeds': [0, 1],
    })


@pytest.fixture
def restore_numerics():
    saved = {name: getattr(config_numerics, name)
             for name in ('simplex_atol', 'inertia_rtol', 'max_blob_retries', 'eval_subsample',
                          'diagnostics_every', 'embed_batch_size')}
    yield config_numerics
    config_numerics.configure(**saved)
