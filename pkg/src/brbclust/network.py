"""
Feed-forward autoencoder with hand-derived backpropagation.

Weights are stored as ``(in_dim, out_dim)`` matrices so a layer computes
``act(x @ W + b)``. Hidden layers use ReLU; the embedding layer and the final
decoder layer are linear.
"""
import copy
from dataclasses import dataclass, field
from typing import Literal, Iterator

import numpy as np
from pydantic import BaseModel, Field

from .exceptions import ShapeException, ContractViolation
from .numerics import SeededRng, check_finite, sample_uniform
from .settings import config_numerics
from .types_ import Activation, DenseMatrix, Vector


class LayerSpec(BaseModel):
    in_dim: int = Field(ge=1)
    out_dim: int = Field(ge=1)
    activation: Activation = 'relu'


class InitDistribution(BaseModel):
    """
    Weight distribution used at initialization and as the fresh-sample law of soft resets.

    ``uniform_fan_in`` draws each weight from U(-gain/sqrt(fan_in), +gain/sqrt(fan_in)).
    Biases are always initialized to zero.
    """
    scheme: Literal['uniform_fan_in'] = 'uniform_fan_in'
    gain: float = Field(default=1.0, gt=0)

    def bound(self, fan_in: int) -> float:
        return self.gain / np.sqrt(fan_in)

    def sample_weights(self, spec: LayerSpec, rng: SeededRng) -> DenseMatrix:
        b = self.bound(spec.in_dim)
        return sample_uniform(rng, spec.in_dim, spec.out_dim, -b, b)

    @staticmethod
    def sample_biases(spec: LayerSpec) -> Vector:
        return np.zeros(spec.out_dim)


@dataclass
class Layer:
    spec: LayerSpec
    weights: DenseMatrix
    biases: Vector


@dataclass
class NetworkParams:
    """
    Encoder and decoder layers of the autoencoder.

    ``version`` is bumped by every in-place parameter update so that a forward cache
    can detect that it was produced by older parameters.
    """
    encoder: list[Layer]
    decoder: list[Layer]
    version: int = field(default=0)

    @property
    def input_dim(self) -> int:
        return self.encoder[0].spec.in_dim

    @property
    def embedding_dim(self) -> int:
        return self.encoder[-1].spec.out_dim

    @property
    def layer_specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.encoder + self.decoder]

    def named_layers(self) -> Iterator[tuple[str, Layer]]:
        for i, layer in enumerate(self.encoder):
            yield f'encoder.{i}', layer
        for i, layer in enumerate(self.decoder):
            yield f'decoder.{i}', layer

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Live references to every parameter array, keyed ``<part>.<idx>.<weights|biases>``."""
        tensors = {}
        for name, layer in self.named_layers():
            tensors[f'{name}.weights'] = layer.weights
            tensors[f'{name}.biases'] = layer.biases
        return tensors

    def copy(self) -> 'NetworkParams':
        return copy.deepcopy(self)

    def zeros_like(self) -> 'NetworkParams':
        return NetworkParams(
            encoder=[Layer(l.spec, np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in self.encoder],
            decoder=[Layer(l.spec, np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in self.decoder])

    def mark_updated(self) -> None:
        self.version += 1


@dataclass
class ForwardCache:
    params_id: int
    params_version: int
    encoder_inputs: list[DenseMatrix]
    encoder_pre: list[DenseMatrix]
    decoder_inputs: list[DenseMatrix]
    decoder_pre: list[DenseMatrix]


def build_specs(input_dim: int,
                hidden_dims: list[int],
                embedding_dim: int) -> tuple[list[LayerSpec], list[LayerSpec]]:
    """Mirrored encoder/decoder specs for ``D-h1-...-hm-d``."""
    widths = [input_dim, *hidden_dims, embedding_dim]
    encoder = [LayerSpec(in_dim=a, out_dim=b, activation='relu')
               for a, b in zip(widths[:-1], widths[1:])]
    encoder[-1] = encoder[-1].model_copy(update={'activation': 'identity'})
    back = widths[::-1]
    decoder = [LayerSpec(in_dim=a, out_dim=b, activation='relu')
               for a, b in zip(back[:-1], back[1:])]
    decoder[-1] = decoder[-1].model_copy(update={'activation': 'identity'})
    return encoder, decoder


def _check_chain(specs: list[LayerSpec], part: str) -> None:
    if not specs:
        raise ShapeException(f"{part} must have at least one layer")
    for i, (a, b) in enumerate(zip(specs[:-1], specs[1:])):
        if a.out_dim != b.in_dim:
            raise ShapeException("Layer specs do not chain",
                                 detail={'part': part, 'layer': i,
                                         'out_dim': a.out_dim, 'next_in_dim': b.in_dim})


def init_network(encoder_specs: list[LayerSpec],
                 decoder_specs: list[LayerSpec],
                 init: InitDistribution,
                 rng: SeededRng) -> NetworkParams:
    """
    Draws a fresh autoencoder.

    :param encoder_specs: D -> ... -> d
    :param decoder_specs: d -> ... -> D
    :param init: weight distribution (biases are zero)
    :param rng: stream the weights are drawn from, layer by layer in order
    :return: NetworkParams
    """
    _check_chain(encoder_specs, 'encoder')
    _check_chain(decoder_specs, 'decoder')
    if encoder_specs[-1].out_dim != decoder_specs[0].in_dim:
        raise ShapeException("Decoder input must equal embedding size",
                             detail={'embedding': encoder_specs[-1].out_dim,
                                     'decoder_in': decoder_specs[0].in_dim})
    if decoder_specs[-1].out_dim != encoder_specs[0].in_dim:
        raise ShapeException("Decoder output must equal input size",
                             detail={'input': encoder_specs[0].in_dim,
                                     'decoder_out': decoder_specs[-1].out_dim})
    encoder = [Layer(s, init.sample_weights(s, rng), init.sample_biases(s)) for s in encoder_specs]
    decoder = [Layer(s, init.sample_weights(s, rng), init.sample_biases(s)) for s in decoder_specs]
    return NetworkParams(encoder=encoder, decoder=decoder)


def _activate(pre: DenseMatrix, activation: Activation) -> DenseMatrix:
    if activation == 'relu':
        return np.maximum(pre, 0.0)
    return pre


def _run(layers: list[Layer], x: DenseMatrix,
         inputs: list[DenseMatrix] | None = None,
         pres: list[DenseMatrix] | None = None) -> DenseMatrix:
    for layer in layers:
        if inputs is not None:
            inputs.append(x)
        pre = x @ layer.weights + layer.biases
        if pres is not None:
            pres.append(pre)
        x = _activate(pre, layer.spec.activation)
    return x


def forward(params: NetworkParams,
            batch: DenseMatrix) -> tuple[DenseMatrix, DenseMatrix, ForwardCache]:
    """
    Encodes and reconstructs a batch.

    :return: embedding H (n x d), reconstruction Z (n x D), cache for ``backward``
    """
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise ShapeException("Batch does not match network input",
                             detail={'batch': batch.shape, 'input_dim': params.input_dim})
    cache = ForwardCache(id(params), params.version, [], [], [], [])
    embedding = _run(params.encoder, batch, cache.encoder_inputs, cache.encoder_pre)
    reconstruction = _run(params.decoder, embedding, cache.decoder_inputs, cache.decoder_pre)
    return embedding, reconstruction, cache


def encode(params: NetworkParams, data: DenseMatrix, batch_size: int | None = None) -> DenseMatrix:
    """Embeds a whole matrix in batches; no cache is kept."""
    if data.ndim != 2 or data.shape[1] != params.input_dim:
        raise ShapeException("Data does not match network input",
                             detail={'data': data.shape, 'input_dim': params.input_dim})
    batch_size = batch_size or config_numerics.embed_batch_size
    if data.shape[0] == 0:
        return np.zeros((0, params.embedding_dim))
    parts = [_run(params.encoder, data[i:i + batch_size])
             for i in range(0, data.shape[0], batch_size)]
    return check_finite(np.concatenate(parts, axis=0), 'embedding')


def reconstruction_loss(batch: DenseMatrix, reconstruction: DenseMatrix) -> float:
    """Mean squared error over all entries."""
    if batch.shape != reconstruction.shape:
        raise ShapeException("Reconstruction shape mismatch",
                             detail={'batch': batch.shape, 'reconstruction': reconstruction.shape})
    return float(np.mean((reconstruction - batch) ** 2))


def reconstruction_grad(batch: DenseMatrix, reconstruction: DenseMatrix) -> DenseMatrix:
    """d reconstruction_loss / d reconstruction."""
    return 2.0 * (reconstruction - batch) / batch.size


def _backprop(layers: list[Layer], inputs: list[DenseMatrix], pres: list[DenseMatrix],
              grads: list[Layer], upstream: DenseMatrix) -> DenseMatrix:
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.spec.activation == 'relu':
            upstream = upstream * (pres[i] > 0)
        grads[i].weights += inputs[i].T @ upstream
        grads[i].biases += upstream.sum(axis=0)
        upstream = upstream @ layer.weights.T
    return upstream


def backward(params: NetworkParams,
             cache: ForwardCache,
             grad_embedding: DenseMatrix | None,
             grad_reconstruction: DenseMatrix | None) -> NetworkParams:
    """
    Chain rule through decoder then encoder.

    :param grad_embedding: dL/dH from losses defined on the embedding, or None
    :param grad_reconstruction: dL/dZ, or None when no loss touches the decoder
    :return: gradients shaped like ``params``
    """
    if cache.params_id != id(params) or cache.params_version != params.version:
        raise ContractViolation("Forward cache is stale",
                                detail={'cache_version': cache.params_version,
                                        'params_version': params.version})
    grads = params.zeros_like()
    n = cache.encoder_inputs[0].shape[0]
    upstream = np.zeros((n, params.embedding_dim))
    if grad_reconstruction is not None:
        upstream += _backprop(params.decoder, cache.decoder_inputs, cache.decoder_pre,
                              grads.decoder, grad_reconstruction)
    if grad_embedding is not None:
        upstream += grad_embedding
    _backprop(params.encoder, cache.encoder_inputs, cache.encoder_pre, grads.encoder, upstream)
    return grads
