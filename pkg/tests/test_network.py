import numpy as np
import pytest

from brbclust.exceptions import ContractViolation, ShapeException
from brbclust.network import (InitDistribution, Layer, LayerSpec, NetworkParams, backward, build_specs, encode,
                              forward, init_network, reconstruction_grad, reconstruction_loss)
from brbclust.numerics import SeededRng


def _numeric_grad(params, batch, tensor: np.ndarray, index: tuple, eps: float = 1e-6) -> float:
    saved = tensor[index]
    tensor[index] = saved + eps
    _, z, _ = forward(params, batch)
    plus = reconstruction_loss(batch, z)
    tensor[index] = saved - eps
    _, z, _ = forward(params, batch)
    minus = reconstruction_loss(batch, z)
    tensor[index] = saved
    return (plus - minus) / (2 * eps)


def test_build_specs_mirrored():
    encoder, decoder = build_specs(12, [8, 6], 3)
    assert [(s.in_dim, s.out_dim) for s in encoder] == [(12, 8), (8, 6), (6, 3)]
    assert [(s.in_dim, s.out_dim) for s in decoder] == [(3, 6), (6, 8), (8, 12)]
    assert encoder[-1].activation == 'identity'
    assert decoder[-1].activation == 'identity'
    assert all(s.activation == 'relu' for s in encoder[:-1] + decoder[:-1])


def test_init_network_bounds_and_biases(tiny_net):
    for _, layer in tiny_net.named_layers():
        bound = 1.0 / np.sqrt(layer.spec.in_dim)
        assert np.all(np.abs(layer.weights) <= bound)
        assert np.all(layer.biases == 0)


def test_init_network_reproducible():
    encoder, decoder = build_specs(5, [4], 2)
    a = init_network(encoder, decoder, InitDistribution(), SeededRng(3))
    b = init_network(encoder, decoder, InitDistribution(), SeededRng(3))
    for (_, la), (_, lb) in zip(a.named_layers(), b.named_layers()):
        assert np.array_equal(la.weights, lb.weights)


def test_init_network_rejects_broken_chain(rng):
    encoder = [LayerSpec(in_dim=4, out_dim=3), LayerSpec(in_dim=2, out_dim=2)]
    decoder = [LayerSpec(in_dim=2, out_dim=4)]
    with pytest.raises(ShapeException):
        init_network(encoder, decoder, InitDistribution(), rng)


def test_forward_shapes(tiny_net, tiny_batch):
    h, z, _ = forward(tiny_net, tiny_batch)
    assert h.shape == (8, 3)
    assert z.shape == (8, 12)
    assert np.array_equal(encode(tiny_net, tiny_batch, batch_size=3), h)


def test_forward_rejects_wrong_width(tiny_net):
    with pytest.raises(ShapeException):
        forward(tiny_net, np.zeros((2, 5)))


def test_backward_matches_finite_differences(biased_net, tiny_batch):
    _, z, cache = forward(biased_net, tiny_batch)
    grads = backward(biased_net, cache, None, reconstruction_grad(tiny_batch, z))
    analytic = grads.named_tensors()
    for name, tensor in biased_net.named_tensors().items():
        for index in np.ndindex(tensor.shape):
            numeric = _numeric_grad(biased_net, tiny_batch, tensor, index)
            a = analytic[name][index]
            assert abs(a - numeric) <= 1e-4 * max(abs(a), abs(numeric)) + 1e-8, (name, index)


def test_stale_cache_is_rejected(tiny_net, tiny_batch):
    _, z, cache = forward(tiny_net, tiny_batch)
    tiny_net.mark_updated()
    with pytest.raises(ContractViolation):
        backward(tiny_net, cache, None, reconstruction_grad(tiny_batch, z))


def test_cache_of_a_copy_is_rejected(tiny_net, tiny_batch):
    _, z, cache = forward(tiny_net, tiny_batch)
    with pytest.raises(ContractViolation):
        backward(tiny_net.copy(), cache, None, reconstruction_grad(tiny_batch, z))


def test_embedding_gradient_skips_decoder(tiny_net, tiny_batch):
    h, _, cache = forward(tiny_net, tiny_batch)
    grads = backward(tiny_net, cache, np.ones_like(h), None)
    assert all(np.all(layer.weights == 0) for layer in grads.decoder)
    assert any(np.any(layer.weights != 0) for layer in grads.encoder)


def test_reconstruction_loss_shape_mismatch():
    with pytest.raises(ShapeException):
        reconstruction_loss(np.zeros((2, 3)), np.zeros((3, 2)))


def test_init_network_weight_mean_and_bound():
    encoder = [LayerSpec(in_dim=4, out_dim=2500, activation='identity')]
    decoder = [LayerSpec(in_dim=2500, out_dim=4, activation='identity')]
    net = init_network(encoder, decoder, InitDistribution(), SeededRng(12))
    weights = net.encoder[0].weights
    assert weights.size == 10 ** 4
    assert np.all(np.abs(weights) <= 0.5)
    assert abs(weights.mean()) <= 0.01


def _layer(activation, weights, biases) -> Layer:
    weights = np.asarray(weights, dtype=float)
    spec = LayerSpec(in_dim=weights.shape[0], out_dim=weights.shape[1], activation=activation)
    return Layer(spec, weights, np.asarray(biases, dtype=float))


def test_forward_hand_computed():
    net = NetworkParams(encoder=[_layer('relu', [[1.0, 0.0], [0.0, -1.0]], [0.5, 0.5]),
                                 _layer('identity', [[2.0], [3.0]], [1.0])],
                        decoder=[_layer('identity', [[1.0, -1.0]], [0.0, 0.0])])
    h, z, _ = forward(net, np.array([[1.0, 2.0]]))
    # pre-activations (1.5, -1.5) -> relu (1.5, 0) -> h = 2 * 1.5 + 1
    assert h.tolist() == [[4.0]]
    assert z.tolist() == [[4.0, -4.0]]


def test_forward_identity_and_zero_input():
    net = NetworkParams(encoder=[_layer('identity', np.eye(3), np.zeros(3))],
                        decoder=[_layer('identity', np.eye(3), np.zeros(3))])
    batch = np.arange(6, dtype=float).reshape(2, 3)
    h, _, _ = forward(net, batch)
    assert np.array_equal(h, batch)
    h, _, _ = forward(net, np.zeros((2, 3)))
    assert np.all(h == 0)


def test_forward_matches_loop_oracle(biased_net, tiny_batch):
    def run(layers, x):
        for layer in layers:
            out = np.zeros((x.shape[0], layer.spec.out_dim))
            for i in range(x.shape[0]):
                for j in range(layer.spec.out_dim):
                    value = layer.biases[j] + sum(x[i, k] * layer.weights[k, j] for k in range(layer.spec.in_dim))
                    out[i, j] = max(value, 0.0) if layer.spec.activation == 'relu' else value
            x = out
        return x

    h, z, _ = forward(biased_net, tiny_batch)
    expected_h = run(biased_net.encoder, tiny_batch)
    assert np.allclose(h, expected_h, rtol=1e-12, atol=1e-12)
    assert np.allclose(z, run(biased_net.decoder, expected_h), rtol=1e-12, atol=1e-12)
