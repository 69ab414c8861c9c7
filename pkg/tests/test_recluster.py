import itertools
from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError

from brbclust.exceptions import ConfigurateException, InputException
from brbclust.numerics import SeededRng
from brbclust.recluster import ReclusterConfig, kmeans, kmeans_pp_seed, kmedoids, kmedoids_cost, \
    recluster_embeddings


def test_kmeans_two_groups(rng):
    points = np.array([[0.0], [1.0], [10.0], [11.0]])
    centers, labels, inertia = kmeans(points, ReclusterConfig(k=2, subsample=4), rng)
    assert sorted(centers[:, 0].tolist()) == [0.5, 10.5]
    assert inertia == pytest.approx(1.0)
    assert labels[0] == labels[1] != labels[2] == labels[3]


def test_kmeans_reproducible(blobs):
    config = ReclusterConfig(k=3, subsample=120)
    a = kmeans(blobs.x, config, SeededRng(5))
    b = kmeans(blobs.x, config, SeededRng(5))
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_kmeans_recovers_blobs(blobs):
    runs = [kmeans(blobs.x, ReclusterConfig(k=3, subsample=120), SeededRng(s)) for s in range(5)]
    _, labels, _ = min(runs, key=lambda run: run[2])
    for j in range(3):
        assert np.unique(labels[blobs.y_true == j]).size == 1


def test_kmeans_coincident_points(rng):
    points = np.zeros((5, 2))
    centers, labels, inertia = kmeans(points, ReclusterConfig(k=3, subsample=5), rng)
    assert centers.shape == (3, 2)
    assert inertia == 0.0


def test_kmeans_pp_follows_d2_law():
    points = np.array([[0.0], [1.0], [3.0]])
    draws = Counter()
    trials = 3000
    root = SeededRng(11)
    for t in range(trials):
        seeds = kmeans_pp_seed(points, 2, root.child(t))
        draws[(seeds[0, 0], seeds[1, 0])] += 1
    expected = {(0.0, 1.0): 0.1 / 3, (0.0, 3.0): 0.9 / 3,
                (1.0, 0.0): 0.2 / 3, (1.0, 3.0): 0.8 / 3,
                (3.0, 0.0): 9 / 39, (3.0, 1.0): 4 / 39}
    for pair, p in expected.items():
        sd = np.sqrt(trials * p * (1 - p))
        assert abs(draws[pair] - trials * p) <= 4 * sd, pair


def test_kmedoids_returns_data_points(blobs, rng):
    medoids, labels = kmedoids(blobs.x, ReclusterConfig(algorithm='kmedoids', k=3, subsample=120), rng)
    for m in medoids:
        assert np.any(np.all(blobs.x == m, axis=1))
    assert labels.shape == (blobs.n,)
    assert kmedoids_cost(blobs.x, medoids) <= kmedoids_cost(blobs.x, blobs.x[:3])


def test_recluster_dispatch(blobs, rng):
    for algorithm in ('kmeans', 'kmeans_pp_init', 'kmedoids'):
        config = ReclusterConfig(algorithm=algorithm, k=3, subsample=120)
        centers, labels = recluster_embeddings(blobs.x, config, rng.child(algorithm))
        assert centers.shape == (3, blobs.dim)
        assert labels.max() < 3


def test_em_is_reserved():
    with pytest.raises(ValidationError):
        ReclusterConfig(algorithm='em')


def test_subsample_must_cover_k():
    with pytest.raises(ValidationError):
        ReclusterConfig(k=10, subsample=5)


def test_missing_k(rng):
    with pytest.raises(ConfigurateException):
        kmeans(np.zeros((4, 1)), ReclusterConfig(), rng)


def test_fewer_points_than_clusters(rng):
    with pytest.raises(InputException):
        kmeans(np.zeros((2, 1)), ReclusterConfig(k=3, subsample=3), rng)


def _optimal_two_means(points: np.ndarray) -> float:
    n = points.shape[0]
    best = np.inf
    for mask in range(1, 2 ** (n - 1)):
        side = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        cost = sum(float(np.sum((part - part.mean(axis=0)) ** 2)) for part in (points[side], points[~side]))
        best = min(best, cost)
    return best


def test_kmeans_near_exhaustive_optimum():
    gen = np.random.default_rng(77)
    for case in range(30):
        n = int(gen.integers(2, 11))
        points = gen.normal(size=(n, 2))
        config = ReclusterConfig(k=2, subsample=n)
        inertia = min(kmeans(points, config, SeededRng(case).child(s))[2] for s in range(20))
        assert inertia <= 1.05 * _optimal_two_means(points) + 1e-12


def test_kmeans_single_cluster_is_mean(blobs, rng):
    centers, labels, inertia = kmeans(blobs.x, ReclusterConfig(k=1, subsample=120), rng)
    assert np.allclose(centers[0], blobs.x.mean(axis=0), rtol=1e-12, atol=1e-12)
    assert np.all(labels == 0)
    assert inertia == pytest.approx(float(np.sum((blobs.x - blobs.x.mean(axis=0)) ** 2)))


def _best_pair_cost(points: np.ndarray) -> float:
    return min(kmedoids_cost(points, points[[a, b]]) for a, b in itertools.combinations(range(len(points)), 2))


def test_kmedoids_with_swaps_matches_brute_force():
    gen = np.random.default_rng(41)
    config = ReclusterConfig(algorithm='kmedoids', k=2, subsample=8, medoid_swaps=True)
    for case in range(20):
        points = gen.normal(size=(8, 2))
        found = min(kmedoids_cost(points, kmedoids(points, config, SeededRng(case).child(s))[0])
                    for s in range(10))
        assert found == pytest.approx(_best_pair_cost(points), rel=1e-9), case


def test_kmedoid_swaps_never_worsen_alternating(blobs):
    plain = ReclusterConfig(algorithm='kmedoids', k=3, subsample=120)
    swapped = plain.model_copy(update={'medoid_swaps': True})
    for s in range(5):
        a, _ = kmedoids(blobs.x, plain, SeededRng(s))
        b, _ = kmedoids(blobs.x, swapped, SeededRng(s))
        assert kmedoids_cost(blobs.x, b) <= kmedoids_cost(blobs.x, a) + 1e-9
        for m in b:
            assert np.any(np.all(blobs.x == m, axis=1))


def test_kmedoids_k_equals_n_returns_points(rng):
    points = np.array([[0.0, 0.0], [1.0, 5.0], [-3.0, 2.0]])
    medoids, labels = kmedoids(points, ReclusterConfig(algorithm='kmedoids', k=3, subsample=3), rng)
    assert sorted(map(tuple, medoids)) == sorted(map(tuple, points))
    assert sorted(labels.tolist()) == [0, 1, 2]
