"""
Tests for minimum-weight perfect matching
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.geometry import Geometry, GeometryKind, generate_random
from core.matching import (PairMatching, _greedy_matching, best_matching, distance_matrix,
                           enumerate_matchings, global_edges)


def brute_force_weight(geom: Geometry) -> float:
    dist = distance_matrix(geom)
    return min(sum(dist[a, b] for a, b in pairs) for pairs in enumerate_matchings(geom.n_atoms))


@pytest.mark.parametrize("n, count", [(2, 1), (4, 3), (6, 15), (8, 105)])
def test_matching_count(n, count):
    assert sum(1 for _ in enumerate_matchings(n)) == count


@settings(max_examples=20, deadline=None)
@given(n=st.sampled_from([2, 4, 6, 8]), seed=st.integers(min_value=0, max_value=10**6))
def test_best_matching_is_optimal(n, seed):
    geom = generate_random(n, 2.5, seed)
    matching = best_matching(geom)
    assert matching.total_weight == pytest.approx(brute_force_weight(geom), rel=1e-9)
    assert sorted(i for pair in matching.pairs for i in pair) == list(range(n))


@pytest.mark.parametrize("n", [4, 6, 8])
def test_matches_brute_force_on_random_clusters(n):
    for seed in range(100):
        geom = generate_random(n, 2.5, seed)
        matching = best_matching(geom)
        assert matching.total_weight == pytest.approx(brute_force_weight(geom), rel=1e-9), seed


@pytest.mark.parametrize("factor", [0.1, 3.0, 10.0])
@pytest.mark.parametrize("n", [4, 6, 8])
def test_scaling_keeps_pairs(n, factor):
    for seed in range(100):
        geom = generate_random(n, 2.5, seed)
        scaled = Geometry(coords=geom.coords * factor, kind=geom.kind)
        assert best_matching(scaled).pairs == best_matching(geom).pairs, seed


def test_square_ring_tie_takes_first_matching():
    coords = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]
    matching = best_matching(Geometry(coords=coords, kind=GeometryKind.RING))
    # {(0,1),(2,3)} and {(0,3),(1,2)} both weigh 2.0
    assert matching.pairs == [(0, 1), (2, 3)]
    assert matching.total_weight == pytest.approx(2.0)


def test_chain_pairs_neighbours():
    coords = np.zeros((4, 3))
    coords[:, 2] = np.arange(4) * 1.0
    matching = best_matching(Geometry(coords=coords, kind=GeometryKind.LINEAR))
    assert matching.pairs == [(0, 1), (2, 3)]
    assert matching.weights == pytest.approx([1.0, 1.0])


def test_odd_atom_count_rejected():
    with pytest.raises(ValueError):
        best_matching(generate_random(3, 2.5, seed=0))


def test_large_system_needs_fallback():
    geom = generate_random(14, 2.5, seed=0)
    with pytest.raises(ValueError):
        best_matching(geom)
    matching = best_matching(geom, greedy_fallback=True)
    assert matching.n_pairs == 7
    assert sorted(matching.orbital_order()) == list(range(14))


def dimers(n_pairs: int, seed: int, bond: float = 0.74, spacing: float = 3.0) -> Geometry:
    """Well separated H2 units on a jittered cubic grid, atom order shuffled"""
    rng = np.random.default_rng(seed)
    side = int(np.ceil(n_pairs ** (1 / 3)))
    centers = np.array([(i, j, k) for i in range(side) for j in range(side) for k in range(side)][:n_pairs], dtype=float)
    centers = centers * spacing + rng.uniform(-0.2, 0.2, centers.shape)
    axes = rng.normal(size=(n_pairs, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    coords = np.concatenate([centers - 0.5 * bond * axes, centers + 0.5 * bond * axes])
    return Geometry(coords=coords[rng.permutation(len(coords))], kind=GeometryKind.RANDOM)


@pytest.mark.parametrize("n_pairs", [2, 3, 4, 5, 6])
def test_greedy_fallback_finds_separated_dimers(n_pairs):
    for seed in range(20):
        geom = dimers(n_pairs, seed)
        exact = best_matching(geom)
        greedy = _greedy_matching(distance_matrix(geom))
        assert sorted(greedy) == exact.pairs
        assert all(w == pytest.approx(0.74) for w in exact.weights)


def test_greedy_fallback_is_deterministic_and_bounded():
    for seed in range(50):
        geom = generate_random(8, 2.5, seed)
        dist = distance_matrix(geom)
        greedy = _greedy_matching(dist)
        assert greedy == _greedy_matching(dist.copy())
        assert sorted(i for pair in greedy for i in pair) == list(range(8))
        assert sum(dist[a, b] for a, b in greedy) >= brute_force_weight(geom) - 1e-12


def test_greedy_fallback_on_large_dimer_cluster():
    geom = dimers(9, seed=5)
    matching = best_matching(geom, greedy_fallback=True)
    assert matching.n_pairs == 9
    assert matching.weights == pytest.approx([0.74] * 9)


def test_pairs_are_normalized():
    matching = PairMatching(pairs=[(3, 2), (1, 0)])
    assert matching.pairs == [(0, 1), (2, 3)]
    assert matching.orbital_order() == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        PairMatching(pairs=[(0, 1), (1, 2)])


def test_from_list_recomputes_weights(h4_geometry):
    matching = PairMatching.from_list([[0, 1], [2, 3]], h4_geometry)
    assert matching.weights[0] == pytest.approx(0.9)


def test_global_edges(h4_geometry):
    edges = global_edges(h4_geometry)
    assert len(edges) == 6
    assert all(u < v for u, v, _ in edges)
    assert edges[0][2] == pytest.approx(0.9)
