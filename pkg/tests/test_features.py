"""
Tests for edge features, radial expansion and batch padding
"""

import math

import numpy as np
import pytest

from core.geometry import Geometry, GeometryKind
from core.matching import PairMatching, best_matching
from learning.features import (RBF_COUNT, batches, build_feature_pack, edge_angle, make_batch,
                               normalize_columns, pair_blocked, rbf_centers, rbf_expand)


def test_rbf_shape_and_peak():
    centers = rbf_centers()
    assert len(centers) == RBF_COUNT
    assert centers[0] == 0.0 and centers[-1] == 5.0
    values = rbf_expand(np.array([[centers[10], 1.0]]))
    assert values.shape == (1, 2, RBF_COUNT)
    assert values[0, 0, 10] == pytest.approx(1.0)
    assert np.argmax(values[0, 0]) == 10


def test_rbf_rejects_negative_distance():
    with pytest.raises(ValueError):
        rbf_expand(np.array([-0.1]))


def test_normalize_columns():
    values = np.array([[1.0, 0.0], [3.0, 0.0], [2.0, 0.0]])
    normalized = normalize_columns(values)
    np.testing.assert_allclose(normalized[:, 0], [0.0, 2.0 / 3.0, 1.0 / 3.0])
    np.testing.assert_allclose(normalized[:, 1], 0.0)


def test_edge_angle():
    assert edge_angle(np.array([0.0, 0.0, 2.0])) == pytest.approx(0.0)
    assert edge_angle(np.array([1.0, 0.0, 0.0])) == pytest.approx(math.pi / 2)
    assert edge_angle(np.array([0.0, 0.0, -1.0])) == pytest.approx(math.pi)
    assert edge_angle(np.zeros(3)) == 0.0


def test_feature_pack(h4_geometry):
    matching = best_matching(h4_geometry)
    pack = build_feature_pack(h4_geometry, matching)
    assert pack.edges.shape == (6, 2)
    assert pack.matched_edges.tolist() == [[0, 1], [2, 3]]
    assert pack.matched_distances[0] == pytest.approx(0.9)
    assert pack.normalized_features.shape == (2, 8)
    assert pack.edge_features[0, 1] == pytest.approx(0.0)


def test_pair_blocked_order(h4_geometry):
    matching = PairMatching(pairs=[(0, 3), (1, 2)])
    coords, pairs = pair_blocked(h4_geometry, matching)
    np.testing.assert_array_equal(coords[1], h4_geometry.coords[3])
    assert pairs == [(0, 1), (2, 3)]


def test_batch_padding(h2_geometry, h4_geometry):
    geoms = [h2_geometry, h4_geometry]
    matchings = [best_matching(g) for g in geoms]
    batch = make_batch(geoms, matchings, targets=[np.array([0.1]), np.array([0.2, -0.3])])
    assert batch.positions.shape == (2, 4, 3)
    np.testing.assert_array_equal(batch.atom_mask, [[1, 1, 0, 0], [1, 1, 1, 1]])
    np.testing.assert_array_equal(batch.pair_mask, [[1, 0], [1, 1]])
    np.testing.assert_allclose(batch.targets, [[0.1, 0.0], [0.2, -0.3]])
    assert batch.pair_distances()[0, 0] == pytest.approx(0.7414)
    neighbours = batch.neighbour_mask()
    assert neighbours[0].sum() == 2
    assert neighbours[1].sum() == 12


def test_batch_validation(h2_geometry):
    with pytest.raises(ValueError):
        make_batch([], [])
    with pytest.raises(ValueError):
        make_batch([h2_geometry], [])


def test_batches_split():
    chunks = batches(np.arange(7), 3)
    assert [c.tolist() for c in chunks] == [[0, 1, 2], [3, 4, 5], [6]]


def test_batch_is_built_from_feature_packs(h2_geometry, h4_geometry):
    matching = PairMatching(pairs=[(0, 3), (1, 2)])
    batch = make_batch([h2_geometry, h4_geometry], [best_matching(h2_geometry), matching], reorder=True)
    assert len(batch.packs) == 2
    pack = batch.packs[1]
    assert pack.matched_edges.tolist() == [[0, 1], [2, 3]]
    np.testing.assert_array_equal(pack.positions[1], h4_geometry.coords[3])
    np.testing.assert_allclose(batch.pair_distances()[1], pack.matched_distances)
    first = np.linalg.norm(h4_geometry.coords[3] - h4_geometry.coords[0])
    assert batch.pair_distances()[1, 0] == pytest.approx(first)
    assert batch.pair_distances()[0, 1] == 0.0
