"""
Input preprocessing for the angle predictors.

FeaturePack keeps the per-instance edge features (distance and edge angle, min/max
normalized); GraphBatch pads the packs of several instances to a common atom
count so the network can run on (B, N, ...) arrays with masks.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from core.geometry import Geometry
from core.matching import PairMatching, global_edges

RBF_COUNT = 50
RBF_CUTOFF = 5.0


def rbf_centers(count: int = RBF_COUNT, cutoff: float = RBF_CUTOFF) -> np.ndarray:
    return np.linspace(0.0, cutoff, count)


def rbf_expand(d, count: int = RBF_COUNT, cutoff: float = RBF_CUTOFF) -> np.ndarray:
    """exp(-gamma (d - mu_k)^2) on equally spaced centers, gamma = 1 / (2 spacing^2)"""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    centers = rbf_centers(count, cutoff)
    spacing = centers[1] - centers[0]
    gamma = 1.0 / (2.0 * spacing ** 2)
    return np.exp(-gamma * (d[..., None] - centers) ** 2)


def normalize_columns(values: np.ndarray) -> np.ndarray:
    """(v - min v) / max v per column; a zero max is treated as 1"""
    values = np.asarray(values, dtype=np.float64)
    vmin = values.min(axis=0)
    vmax = values.max(axis=0)
    vmax = np.where(vmax == 0.0, 1.0, vmax)
    return (values - vmin) / vmax


def edge_angle(vector: np.ndarray) -> float:
    """Angle between an edge vector and the z axis, in radians"""
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        return 0.0
    return math.acos(max(-1.0, min(1.0, vector[2] / norm)))


@dataclass
class FeaturePack:
    """Edge-level description of one instance"""
    positions: np.ndarray          # (n, 3) Angstrom
    edges: np.ndarray              # (m, 2) global edges u < v
    edge_distances: np.ndarray     # (m,)
    matched_edges: np.ndarray      # (n/2, 2) in pair-list order
    edge_features: np.ndarray      # (n/2, 2): distance, angle with z
    normalized_features: np.ndarray  # (n/2, 8): x_u, x_v, e_uv after (v - min)/max

    @property
    def matched_distances(self) -> np.ndarray:
        return self.edge_features[:, 0]


def build_feature_pack(geom: Geometry, matching: PairMatching) -> FeaturePack:
    edges = global_edges(geom)
    coords = geom.coords
    matched = np.array(matching.pairs, dtype=np.int64).reshape(-1, 2)
    e_uv = np.array([[np.linalg.norm(coords[v] - coords[u]), edge_angle(coords[v] - coords[u])]
                     for u, v in matched])
    raw = np.hstack([coords[matched[:, 0]], coords[matched[:, 1]], e_uv])
    return FeaturePack(
        positions=coords.copy(),
        edges=np.array([(u, v) for u, v, _ in edges], dtype=np.int64),
        edge_distances=np.array([d for _, _, d in edges]),
        matched_edges=matched,
        edge_features=e_uv,
        normalized_features=normalize_columns(raw),
    )


@dataclass
class GraphBatch:
    """Zero-padded batch of instances"""
    positions: np.ndarray       # (B, N, 3)
    atom_mask: np.ndarray       # (B, N)
    pair_u: np.ndarray          # (B, P) first atom of each matched pair
    pair_v: np.ndarray          # (B, P)
    pair_mask: np.ndarray       # (B, P)
    targets: Optional[np.ndarray] = None  # (B, P)
    packs: List[FeaturePack] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.positions)

    def distances(self) -> np.ndarray:
        diff = self.positions[:, :, None, :] - self.positions[:, None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1))

    def neighbour_mask(self) -> np.ndarray:
        """(B, N, N) mask of real atom pairs i != j"""
        n = self.positions.shape[1]
        both = self.atom_mask[:, :, None] * self.atom_mask[:, None, :]
        return both * (1.0 - np.eye(n))

    def pair_distances(self) -> np.ndarray:
        """(B, P) matched-edge distances taken from each instance's feature pack"""
        out = np.zeros(self.pair_u.shape)
        for i, pack in enumerate(self.packs):
            out[i, :len(pack.matched_edges)] = pack.matched_distances
        return out

    def batch_index(self) -> np.ndarray:
        return np.broadcast_to(np.arange(self.size)[:, None], self.pair_u.shape)


def pair_blocked(geom: Geometry, matching: PairMatching):
    """Reorder atoms to a0, b0, a1, b1, ...; pair p becomes atoms (2p, 2p+1)"""
    order = matching.orbital_order()
    coords = geom.coords[order]
    n_pairs = matching.n_pairs
    pairs = [(2 * p, 2 * p + 1) for p in range(n_pairs)]
    return coords, pairs


def make_batch(geometries: Sequence[Geometry], matchings: Sequence[PairMatching],
               targets: Optional[Sequence[np.ndarray]] = None, reorder: bool = False) -> GraphBatch:
    """Pad the feature packs of several instances to the largest atom and pair count"""
    if len(geometries) != len(matchings):
        raise ValueError("need one matching per geometry")
    if not geometries:
        raise ValueError("cannot build an empty batch")
    packs = []
    for geom, matching in zip(geometries, matchings):
        if reorder:
            coords, pairs = pair_blocked(geom, matching)
            geom, matching = replace(geom, coords=coords), PairMatching(pairs=pairs)
        packs.append(build_feature_pack(geom, matching))

    n_max = max(len(pack.positions) for pack in packs)
    p_max = max(len(pack.matched_edges) for pack in packs)
    B = len(packs)

    positions = np.zeros((B, n_max, 3))
    atom_mask = np.zeros((B, n_max))
    pair_u = np.zeros((B, p_max), dtype=np.int64)
    pair_v = np.zeros((B, p_max), dtype=np.int64)
    pair_mask = np.zeros((B, p_max))
    target_arr = np.zeros((B, p_max)) if targets is not None else None

    for i, pack in enumerate(packs):
        n, p = len(pack.positions), len(pack.matched_edges)
        positions[i, :n] = pack.positions
        atom_mask[i, :n] = 1.0
        pair_u[i, :p] = pack.matched_edges[:, 0]
        pair_v[i, :p] = pack.matched_edges[:, 1]
        pair_mask[i, :p] = 1.0
        if targets is not None:
            target_arr[i, :p] = targets[i]

    return GraphBatch(positions=positions, atom_mask=atom_mask, pair_u=pair_u, pair_v=pair_v,
                      pair_mask=pair_mask, targets=target_arr, packs=packs)


def batches(indices: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [indices[i:i + batch_size] for i in range(0, len(indices), batch_size)]
