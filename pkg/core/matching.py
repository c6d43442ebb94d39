"""
Perfect matching of hydrogen atoms into electron pairs.

Edge weights are plain Euclidean distances in Angstrom. Up to 12 atoms every perfect
matching is enumerated (10395 at n=12) and the lightest one wins; ties go to the
lexicographically smallest sorted pair list.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Tuple

import numpy as np
from scipy.spatial.distance import pdist, squareform

from core.geometry import Geometry
from utils.constants import EXACT_MATCHING_MAX_ATOMS

logger = logging.getLogger("PRISM.Matching")

Pair = Tuple[int, int]

# relative slack for calling two matching weights equal
TIE_RTOL = 1e-10


@dataclass
class PairMatching:
    """Perfect matching with per-pair weights"""
    pairs: List[Pair]
    weights: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.pairs = sorted((min(a, b), max(a, b)) for a, b in self.pairs)
        seen = [i for pair in self.pairs for i in pair]
        if sorted(seen) != list(range(len(seen))):
            raise ValueError(f"pairs {self.pairs} do not cover atoms 0..{len(seen) - 1} exactly once")

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights))

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def orbital_order(self) -> List[int]:
        """Atom indices in pair-blocked order a0, b0, a1, b1, ..."""
        return [i for pair in self.pairs for i in pair]

    def to_list(self) -> List[List[int]]:
        return [list(pair) for pair in self.pairs]

    @classmethod
    def from_list(cls, pairs: List[List[int]], geom: Geometry = None) -> "PairMatching":
        pairs = [(int(a), int(b)) for a, b in pairs]
        weights = []
        if geom is not None:
            weights = [float(np.linalg.norm(geom.coords[a] - geom.coords[b])) for a, b in pairs]
        return cls(pairs=pairs, weights=weights)


def distance_matrix(geom: Geometry) -> np.ndarray:
    return squareform(pdist(geom.coords))


def enumerate_matchings(n: int) -> Iterator[List[Pair]]:
    """All perfect matchings of range(n), in lexicographic order of the sorted pair list"""
    def _recurse(remaining: List[int]) -> Iterator[List[Pair]]:
        if not remaining:
            yield []
            return
        first = remaining[0]
        for idx in range(1, len(remaining)):
            partner = remaining[idx]
            rest = remaining[1:idx] + remaining[idx + 1:]
            for tail in _recurse(rest):
                yield [(first, partner)] + tail

    yield from _recurse(list(range(n)))


def _exact_matching(dist: np.ndarray) -> List[Pair]:
    best_pairs, best_weight = None, None
    for pairs in enumerate_matchings(len(dist)):
        weight = sum(dist[a, b] for a, b in pairs)
        # must be lighter beyond round-off, otherwise the earlier (lexicographic) one stays
        if best_weight is None or weight < best_weight * (1.0 - TIE_RTOL):
            best_pairs, best_weight = pairs, weight
    return best_pairs


def _greedy_matching(dist: np.ndarray) -> List[Pair]:
    """Repeatedly pair the globally closest unmatched atoms"""
    n = len(dist)
    iu, ju = np.triu_indices(n, k=1)
    order = np.lexsort((ju, iu, dist[iu, ju]))
    matched = np.zeros(n, dtype=bool)
    pairs = []
    for idx in order:
        a, b = int(iu[idx]), int(ju[idx])
        if not matched[a] and not matched[b]:
            matched[a] = matched[b] = True
            pairs.append((a, b))
    return pairs


def best_matching(geom: Geometry, greedy_fallback: bool = False) -> PairMatching:
    """Minimum-weight perfect matching under Euclidean edge weights"""
    n = geom.n_atoms
    if n < 2 or n % 2:
        raise ValueError(f"perfect matching needs an even atom count >= 2, got {n}")

    dist = distance_matrix(geom)
    if n <= EXACT_MATCHING_MAX_ATOMS:
        pairs = _exact_matching(dist)
    elif greedy_fallback:
        logger.info(f"Using greedy nearest-pair matching for {n} atoms")
        pairs = _greedy_matching(dist)
    else:
        raise ValueError(
            f"exact matching is limited to {EXACT_MATCHING_MAX_ATOMS} atoms; enable the greedy fallback for n={n}"
        )

    pairs = sorted(pairs)
    return PairMatching(pairs=pairs, weights=[float(dist[a, b]) for a, b in pairs])


def global_edges(geom: Geometry) -> List[Tuple[int, int, float]]:
    """All n(n-1)/2 undirected edges (u < v) with their lengths"""
    if geom.n_atoms < 2:
        raise ValueError("global edges need at least two atoms")
    dist = distance_matrix(geom)
    iu, ju = np.triu_indices(geom.n_atoms, k=1)
    return [(int(u), int(v), float(dist[u, v])) for u, v in zip(iu, ju)]
