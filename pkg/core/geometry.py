"""
Hydrogen geometry generation: random clusters, linear chains and rings.

Random geometries grow atom by atom from the origin. Every atom draws from its own
child stream of a numpy SeedSequence (PCG64), so geometry i of a dataset does not
depend on how many samples earlier atoms needed.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from scipy.spatial.distance import pdist

from utils.constants import MAX_REJECTIONS, MIN_SEPARATION_ANGSTROM
from utils.errors import GenerationError

logger = logging.getLogger("PRISM.Geometry")


class GeometryKind(Enum):
    """Provenance of a geometry"""
    RANDOM = "random"
    LINEAR = "linear"
    RING = "ring"


@dataclass
class Geometry:
    """Ordered hydrogen coordinates in Angstrom"""
    coords: np.ndarray
    kind: GeometryKind
    seed: Optional[int] = None
    step: Optional[float] = None
    index: Optional[int] = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        if len(self.coords) < 1:
            raise ValueError("a geometry needs at least one atom")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("geometry coordinates must be finite")

    @property
    def n_atoms(self) -> int:
        return len(self.coords)

    @property
    def instance_id(self) -> Optional[int]:
        """Seed of a random cluster, sweep index of a linear or ring one"""
        return self.seed if self.seed is not None else self.index

    def min_distance(self) -> float:
        """Smallest pairwise distance (inf for a single atom)"""
        if self.n_atoms < 2:
            return math.inf
        return float(pdist(self.coords).min())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "seed": self.seed,
            "step": self.step,
            "index": self.index,
            "coords_angstrom": self.coords.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Geometry":
        return cls(
            coords=np.array(data["coords_angstrom"], dtype=np.float64),
            kind=GeometryKind(data["kind"]),
            seed=data.get("seed"),
            step=data.get("step"),
            index=data.get("index"),
        )


@dataclass(frozen=True)
class SweepSchedule:
    """Distance sweep d_min..d_max in T equal steps"""
    n_atoms: int
    T: int
    d_min: float
    d_max: float

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if self.T < 2:
            raise ValueError(f"T must be >= 2, got {self.T}")
        if not self.d_min < self.d_max:
            raise ValueError(f"need d_min < d_max, got {self.d_min} >= {self.d_max}")

    def step(self, k: int) -> float:
        """Nearest-neighbour distance of sweep point k"""
        if not 0 <= k <= self.T - 1:
            raise ValueError(f"k must lie in [0, {self.T - 1}], got {k}")
        if k == self.T - 1:
            return float(self.d_max)
        return self.d_min + (self.d_max - self.d_min) * k / (self.T - 1)


def generate_random(n: int, d_max: float, seed: int,
                    max_rejections: int = MAX_REJECTIONS) -> Geometry:
    """
    Grow a random cluster with every pairwise distance above 0.5 Angstrom.

    Each new atom is placed at r_prev + d_max * u with r_prev an existing atom chosen
    uniformly and u ~ U([0, 1]^3); candidates are redrawn while the closest existing atom
    is within 0.5 Angstrom.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if d_max <= 0:
        raise ValueError(f"d_max must be positive, got {d_max}")
    if seed < 0:
        raise ValueError(f"seed must be unsigned, got {seed}")

    coords = np.zeros((n, 3))
    streams = np.random.SeedSequence(seed).spawn(max(n - 1, 0))

    for i in range(1, n):
        rng = np.random.Generator(np.random.PCG64(streams[i - 1]))
        ref = coords[rng.integers(0, i)]
        existing = coords[:i]

        for _ in range(max_rejections):
            candidate = ref + d_max * rng.random(3)
            delta_min = np.sqrt(((existing - candidate) ** 2).sum(axis=1)).min()
            if delta_min > MIN_SEPARATION_ANGSTROM:
                coords[i] = candidate
                break
        else:
            logger.error(f"Atom {i} rejected {max_rejections} times (n={n}, d_max={d_max}, seed={seed})")
            raise GenerationError(
                f"could not place atom {i} after {max_rejections} draws; d_max={d_max} is too small"
            )

    return Geometry(coords=coords, kind=GeometryKind.RANDOM, seed=seed)


def generate_linear(sched: SweepSchedule, k: int) -> Geometry:
    """Chain along z with atom i at (0, 0, i * step)"""
    step = sched.step(k)
    coords = np.zeros((sched.n_atoms, 3))
    coords[:, 2] = np.arange(sched.n_atoms) * step
    return Geometry(coords=coords, kind=GeometryKind.LINEAR, step=step, index=k)


def generate_ring(sched: SweepSchedule, k: int) -> Geometry:
    """Regular n-gon in the xy plane whose side length equals the sweep step"""
    n = sched.n_atoms
    if n < 3:
        raise ValueError(f"a ring needs at least 3 atoms, got {n}")
    step = sched.step(k)
    radius = step / (2.0 * math.sin(math.pi / n))
    angles = 2.0 * math.pi * np.arange(n) / n

    coords = np.zeros((n, 3))
    coords[:, 0] = radius * np.cos(angles)
    coords[:, 1] = radius * np.sin(angles)
    return Geometry(coords=coords, kind=GeometryKind.RING, step=step, index=k)


def generate_structured(kind: GeometryKind, sched: SweepSchedule, k: int) -> Geometry:
    """Dispatch to the linear or ring generator"""
    if kind is GeometryKind.LINEAR:
        return generate_linear(sched, k)
    if kind is GeometryKind.RING:
        return generate_ring(sched, k)
    raise ValueError(f"{kind.value} is not a structured geometry kind")
