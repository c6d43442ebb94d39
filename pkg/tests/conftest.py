"""
Shared fixtures for the PRISM test suite
"""

import os
import tempfile

# every artifact written by the suite goes to a throwaway root
os.environ.setdefault("PRISM_OUTPUT_ROOT", tempfile.mkdtemp(prefix="prism_tests_"))

import numpy as np
import pytest

from core.geometry import Geometry, GeometryKind, SweepSchedule, generate_structured
from core.hamiltonian import lowdin_orbitals
from core.integrals import build_basis, compute_integrals
from core.matching import best_matching
from core.vqe_pipeline import PipelineConfig, label_instance

H2_BOND_ANGSTROM = 0.7414


def chain(n_atoms: int, step: float) -> Geometry:
    return generate_structured(GeometryKind.LINEAR, SweepSchedule(n_atoms, 2, step, step + 1.0), 0)


@pytest.fixture
def h2_geometry() -> Geometry:
    return Geometry(coords=[[0.0, 0.0, 0.0], [0.0, 0.0, H2_BOND_ANGSTROM]], kind=GeometryKind.LINEAR, seed=0)


@pytest.fixture
def h4_geometry() -> Geometry:
    """Slightly distorted rectangle, so the minimum matching is unique"""
    coords = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.9], [1.3, 0.1, 0.0], [1.4, 0.0, 0.95]]
    return Geometry(coords=coords, kind=GeometryKind.RANDOM, seed=7)


@pytest.fixture
def h4_system(h4_geometry):
    """(geometry, matching, Lowdin tensors) for the H4 fixture"""
    matching = best_matching(h4_geometry)
    _, tensors = lowdin_orbitals(compute_integrals(build_basis(h4_geometry)))
    return h4_geometry, matching, tensors


@pytest.fixture
def fast_config() -> PipelineConfig:
    config = PipelineConfig()
    config.orbital_optimization.enabled = False
    config.vqe.restarts = 2
    return config


@pytest.fixture(scope="session")
def h2_records():
    """Labelled H2 chain at three bond lengths"""
    sched = SweepSchedule(n_atoms=2, T=3, d_min=0.6, d_max=1.0)
    return [label_instance(generate_structured(GeometryKind.LINEAR, sched, k)) for k in range(sched.T)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
