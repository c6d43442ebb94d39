"""
Tests for the STO-3G hydrogen integrals (reference values for H2 at 1.4 bohr)
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.spatial.transform import Rotation

from core.geometry import Geometry, GeometryKind, generate_random
from core.integrals import boys_f0, build_basis, compute_integrals
from utils.constants import ANGSTROM_TO_BOHR


@pytest.fixture
def h2_tables():
    bond = 1.4 / ANGSTROM_TO_BOHR
    geom = Geometry(coords=[[0.0, 0.0, 0.0], [0.0, 0.0, bond]], kind=GeometryKind.LINEAR)
    return compute_integrals(build_basis(geom))


def test_single_atom_energy():
    tables = compute_integrals(build_basis(Geometry(coords=[[0.0, 0.0, 0.0]], kind=GeometryKind.RANDOM)))
    assert tables.S[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert tables.core_hamiltonian[0, 0] == pytest.approx(-0.46658, abs=1e-4)
    assert tables.E_nn == 0.0


def test_h2_one_electron(h2_tables):
    np.testing.assert_allclose(np.diag(h2_tables.S), 1.0, atol=1e-12)
    assert h2_tables.S[0, 1] == pytest.approx(0.6593, abs=1e-4)
    assert h2_tables.T_kin[0, 0] == pytest.approx(0.7600, abs=1e-4)
    assert h2_tables.T_kin[0, 1] == pytest.approx(0.2365, abs=1e-4)
    assert h2_tables.core_hamiltonian[0, 0] == pytest.approx(-1.1204, abs=1e-4)
    assert h2_tables.core_hamiltonian[0, 1] == pytest.approx(-0.9584, abs=1e-4)
    assert h2_tables.E_nn == pytest.approx(1.0 / 1.4)


def test_h2_two_electron(h2_tables):
    eri = h2_tables.ERI
    assert eri[0, 0, 0, 0] == pytest.approx(0.7746, abs=1e-4)
    assert eri[0, 0, 1, 1] == pytest.approx(0.5697, abs=1e-4)
    assert eri[1, 0, 0, 0] == pytest.approx(0.4441, abs=1e-4)
    assert eri[1, 0, 1, 0] == pytest.approx(0.2970, abs=1e-4)


def test_eri_symmetry(h4_geometry):
    eri = compute_integrals(build_basis(h4_geometry)).ERI
    np.testing.assert_allclose(eri, eri.transpose(1, 0, 2, 3), atol=1e-14)
    np.testing.assert_allclose(eri, eri.transpose(0, 1, 3, 2), atol=1e-14)
    np.testing.assert_allclose(eri, eri.transpose(2, 3, 0, 1), atol=1e-14)


def test_one_electron_symmetry(h4_geometry):
    tables = compute_integrals(build_basis(h4_geometry))
    for matrix in (tables.S, tables.T_kin, tables.V_nuc):
        np.testing.assert_allclose(matrix, matrix.T, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(tables.S) > 0)


def test_boys_function_limits():
    assert boys_f0(0.0) == pytest.approx(1.0)
    assert boys_f0(1e-12) == pytest.approx(1.0)
    assert boys_f0(50.0) == pytest.approx(0.5 * np.sqrt(np.pi / 50.0), rel=1e-12)
    values = boys_f0(np.linspace(0.0, 10.0, 50))
    assert np.all(np.diff(values) < 0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10**6),
       shift=st.tuples(*[st.floats(min_value=-5.0, max_value=5.0)] * 3))
def test_rigid_motion_invariance(seed, shift):
    geom = generate_random(4, 2.5, seed)
    rotation = Rotation.random(random_state=seed).as_matrix()
    moved = Geometry(coords=geom.coords @ rotation.T + np.array(shift), kind=geom.kind)
    before = compute_integrals(build_basis(geom))
    after = compute_integrals(build_basis(moved))
    for name in ("S", "T_kin", "V_nuc", "ERI"):
        np.testing.assert_allclose(getattr(after, name), getattr(before, name), atol=1e-10)
    assert after.E_nn == pytest.approx(before.E_nn, rel=1e-12)


def radial_quadrature(basis, fn) -> float:
    """Integral of fn(phi, dphi/dr, r) * 4 pi r^2 dr for the single-atom contracted function"""
    alpha, coeff = basis.exponents[0], basis.coefficients[0]

    def integrand(r):
        prim = coeff * np.exp(-alpha * r * r)
        return 4.0 * np.pi * r * r * fn(prim.sum(), (-2.0 * alpha * r * prim).sum(), r)

    return quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def test_single_atom_against_quadrature():
    basis = build_basis(Geometry(coords=[[0.3, -0.2, 1.0]], kind=GeometryKind.RANDOM))
    tables = compute_integrals(basis)
    norm = radial_quadrature(basis, lambda phi, dphi, r: phi * phi)
    kinetic = radial_quadrature(basis, lambda phi, dphi, r: 0.5 * dphi * dphi)
    attraction = radial_quadrature(basis, lambda phi, dphi, r: -phi * phi / r)
    assert norm == pytest.approx(1.0, abs=1e-10)
    assert tables.T_kin[0, 0] == pytest.approx(kinetic, abs=1e-9)
    assert tables.V_nuc[0, 0] == pytest.approx(attraction, abs=1e-9)


def test_h2_overlap_against_quadrature(h2_tables):
    bond = 1.4 / ANGSTROM_TO_BOHR
    basis = build_basis(Geometry(coords=[[0.0, 0.0, 0.0], [0.0, 0.0, bond]], kind=GeometryKind.LINEAR))
    R = basis.centers[1, 2] - basis.centers[0, 2]
    total = 0.0
    for a, ca in zip(basis.exponents[0], basis.coefficients[0]):
        for b, cb in zip(basis.exponents[1], basis.coefficients[1]):
            transverse = quad(lambda x: np.exp(-(a + b) * x * x), -np.inf, np.inf)[0]
            axial = quad(lambda z: np.exp(-a * z * z - b * (z - R) ** 2), -np.inf, np.inf)[0]
            total += ca * cb * transverse * transverse * axial
    assert h2_tables.S[0, 1] == pytest.approx(total, abs=1e-9)
