"""
Tests for orbital rotations, the Jordan-Wigner Hamiltonian and the exact oracle
"""

import numpy as np
import pytest

from core.geometry import Geometry, GeometryKind
from core.hamiltonian import (OrbitalRotation, PauliPolynomial, bit_count, exact_ground_energy,
                              lowdin_orbitals, number_operator, pair_adapted_rotation,
                              rotate_orbitals, sector_basis, to_qubit)
from core.integrals import build_basis, compute_integrals
from core.matching import best_matching
from utils.errors import NearLinearDependenceError, NumericalError, UnsupportedSizeError


@pytest.fixture
def h2_hamiltonian(h2_geometry):
    _, tensors = lowdin_orbitals(compute_integrals(build_basis(h2_geometry)))
    return to_qubit(tensors, best_matching(h2_geometry))


def random_rotation(n: int, rng) -> OrbitalRotation:
    return OrbitalRotation.from_vector(rng.normal(scale=0.5, size=n * (n - 1) // 2), n)


def test_h2_ground_state_energy(h2_hamiltonian):
    assert h2_hamiltonian.n_qubits == 4
    assert exact_ground_energy(h2_hamiltonian, n_electrons=2) == pytest.approx(-1.1373, abs=5e-4)


def test_h2_hamiltonian_is_hermitian(h2_hamiltonian):
    matrix = h2_hamiltonian.to_dense()
    np.testing.assert_allclose(matrix, matrix.conj().T, atol=1e-12)


def test_hamiltonian_conserves_particle_number(h2_hamiltonian):
    H = h2_hamiltonian.to_dense()
    N = number_operator(4).to_dense()
    np.testing.assert_allclose(H @ N, N @ H, atol=1e-12)


def test_spin_sector_holds_ground_state(h2_hamiltonian):
    full = h2_hamiltonian.to_dense()
    idx = np.arange(16)
    two = idx[bit_count(idx, 4) == 2]
    reference = np.linalg.eigvalsh(full[np.ix_(two, two)])[0]
    assert exact_ground_energy(h2_hamiltonian, 2, spin_free=True) == pytest.approx(reference, abs=1e-10)
    assert exact_ground_energy(h2_hamiltonian, 2) == pytest.approx(reference, abs=1e-10)
    assert len(sector_basis(4, 2)) == 6
    assert len(sector_basis(4, 2, spin_free=True)) == 4


def test_spin_polarized_ground_state_found():
    # H = -n0 n2 binds both electrons in the spin-up orbitals
    H = PauliPolynomial(4, {"IIII": -0.25, "ZIII": 0.25, "IIZI": 0.25, "ZIZI": -0.25})
    assert exact_ground_energy(H, 2) == pytest.approx(-1.0, abs=1e-10)
    assert exact_ground_energy(H, 2, spin_free=True) == pytest.approx(0.0, abs=1e-10)


def test_spectrum_invariant_under_rotation(h4_system, rng):
    _, matching, tensors = h4_system
    base = exact_ground_energy(to_qubit(tensors, matching), 4)
    rotated = rotate_orbitals(tensors, random_rotation(4, rng))
    assert exact_ground_energy(to_qubit(rotated, matching), 4) == pytest.approx(base, abs=1e-8)


def test_rotation_keeps_tensor_symmetry(h4_system, rng):
    _, _, tensors = h4_system
    rotated = rotate_orbitals(tensors, random_rotation(4, rng))
    np.testing.assert_allclose(rotated.h, rotated.h.T, atol=1e-12)
    np.testing.assert_allclose(rotated.eri, rotated.eri.transpose(2, 3, 0, 1), atol=1e-12)
    R = random_rotation(4, rng).R
    np.testing.assert_allclose(R.T @ R, np.eye(4), atol=1e-12)


def test_rotation_vector_round_trip(rng):
    vector = rng.normal(size=6)
    rot = OrbitalRotation.from_vector(vector, 4)
    np.testing.assert_allclose(rot.to_vector(), vector)
    np.testing.assert_allclose(rot.kappa, -rot.kappa.T)
    with pytest.raises(ValueError):
        OrbitalRotation(np.ones((3, 3)))


def test_pair_adapted_rotation_builds_bonding_orbitals(h4_system):
    _, matching, _ = h4_system
    R = pair_adapted_rotation(matching, 4).R
    for a, b in matching.pairs:
        np.testing.assert_allclose(R[[a, b], a], [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-12)
        np.testing.assert_allclose(R[[a, b], b], [-np.sqrt(0.5), np.sqrt(0.5)], atol=1e-12)


def test_lowdin_orbitals_are_orthonormal(h4_geometry):
    tables = compute_integrals(build_basis(h4_geometry))
    C, _ = lowdin_orbitals(tables)
    np.testing.assert_allclose(C.T @ tables.S @ C, np.eye(4), atol=1e-10)


def test_coincident_atoms_rejected():
    geom = Geometry(coords=[[0.0, 0.0, 0.0], [0.0, 0.0, 1e-6]], kind=GeometryKind.RANDOM)
    with pytest.raises(NearLinearDependenceError):
        lowdin_orbitals(compute_integrals(build_basis(geom)))


def test_empty_polynomial_energy():
    assert exact_ground_energy(PauliPolynomial(4), 2) == 0.0


def test_identity_polynomial():
    H = PauliPolynomial.identity(4, -2.5)
    assert H.identity_coefficient == -2.5
    assert exact_ground_energy(H, 2) == pytest.approx(-2.5)


def test_oracle_size_limit():
    with pytest.raises(UnsupportedSizeError):
        exact_ground_energy(PauliPolynomial.identity(20), 10)


def test_invalid_words_rejected():
    with pytest.raises(ValueError):
        PauliPolynomial(2, {"XQ": 1.0})
    with pytest.raises(ValueError):
        PauliPolynomial(2, {"XYZ": 1.0})


def test_polynomial_arithmetic_prunes():
    a = PauliPolynomial(2, {"XX": 1.0, "ZI": 0.5})
    b = PauliPolynomial(2, {"XX": -1.0, "IZ": 0.25})
    total = a + b
    assert "XX" not in total.terms
    assert total.terms == {"ZI": 0.5, "IZ": 0.25}
    assert a.scaled(2.0).terms["ZI"] == 1.0


def test_xz_product_phase():
    # X Z on one qubit is -iY
    H = PauliPolynomial.from_xz(1, np.array([1]), np.array([1]), np.array([1j]))
    assert H.terms == {"Y": pytest.approx(1.0)}
    with pytest.raises(NumericalError):
        PauliPolynomial.from_xz(1, np.array([1]), np.array([1]), np.array([1.0 + 0j]))


def test_xz_form_matches_dense():
    H = PauliPolynomial(2, {"XY": 0.3, "ZI": -0.7, "YY": 0.2})
    X = np.array([[0, 1], [1, 0]])
    Y = np.array([[0, -1j], [1j, 0]])
    Z = np.diag([1, -1])
    expected = 0.3 * np.kron(X, Y) - 0.7 * np.kron(Z, np.eye(2)) + 0.2 * np.kron(Y, Y)
    np.testing.assert_allclose(H.to_dense(), expected, atol=1e-14)


def test_list_round_trip(h2_hamiltonian):
    restored = PauliPolynomial.from_list(h2_hamiltonian.to_list())
    assert restored.terms == h2_hamiltonian.terms
    assert restored.n_qubits == 4
