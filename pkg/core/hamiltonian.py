"""
Qubit Hamiltonian construction for hydrogenic systems.

Pipeline: AO integrals -> Loewdin orthonormal orbitals -> optional orbital rotation
-> second-quantized Hamiltonian -> Jordan-Wigner Pauli polynomial.

Qubit conventions (used everywhere in PRISM):
- spatial orbital o (after pair-blocked re-indexing) owns qubits 2o (spin up) and 2o+1
  (spin down), so pair p owns qubits 4p..4p+3 in the order a-up, a-down, b-up, b-down;
- qubit value 1 means occupied; number operator n_k = (I - Z_k) / 2;
- character k of a Pauli word acts on qubit k, and qubit k is bit (N-1-k) of a basis
  index, so basis index order matches numpy.kron order.

Internally Pauli terms are handled in "XZ form": coefficient * prod_k X_k^x_k Z_k^z_k,
with x and z stored as integer bit masks. Products then reduce to XOR plus a sign.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from core.integrals import IntegralTables
from core.matching import PairMatching
from utils.constants import DENSE_ORACLE_MAX_QUBITS, PAULI_PRUNE_THRESHOLD
from utils.errors import NearLinearDependenceError, NumericalError, UnsupportedSizeError

logger = logging.getLogger("PRISM.Hamiltonian")

MAX_OVERLAP_CONDITION = 1e10
DENSE_EIGH_MAX_DIM = 2000
PAULI_LETTERS = "IXYZ"


# ---------------------------------------------------------
# Orbital space
# ---------------------------------------------------------
@dataclass
class OrbitalRotation:
    """Orthogonal orbital rotation R = exp(kappa) with antisymmetric generator"""
    kappa: np.ndarray

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=np.float64)
        if self.kappa.ndim != 2 or self.kappa.shape[0] != self.kappa.shape[1]:
            raise ValueError(f"kappa must be square, got shape {self.kappa.shape}")
        if not np.allclose(self.kappa, -self.kappa.T, atol=1e-12):
            raise ValueError("kappa must be antisymmetric")

    @property
    def n(self) -> int:
        return self.kappa.shape[0]

    @cached_property
    def R(self) -> np.ndarray:
        return scipy.linalg.expm(self.kappa)

    @classmethod
    def identity(cls, n: int) -> "OrbitalRotation":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_vector(cls, vector: Sequence[float], n: int) -> "OrbitalRotation":
        """Generator from its strict upper triangle (row-major)"""
        kappa = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        kappa[iu] = vector
        return cls(kappa - kappa.T)

    def to_vector(self) -> np.ndarray:
        return self.kappa[np.triu_indices(self.n, k=1)].copy()


def pair_adapted_rotation(matching: PairMatching, n: int) -> OrbitalRotation:
    """
    Rotate each matched pair (a, b) by pi/4 so that orbital a becomes the bonding
    combination (chi_a + chi_b)/sqrt(2) and orbital b the antibonding (chi_b - chi_a)/sqrt(2).
    """
    kappa = np.zeros((n, n))
    for a, b in matching.pairs:
        kappa[a, b] = -np.pi / 4
        kappa[b, a] = np.pi / 4
    return OrbitalRotation(kappa)


@dataclass
class OrbitalTensors:
    """One- and two-electron integrals in an orthonormal orbital basis"""
    h: np.ndarray            # (n, n)
    eri: np.ndarray          # (n, n, n, n) chemists' notation
    constant: float          # nuclear repulsion
    coefficients: np.ndarray  # AO -> orbital coefficients

    @property
    def n_orbitals(self) -> int:
        return self.h.shape[0]

    def transformed(self, U: np.ndarray) -> "OrbitalTensors":
        """Express the tensors in the orbitals phi'_j = sum_i phi_i U_ij"""
        h = U.T @ self.h @ U
        eri = np.einsum("pqrs,pi,qj,rk,sl->ijkl", self.eri, U, U, U, U, optimize=True)
        return OrbitalTensors(h=h, eri=eri, constant=self.constant, coefficients=self.coefficients @ U)

    def reordered(self, order: Sequence[int]) -> "OrbitalTensors":
        """Permute orbital indices"""
        order = np.asarray(order)
        return OrbitalTensors(
            h=self.h[np.ix_(order, order)],
            eri=self.eri[np.ix_(order, order, order, order)],
            constant=self.constant,
            coefficients=self.coefficients[:, order],
        )


def lowdin_orbitals(tables: IntegralTables) -> Tuple[np.ndarray, OrbitalTensors]:
    """Symmetric orthogonalization C = S^(-1/2) and the integrals in that basis"""
    s, U = np.linalg.eigh(tables.S)
    if s.min() <= 0 or s.max() / s.min() > MAX_OVERLAP_CONDITION:
        raise NearLinearDependenceError(
            f"overlap matrix is near singular (eigenvalues {s.min():.3e}..{s.max():.3e}); atoms nearly coincide"
        )
    C = (U * s ** -0.5) @ U.T
    ao = OrbitalTensors(
        h=tables.core_hamiltonian, eri=tables.ERI, constant=tables.E_nn, coefficients=np.eye(len(s))
    )
    return C, ao.transformed(C)


def rotate_orbitals(tensors: OrbitalTensors, rot: OrbitalRotation) -> OrbitalTensors:
    """Apply an orbital rotation; the many-body spectrum is unchanged"""
    if rot.n != tensors.n_orbitals:
        raise ValueError(f"rotation of size {rot.n} does not match {tensors.n_orbitals} orbitals")
    return tensors.transformed(rot.R)


# ---------------------------------------------------------
# Bit helpers
# ---------------------------------------------------------
def qubit_bit(k: int, n_qubits: int) -> int:
    return 1 << (n_qubits - 1 - k)


def parity(values: np.ndarray) -> np.ndarray:
    """Parity of the set bits of non-negative integers below 2**32"""
    v = np.array(values, dtype=np.int64, copy=True)
    for shift in (16, 8, 4, 2, 1):
        v ^= v >> shift
    return v & 1


def bit_count(values: np.ndarray, n_bits: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.int64)
    return sum((v >> k) & 1 for k in range(n_bits))


_MASK_LETTERS = {(False, False): "I", (True, False): "X", (True, True): "Y", (False, True): "Z"}


def _word_from_masks(x: int, z: int, n_qubits: int) -> str:
    return "".join(
        _MASK_LETTERS[(bool(x & qubit_bit(k, n_qubits)), bool(z & qubit_bit(k, n_qubits)))]
        for k in range(n_qubits)
    )


# ---------------------------------------------------------
# Pauli polynomials
# ---------------------------------------------------------
class PauliPolynomial:
    """Real linear combination of Pauli words on n_qubits qubits"""

    def __init__(self, n_qubits: int, terms: Optional[Dict[str, float]] = None,
                 prune: float = PAULI_PRUNE_THRESHOLD):
        self.n_qubits = int(n_qubits)
        self.terms: Dict[str, float] = {}
        for word, coeff in (terms or {}).items():
            if len(word) != self.n_qubits or set(word) - set(PAULI_LETTERS):
                raise ValueError(f"invalid Pauli word {word!r} for {self.n_qubits} qubits")
            coeff = float(coeff)
            if abs(coeff) > prune:
                self.terms[word] = self.terms.get(word, 0.0) + coeff

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        return f"PauliPolynomial(n_qubits={self.n_qubits}, terms={len(self.terms)})"

    @classmethod
    def identity(cls, n_qubits: int, coeff: float = 1.0) -> "PauliPolynomial":
        return cls(n_qubits, {"I" * n_qubits: coeff})

    @property
    def identity_coefficient(self) -> float:
        return self.terms.get("I" * self.n_qubits, 0.0)

    def __add__(self, other: "PauliPolynomial") -> "PauliPolynomial":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit counts differ")
        merged = dict(self.terms)
        for word, coeff in other.terms.items():
            merged[word] = merged.get(word, 0.0) + coeff
        return PauliPolynomial(self.n_qubits, merged)

    def scaled(self, factor: float) -> "PauliPolynomial":
        return PauliPolynomial(self.n_qubits, {w: c * factor for w, c in self.terms.items()})

    # ---- serialization ----
    def to_list(self) -> List[List]:
        return [[word, coeff] for word, coeff in sorted(self.terms.items())]

    @classmethod
    def from_list(cls, items: List[List], n_qubits: Optional[int] = None) -> "PauliPolynomial":
        if n_qubits is None:
            if not items:
                raise ValueError("cannot infer the qubit count of an empty term list")
            n_qubits = len(items[0][0])
        return cls(n_qubits, {str(word): float(coeff) for word, coeff in items})

    # ---- XZ form ----
    @cached_property
    def _xz(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n_qubits
        xs, zs, cs = [], [], []
        for word, coeff in self.terms.items():
            x = z = 0
            n_y = 0
            for k, letter in enumerate(word):
                bit = qubit_bit(k, n)
                if letter in "XY":
                    x |= bit
                if letter in "ZY":
                    z |= bit
                n_y += letter == "Y"
            xs.append(x)
            zs.append(z)
            cs.append(coeff * 1j ** n_y)   # Y = i X Z
        return (np.array(xs, dtype=np.int64), np.array(zs, dtype=np.int64),
                np.array(cs, dtype=np.complex128))

    def xz_form(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._xz

    @classmethod
    def from_xz(cls, n_qubits: int, x: np.ndarray, z: np.ndarray, coeffs: np.ndarray,
                prune: float = PAULI_PRUNE_THRESHOLD) -> "PauliPolynomial":
        """Merge XZ-form terms into a real Pauli polynomial"""
        keys = (x.astype(np.int64) << n_qubits) | z.astype(np.int64)
        unique, inverse = np.unique(keys, return_inverse=True)
        re = np.bincount(inverse, weights=coeffs.real, minlength=len(unique))
        im = np.bincount(inverse, weights=coeffs.imag, minlength=len(unique))
        ux = unique >> n_qubits
        uz = unique & ((1 << n_qubits) - 1)

        # X^x Z^z on a qubit with both bits set is XZ = -iY
        phase = (-1j) ** (bit_count(ux & uz, n_qubits) % 4)
        values = (re + 1j * im) * phase
        scale = max(1.0, float(np.abs(values).max(initial=0.0)))
        if np.abs(values.imag).max(initial=0.0) > 1e-10 * scale:
            raise NumericalError("Pauli expansion produced non-real coefficients")

        terms = {}
        for xi, zi, value in zip(ux.tolist(), uz.tolist(), values.real.tolist()):
            if abs(value) <= prune:
                continue
            terms[_word_from_masks(xi, zi, n_qubits)] = value
        return cls(n_qubits, terms, prune=prune)

    # ---- linear algebra ----
    def to_sparse(self, basis: Optional[np.ndarray] = None) -> scipy.sparse.csr_matrix:
        """Matrix in the given (sorted) computational basis states; default the full space"""
        dim_full = 1 << self.n_qubits
        idx = np.arange(dim_full, dtype=np.int64) if basis is None else np.asarray(basis, dtype=np.int64)
        dim = len(idx)
        x, z, c = self.xz_form()
        rows, cols, data = [], [], []
        for ux in np.unique(x):
            sel = x == ux
            signs = 1 - 2 * parity(idx[None, :] & z[sel][:, None])
            values = c[sel] @ signs
            targets = idx ^ ux
            pos = np.searchsorted(idx, targets)
            pos_clipped = np.minimum(pos, dim - 1)
            valid = (pos < dim) & (idx[pos_clipped] == targets)
            rows.append(pos[valid])
            cols.append(np.nonzero(valid)[0])
            data.append(values[valid])
        if not rows:
            return scipy.sparse.csr_matrix((dim, dim))
        matrix = scipy.sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        )
        return matrix

    def to_sparse_sector(self, n_electrons: int, spin_free: bool = False) -> scipy.sparse.csr_matrix:
        """Matrix restricted to the sector_basis states of n_electrons"""
        return self.to_sparse(sector_basis(self.n_qubits, n_electrons, spin_free=spin_free))

    def to_dense(self) -> np.ndarray:
        if self.n_qubits > 12:
            raise UnsupportedSizeError(f"dense matrix of {self.n_qubits} qubits is too large")
        return self.to_sparse().toarray()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """H |psi> on the full 2^N statevector"""
        psi = np.asarray(psi, dtype=np.complex128)
        if len(psi) != 1 << self.n_qubits:
            raise ValueError(f"statevector of length {len(psi)} does not match {self.n_qubits} qubits")
        idx = np.arange(len(psi), dtype=np.int64)
        out = np.zeros_like(psi)
        x, z, c = self.xz_form()
        for ux in np.unique(x):
            values = np.zeros(len(psi), dtype=np.complex128)
            for zi, ci in zip(z[x == ux], c[x == ux]):
                values += ci * (1 - 2 * parity(idx & zi))
            out[idx ^ ux] += values * psi
        return out

    def expectation_dense(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.apply(psi)).real)


def number_operator(n_qubits: int) -> PauliPolynomial:
    """Total particle number sum_k (I - Z_k)/2"""
    terms = {"I" * n_qubits: n_qubits / 2}
    for k in range(n_qubits):
        terms["I" * k + "Z" + "I" * (n_qubits - k - 1)] = -0.5
    return PauliPolynomial(n_qubits, terms)


# ---------------------------------------------------------
# Jordan-Wigner mapping
# ---------------------------------------------------------
def _ladder_terms(n_qubits: int, creation: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    XZ form of a^dagger_j (creation) or a_j for every spin orbital j:
    a^dagger_j = Z_<j (X_j + X_j Z_j)/2 and a_j = Z_<j (X_j - X_j Z_j)/2.
    """
    x = np.array([qubit_bit(j, n_qubits) for j in range(n_qubits)], dtype=np.int64)
    before = np.array([sum(qubit_bit(k, n_qubits) for k in range(j)) for j in range(n_qubits)],
                      dtype=np.int64)
    z = np.stack([before, before | x], axis=1)
    sign = 1.0 if creation else -1.0
    c = np.tile(np.array([0.5, 0.5 * sign]), (n_qubits, 1)).astype(np.complex128)
    return x, z, c


def _excitation_operators(n_orbitals: int):
    """Spin-summed E_pq = sum_sigma a^dagger_{p sigma} a_{q sigma} as (n, n, 8) XZ arrays"""
    n_qubits = 2 * n_orbitals
    cx, cz, cc = _ladder_terms(n_qubits, creation=True)
    ax, az, ac = _ladder_terms(n_qubits, creation=False)

    # hop[P, Q, i, j] = (a^dagger_P term i)(a_Q term j)
    hop_x = cx[:, None] ^ ax[None, :]
    hop_z = cz[:, None, :, None] ^ az[None, :, None, :]
    hop_sign = 1 - 2 * parity(cz[:, None, :, None] & ax[None, :, None, None])
    hop_c = cc[:, None, :, None] * ac[None, :, None, :] * hop_sign

    n = n_orbitals
    E_x = np.zeros((n, n, 8), dtype=np.int64)
    E_z = np.zeros((n, n, 8), dtype=np.int64)
    E_c = np.zeros((n, n, 8), dtype=np.complex128)
    for sigma in (0, 1):
        P = 2 * np.arange(n) + sigma
        block = slice(4 * sigma, 4 * sigma + 4)
        E_x[:, :, block] = hop_x[np.ix_(P, P)][:, :, None]
        E_z[:, :, block] = hop_z[np.ix_(P, P)].reshape(n, n, 4)
        E_c[:, :, block] = hop_c[np.ix_(P, P)].reshape(n, n, 4)
    return E_x, E_z, E_c


def to_qubit(tensors: OrbitalTensors, pair_order: PairMatching) -> PauliPolynomial:
    """
    Jordan-Wigner image of
    H = E_nn + sum_pq h_pq E_pq + 1/2 sum_pqrs (pq|rs) (E_pq E_rs - delta_qr E_ps)
    with orbitals re-indexed so that pair p owns orbitals 2p and 2p+1.
    """
    if 2 * pair_order.n_pairs != tensors.n_orbitals:
        raise ValueError(
            f"matching with {pair_order.n_pairs} pairs does not fit {tensors.n_orbitals} orbitals"
        )
    t = tensors.reordered(pair_order.orbital_order())
    n = t.n_orbitals
    n_qubits = 2 * n
    E_x, E_z, E_c = _excitation_operators(n)

    one_body = t.h - 0.5 * np.einsum("pqqs->ps", t.eri)
    xs = [E_x.ravel(), np.zeros(1, dtype=np.int64)]
    zs = [E_z.ravel(), np.zeros(1, dtype=np.int64)]
    cs = [(one_body[:, :, None] * E_c).ravel(), np.array([t.constant], dtype=np.complex128)]

    # two-body part: products E_pq E_rs over all index/term combinations
    Ax, Az, Ac = E_x.reshape(-1), E_z.reshape(-1), E_c.reshape(-1)
    weights = 0.5 * np.repeat(np.repeat(t.eri.reshape(n * n, n * n), 8, axis=0), 8, axis=1)
    sign = 1 - 2 * parity(Az[:, None] & Ax[None, :])
    xs.append((Ax[:, None] ^ Ax[None, :]).ravel())
    zs.append((Az[:, None] ^ Az[None, :]).ravel())
    cs.append((weights * Ac[:, None] * Ac[None, :] * sign).ravel())

    H = PauliPolynomial.from_xz(n_qubits, np.concatenate(xs), np.concatenate(zs), np.concatenate(cs))
    logger.debug(f"Jordan-Wigner Hamiltonian: {n_qubits} qubits, {len(H)} terms")
    return H


# ---------------------------------------------------------
# Exact diagonalization oracle
# ---------------------------------------------------------
def sector_basis(n_qubits: int, n_electrons: int, spin_free: bool = False) -> np.ndarray:
    """
    Basis states with the given electron count.

    With spin_free=True and an even count on an even register only the S_z = 0 states are
    kept: every spin multiplet of a spin-free Hamiltonian has an S_z = 0 member at the same
    energy. Any other Hamiltonian needs the full particle-number sector.
    """
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    keep = bit_count(idx, n_qubits) == n_electrons
    if spin_free and n_electrons % 2 == 0 and n_qubits % 2 == 0:
        up_mask = sum(qubit_bit(k, n_qubits) for k in range(0, n_qubits, 2))
        keep &= bit_count(idx & up_mask, n_qubits) == n_electrons // 2
    return idx[keep]


def exact_ground_energy(H: PauliPolynomial, n_electrons: int, spin_free: bool = False) -> float:
    """
    Lowest eigenvalue of H within the fixed particle-number sector.
    Pass spin_free=True for molecular Hamiltonians to diagonalize the smaller S_z = 0 block.
    """
    if H.n_qubits > DENSE_ORACLE_MAX_QUBITS:
        raise UnsupportedSizeError(
            f"exact diagonalization supports up to {DENSE_ORACLE_MAX_QUBITS} qubits, got {H.n_qubits}"
        )
    if not 0 <= n_electrons <= H.n_qubits:
        raise ValueError(f"{n_electrons} electrons do not fit {H.n_qubits} spin orbitals")
    if len(H) == 0:
        return 0.0

    matrix = H.to_sparse_sector(n_electrons, spin_free=spin_free)
    if matrix.nnz and abs(matrix.imag).max() > 1e-10:
        raise NumericalError("Hamiltonian sector matrix is not real")
    matrix = matrix.real

    if matrix.shape[0] <= DENSE_EIGH_MAX_DIM:
        return float(np.linalg.eigvalsh(matrix.toarray())[0])
    value = scipy.sparse.linalg.eigsh(matrix, k=1, which="SA", return_eigenvectors=False)
    return float(value[0])
