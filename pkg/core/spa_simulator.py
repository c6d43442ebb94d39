"""
Exact simulation of separable-pair (SPA) states.

An SPA state is a product of one 4-qubit state per electron pair,
cos(theta/2)|1100> - sin(theta/2)|0011>, so every Pauli-word expectation is the product
of per-pair 4-qubit expectations. Nothing here ever builds the 2^N statevector except
full_statevector, which exists as a test oracle.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import List, Sequence

import numpy as np

from core.hamiltonian import OrbitalTensors, PauliPolynomial
from core.matching import PairMatching
from utils.constants import QUBITS_PER_PAIR, STATEVECTOR_MAX_QUBITS
from utils.errors import UnsupportedSizeError

logger = logging.getLogger("PRISM.SpaSimulator")

OCCUPIED_A = 0b1100   # a-up, a-down occupied
OCCUPIED_B = 0b0011   # b-up, b-down occupied
BLOCK_DIM = 1 << QUBITS_PER_PAIR

_PAULI_MATRICES = (
    np.eye(2, dtype=np.complex128),
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)
_LETTER_CODES = np.zeros(128, dtype=np.int64)
for _code, _letter in enumerate("IXYZ"):
    _LETTER_CODES[ord(_letter)] = _code


def wrap_angles(theta) -> np.ndarray:
    """Map angles into (-pi, pi]"""
    theta = np.asarray(theta, dtype=np.float64)
    return theta - 2.0 * np.pi * np.ceil((theta - np.pi) / (2.0 * np.pi))


@dataclass
class SpaAnsatz:
    """One rotation angle per matched pair; pair p acts on qubits 4p..4p+3"""
    matching: PairMatching
    angles: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        if len(self.angles) != self.matching.n_pairs:
            raise ValueError(f"expected {self.matching.n_pairs} angles, got {len(self.angles)}")

    @property
    def n_pairs(self) -> int:
        return self.matching.n_pairs

    @property
    def n_qubits(self) -> int:
        return QUBITS_PER_PAIR * self.n_pairs

    def normalized(self) -> "SpaAnsatz":
        """Same state up to per-pair global sign, angles in (-pi, pi]"""
        return SpaAnsatz(self.matching, wrap_angles(self.angles))

    def with_angles(self, angles: Sequence[float]) -> "SpaAnsatz":
        return SpaAnsatz(self.matching, np.asarray(angles, dtype=np.float64))


@dataclass(frozen=True)
class PairState:
    """Amplitudes of one pair's 4-qubit block"""
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (BLOCK_DIM,):
            raise ValueError(f"pair state needs {BLOCK_DIM} amplitudes, got shape {amps.shape}")
        if abs(np.linalg.norm(amps) - 1.0) > 1e-12:
            raise ValueError("pair state is not normalized")
        support = np.ones(BLOCK_DIM, dtype=bool)
        support[[OCCUPIED_A, OCCUPIED_B]] = False
        if np.any(np.abs(amps[support]) > 1e-12):
            raise ValueError("pair state leaves the {|1100>, |0011>} subspace")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_angle(cls, theta: float) -> "PairState":
        amps = np.zeros(BLOCK_DIM, dtype=np.complex128)
        amps[OCCUPIED_A] = math.cos(theta / 2.0)
        amps[OCCUPIED_B] = -math.sin(theta / 2.0)
        return cls(amps)


def prepare(ansatz: SpaAnsatz) -> List[PairState]:
    return [PairState.from_angle(theta) for theta in ansatz.angles]


@lru_cache(maxsize=1)
def _block_paulis() -> np.ndarray:
    """All 256 four-qubit Pauli matrices, indexed by base-4 letter code"""
    mats = np.empty((4 ** QUBITS_PER_PAIR, BLOCK_DIM, BLOCK_DIM), dtype=np.complex128)
    for code in range(4 ** QUBITS_PER_PAIR):
        letters = [(code >> (2 * (QUBITS_PER_PAIR - 1 - k))) & 3 for k in range(QUBITS_PER_PAIR)]
        mats[code] = reduce(np.kron, (_PAULI_MATRICES[letter] for letter in letters))
    return mats


def block_expectations(state: PairState) -> np.ndarray:
    """<psi|P|psi> for every 4-qubit Pauli word P"""
    psi = state.amplitudes
    return np.einsum("i,kij,j->k", psi.conj(), _block_paulis(), psi).real


class FactorizedExpectation:
    """Pauli polynomial pre-encoded as per-pair block codes for repeated evaluation"""

    def __init__(self, H: PauliPolynomial):
        if H.n_qubits % QUBITS_PER_PAIR:
            raise ValueError(f"{H.n_qubits} qubits do not split into {QUBITS_PER_PAIR}-qubit pair blocks")
        self.n_qubits = H.n_qubits
        self.n_pairs = H.n_qubits // QUBITS_PER_PAIR
        words = list(H.terms)
        self.coefficients = np.array([H.terms[w] for w in words], dtype=np.float64)
        if words:
            raw = np.frombuffer("".join(words).encode("ascii"), dtype=np.uint8)
            letters = _LETTER_CODES[raw].reshape(len(words), self.n_pairs, QUBITS_PER_PAIR)
            self.codes = letters @ (4 ** np.arange(QUBITS_PER_PAIR - 1, -1, -1))
        else:
            self.codes = np.zeros((0, self.n_pairs), dtype=np.int64)

    def __call__(self, states: Sequence[PairState]) -> float:
        if len(states) != self.n_pairs:
            raise ValueError(f"{len(states)} pair states for a {self.n_qubits}-qubit Hamiltonian")
        values = np.ones(len(self.coefficients))
        for p, state in enumerate(states):
            values *= block_expectations(state)[self.codes[:, p]]
        return math.fsum(self.coefficients * values)

    def energy(self, angles: Sequence[float]) -> float:
        return self([PairState.from_angle(theta) for theta in angles])

    def gradient(self, angles: Sequence[float]) -> np.ndarray:
        return parameter_shift(self.energy, angles)


def parameter_shift(energy_fn, angles: Sequence[float]) -> np.ndarray:
    """dE/dtheta_p = [E(theta_p + pi/2) - E(theta_p - pi/2)] / 2"""
    angles = np.asarray(angles, dtype=np.float64)
    grad = np.zeros(len(angles))
    for p in range(len(angles)):
        shifted = angles.copy()
        shifted[p] += np.pi / 2
        plus = energy_fn(shifted)
        shifted[p] -= np.pi
        minus = energy_fn(shifted)
        grad[p] = 0.5 * (plus - minus)
    return grad


def expectation(H: PauliPolynomial, states: Sequence[PairState]) -> float:
    """Exact <Psi|H|Psi> as a sum over terms of products of per-pair block expectations"""
    return FactorizedExpectation(H)(states)


def gradient(H: PauliPolynomial, ansatz: SpaAnsatz) -> np.ndarray:
    return FactorizedExpectation(H).gradient(ansatz.angles)


def full_statevector(ansatz: SpaAnsatz) -> np.ndarray:
    """Kronecker product of the pair states (test oracle)"""
    if ansatz.n_qubits > STATEVECTOR_MAX_QUBITS:
        raise UnsupportedSizeError(
            f"statevector of {ansatz.n_qubits} qubits exceeds the {STATEVECTOR_MAX_QUBITS}-qubit limit"
        )
    return reduce(np.kron, (state.amplitudes for state in prepare(ansatz)))


class PairEnergyFunctional:
    """
    SPA energy straight from orbital tensors, O(n^2) per evaluation.

    Pairs are uncorrelated with each other, so only the diagonal one-body density
    (n_a = 2cos^2, n_b = 2sin^2) couples different pairs through Coulomb and exchange
    integrals; inside a pair the two closed-shell determinants mix through (ab|ab).
    Agrees with expectation(to_qubit(tensors, matching), ...) to round-off.
    """

    def __init__(self, tensors: OrbitalTensors, matching: PairMatching):
        if 2 * matching.n_pairs != tensors.n_orbitals:
            raise ValueError(f"matching with {matching.n_pairs} pairs does not fit {tensors.n_orbitals} orbitals")
        t = tensors.reordered(matching.orbital_order())
        n = t.n_orbitals
        idx = np.arange(n)
        a, b = idx[0::2], idx[1::2]

        self.n_pairs = matching.n_pairs
        self.constant = t.constant
        self.h_diag = np.diag(t.h).copy()
        self.onsite_a = t.eri[a, a, a, a]
        self.onsite_b = t.eri[b, b, b, b]
        self.pair_exchange = t.eri[a, b, a, b]

        J = t.eri[idx[:, None], idx[:, None], idx[None, :], idx[None, :]]
        K = t.eri[idx[:, None], idx[None, :], idx[None, :], idx[:, None]]
        other_pair = (idx[:, None] // 2) != (idx[None, :] // 2)
        self.coupling = np.where(other_pair, J - 0.5 * K, 0.0)

    def occupations(self, angles: Sequence[float]) -> np.ndarray:
        angles = np.asarray(angles, dtype=np.float64)
        occ = np.empty(2 * self.n_pairs)
        occ[0::2] = 2.0 * np.cos(angles / 2.0) ** 2
        occ[1::2] = 2.0 * np.sin(angles / 2.0) ** 2
        return occ

    def energy(self, angles: Sequence[float]) -> float:
        angles = np.asarray(angles, dtype=np.float64)
        if len(angles) != self.n_pairs:
            raise ValueError(f"expected {self.n_pairs} angles, got {len(angles)}")
        c, s = np.cos(angles / 2.0), np.sin(angles / 2.0)
        occ = self.occupations(angles)
        intra = c ** 2 * self.onsite_a + s ** 2 * self.onsite_b - 2.0 * c * s * self.pair_exchange
        return float(self.constant + occ @ self.h_diag + intra.sum() + 0.5 * occ @ self.coupling @ occ)

    def gradient(self, angles: Sequence[float]) -> np.ndarray:
        return parameter_shift(self.energy, angles)
