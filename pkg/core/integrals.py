"""
One- and two-electron integrals for hydrogen in a minimal contracted s basis.

All quantities are in Hartree atomic units; coordinates are converted from Angstrom
once, in build_basis. Integrals use the closed forms for s-type Gaussians (overlap,
kinetic-overlap relation, zeroth Boys function for attraction and repulsion),
evaluated for all primitive combinations at once and contracted with einsum.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import erf

from core.geometry import Geometry
from utils.constants import ANGSTROM_TO_BOHR

logger = logging.getLogger("PRISM.Integrals")

# STO-3G hydrogen (zeta = 1.24)
STO3G_H_EXPONENTS = np.array([3.42525091, 0.62391373, 0.16885540])
STO3G_H_COEFFICIENTS = np.array([0.15432897, 0.53532814, 0.44463454])

BOYS_SERIES_CUTOFF = 1e-10


@dataclass
class BasisSet:
    """One contracted s function per atom"""
    centers: np.ndarray       # (n, 3) bohr
    exponents: np.ndarray     # (n, k) bohr^-2
    coefficients: np.ndarray  # (n, k) contraction weights including primitive norms

    @property
    def n_functions(self) -> int:
        return len(self.centers)

    @property
    def charges(self) -> np.ndarray:
        return np.ones(self.n_functions)


@dataclass
class IntegralTables:
    """AO integrals in chemists' notation"""
    S: np.ndarray
    T_kin: np.ndarray
    V_nuc: np.ndarray
    ERI: np.ndarray
    E_nn: float

    @property
    def core_hamiltonian(self) -> np.ndarray:
        return self.T_kin + self.V_nuc


def boys_f0(x) -> np.ndarray:
    """F0(x) = 1/2 sqrt(pi/x) erf(sqrt(x)), with a Taylor series near zero"""
    x = np.asarray(x, dtype=np.float64)
    small = x < BOYS_SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    exact = 0.5 * np.sqrt(np.pi / safe) * erf(np.sqrt(safe))
    series = 1.0 - x / 3.0 + x * x / 10.0
    return np.where(small, series, exact)


def _primitive_norm(alpha: np.ndarray) -> np.ndarray:
    return (2.0 * alpha / math.pi) ** 0.75


def build_basis(geom: Geometry) -> BasisSet:
    """Place a normalized STO-3G s function on every hydrogen"""
    n = geom.n_atoms
    centers = geom.coords * ANGSTROM_TO_BOHR
    exponents = np.tile(STO3G_H_EXPONENTS, (n, 1))
    coefficients = np.tile(STO3G_H_COEFFICIENTS * _primitive_norm(STO3G_H_EXPONENTS), (n, 1))

    # renormalize the contraction so <phi|phi> = 1 exactly
    a = exponents[0]
    d = coefficients[0]
    p = a[:, None] + a[None, :]
    self_overlap = float(d @ ((math.pi / p) ** 1.5) @ d)
    coefficients = coefficients / math.sqrt(self_overlap)

    return BasisSet(centers=centers, exponents=exponents, coefficients=coefficients)


def _pair_quantities(basis: BasisSet):
    """Gaussian-product data for every (a, b, i, j) primitive combination"""
    alpha = basis.exponents
    A = basis.centers
    p = alpha[:, None, :, None] + alpha[None, :, None, :]                # (n, n, k, k)
    mu = alpha[:, None, :, None] * alpha[None, :, None, :] / p
    diff = A[:, None, :] - A[None, :, :]
    r2 = np.einsum("abx,abx->ab", diff, diff)[:, :, None, None]
    P = (alpha[:, None, :, None, None] * A[:, None, None, None, :]
         + alpha[None, :, None, :, None] * A[None, :, None, None, :]) / p[..., None]
    cc = basis.coefficients[:, None, :, None] * basis.coefficients[None, :, None, :]
    K = cc * np.exp(-mu * r2)
    return p, mu, r2, P, K


def compute_integrals(basis: BasisSet) -> IntegralTables:
    """Overlap, kinetic, nuclear attraction, ERI and nuclear repulsion"""
    p, mu, r2, P, K = _pair_quantities(basis)
    n, k = basis.exponents.shape

    S = np.einsum("abij->ab", K * (math.pi / p) ** 1.5)
    T_kin = np.einsum("abij->ab", K * mu * (3.0 - 2.0 * mu * r2) * (math.pi / p) ** 1.5)

    V_nuc = np.zeros((n, n))
    for Z, C in zip(basis.charges, basis.centers):
        PC2 = ((P - C) ** 2).sum(axis=-1)
        V_nuc -= Z * np.einsum("abij->ab", K * (2.0 * math.pi / p) * boys_f0(p * PC2))

    # (ab|cd) over flattened primitive pairs
    p_flat = p.reshape(n, n, k * k)
    K_flat = K.reshape(n, n, k * k)
    P_flat = P.reshape(n, n, k * k, 3)
    pq = p_flat[:, :, :, None, None, None] * p_flat[None, None, None, :, :, :]
    psum = p_flat[:, :, :, None, None, None] + p_flat[None, None, None, :, :, :]
    PQ = P_flat[:, :, :, None, None, None, :] - P_flat[None, None, None, :, :, :, :]
    PQ2 = (PQ ** 2).sum(axis=-1)
    pref = 2.0 * math.pi ** 2.5 / (pq * np.sqrt(psum))
    boys = boys_f0(pq / psum * PQ2)
    full = pref * boys * K_flat[:, :, :, None, None, None] * K_flat[None, None, None, :, :, :]
    ERI = np.einsum("abicdj->abcd", full)

    E_nn = float((1.0 / pdist(basis.centers)).sum()) if n > 1 else 0.0

    logger.debug(f"Integrals for {n} centers: E_nn={E_nn:.10f}")
    return IntegralTables(S=S, T_kin=T_kin, V_nuc=V_nuc, ERI=ERI, E_nn=E_nn)
