"""Secular dipolar coupling constants between electron spins.

All couplings are angular frequencies in rad/us.  Only secular terms are
kept: the coupling of a pair separated by displacement d is

    c * [1 - 3 nz^2],   c = prefactor / |d|^3,   nz = d_z / |d|

which vanishes at the magic angle nz = 1/sqrt(3).  The same angular form
applies to the central-spin couplings A_k (displacement from the origin)
and the intra-bath matrix d_jk.
"""

import numpy as np

from .errors import ConfigError
from .units import CONSTANTS


def _secular_coupling(displacement: np.ndarray) -> float:
    d = np.asarray(displacement, dtype=float)
    r2 = float(d @ d)
    if r2 == 0.0:
        raise ConfigError("coincident spins: zero separation")
    r = np.sqrt(r2)
    nz = d[2] / r
    return CONSTANTS.dipolar_prefactor / (r * r * r) * (1.0 - 3.0 * nz * nz)


def system_bath_coupling(position: np.ndarray) -> float:
    """Coupling A_k of a bath spin at `position` (nm) to the central spin at the origin."""
    return _secular_coupling(position)


def intra_bath_coupling(pos_j: np.ndarray, pos_k: np.ndarray) -> float:
    """Coupling d_jk between two bath spins at the given positions (nm)."""
    return _secular_coupling(np.asarray(pos_k, dtype=float) - np.asarray(pos_j, dtype=float))


def system_bath_couplings(positions: np.ndarray) -> np.ndarray:
    """Vectorized A_k for an (J, 3) array of bath positions."""
    pos = np.asarray(positions, dtype=float)
    r = np.linalg.norm(pos, axis=1)
    if np.any(r == 0.0):
        raise ConfigError("bath spin at the origin coincides with the central spin")
    nz = pos[:, 2] / r
    return CONSTANTS.dipolar_prefactor / r**3 * (1.0 - 3.0 * nz**2)


def intra_bath_matrix(positions: np.ndarray) -> np.ndarray:
    """Symmetric (J, J) matrix of intra-bath couplings with zero diagonal."""
    pos = np.asarray(positions, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("jkc,jkc->jk", diff, diff)
    np.fill_diagonal(r2, 1.0)  # dummy, diagonal is zeroed below
    if np.any(r2 == 0.0):
        raise ConfigError("two bath spins occupy the same site")
    r = np.sqrt(r2)
    nz2 = (diff[:, :, 2] / r) ** 2
    d = CONSTANTS.dipolar_prefactor / r**3 * (1.0 - 3.0 * nz2)
    np.fill_diagonal(d, 0.0)
    return d


def bath_rms_b(couplings: np.ndarray) -> float:
    """Root-mean-square bath coupling b = 0.5 * sqrt(sum A_j^2).

    Sets the dephasing time of the central spin through T2* = sqrt(2)/b.
    """
    a = np.asarray(couplings, dtype=float)
    if a.size == 0:
        raise ConfigError("empty coupling list")
    return 0.5 * float(np.sqrt(np.sum(a * a)))
