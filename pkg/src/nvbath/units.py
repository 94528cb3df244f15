"""Physical constants and the internal unit system.

Everything in this package uses one unit system:

* time        : microseconds (us)
* length      : nanometers (nm)
* frequency   : angular, rad/us  (1 MHz ordinary frequency = 2*pi rad/us)
* field       : gauss (G)

With these units all dipolar couplings at relevant distances fall in
the range ~0.01..1000 rad/us, far from float underflow/overflow.
"""

from dataclasses import dataclass

import numpy as np

# CODATA 2018 values, SI.
GAMMA_E_SI = 1.76085963023e11  # electron gyromagnetic ratio, rad s^-1 T^-1
HBAR_SI = 1.054571817e-34      # reduced Planck constant, J s
MU0_OVER_4PI_SI = 1e-7         # T^2 m^3 / J

# Unit conversion factors.
S_PER_US = 1e-6
M_PER_NM = 1e-9
T_PER_G = 1e-4


def dipolar_prefactor() -> float:
    """Dipolar coupling prefactor (mu0/4pi) * gamma_e^2 * hbar in rad us^-1 nm^3.

    The secular dipolar coupling between two electron spins separated by r
    is prefactor / r^3 times the angular factor [1 - 3 nz^2].  Both spins
    are treated as free electrons (g ~ 2.00); divided by r^3 in nm the
    result is an angular frequency in rad/us.
    """
    si = MU0_OVER_4PI_SI * GAMMA_E_SI**2 * HBAR_SI  # rad s^-1 m^3
    return si * S_PER_US / M_PER_NM**3


@dataclass(frozen=True)
class PhysicalConstants:
    """Immutable constants in internal units; safe to share anywhere."""

    dipolar_prefactor: float = dipolar_prefactor()    # rad us^-1 nm^3
    gyromagnetic_ratio_e: float = GAMMA_E_SI * S_PER_US * T_PER_G  # rad us^-1 G^-1
    lattice_constant: float = 0.3567                  # nm, diamond

    def __post_init__(self):
        assert self.dipolar_prefactor > 0
        assert self.lattice_constant == 0.3567


CONSTANTS = PhysicalConstants()


def mhz_to_rad_per_us(f_mhz: float) -> float:
    """Ordinary frequency in MHz to angular frequency in rad/us."""
    return 2.0 * np.pi * f_mhz
