"""Dimensionless unit system for the trapped-electron Hamiltonian.

All internal computation uses dimensionless quantities: lengths in units of
``x0``, energies in units of ``E_d = hbar^2 / (m_e x0^2)``.  The dimensionless
trap potential is ``v(x) = -e phi(x) / E_d`` where ``phi`` is the electrostatic
potential in volts.  Conversion to laboratory units (GHz, mV, nm) happens only
at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# CODATA 2018, full double precision.  Fixed so the dimensionless couplings
# are reproducible bit-for-bit across platforms.
ELECTRON_MASS = 9.1093837015e-31  # kg
ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
PLANCK = 6.62607015e-34  # J s (exact)
HBAR = PLANCK / (2.0 * math.pi)
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m


@dataclass(frozen=True)
class Constants:
    m_e: float = ELECTRON_MASS
    e: float = ELEMENTARY_CHARGE
    hbar: float = HBAR
    eps0: float = VACUUM_PERMITTIVITY


@dataclass(frozen=True)
class UnitSystem:
    """Length/energy scales and derived conversion factors.

    Attributes
    ----------
    x0 : float
        Length unit in metres.
    E_d : float
        Energy unit in joules, ``hbar^2 / (m_e x0^2)``.
    freq_unit : float
        GHz per dimensionless energy unit, ``E_d / (2 pi hbar) / 1e9``.
    kappa : float
        Dimensionless Coulomb strength ``e^2 / (4 pi eps0 x0 E_d)``.
    volt_unit : float
        Dimensionless energy per mV of electrostatic potential, ``e * 1e-3 / E_d``.
    """

    x0: float
    E_d: float
    freq_unit: float
    kappa: float
    volt_unit: float
    constants: Constants = field(default_factory=Constants)


def derive_units(x0_nm: float = 123.0, constants: Constants = Constants()) -> UnitSystem:
    """Build the unit system for a given length unit (nanometres)."""
    if not x0_nm > 0:
        raise ValueError(f"length unit must be positive, got {x0_nm} nm")
    x0 = x0_nm * 1e-9
    E_d = constants.hbar**2 / (constants.m_e * x0**2)
    freq_unit = E_d / (2.0 * math.pi * constants.hbar) / 1e9
    kappa = constants.e**2 / (4.0 * math.pi * constants.eps0 * x0 * E_d)
    volt_unit = constants.e * 1e-3 / E_d
    return UnitSystem(
        x0=x0,
        E_d=E_d,
        freq_unit=freq_unit,
        kappa=kappa,
        volt_unit=volt_unit,
        constants=constants,
    )


def energy_to_ghz(energy, units: UnitSystem):
    """Convert dimensionless energy to GHz.  Linear and sign-preserving."""
    return energy * units.freq_unit


def ghz_to_energy(freq_ghz, units: UnitSystem):
    """Inverse of :func:`energy_to_ghz`."""
    return freq_ghz / units.freq_unit


def potential_mv_to_dimensionless(phi_mv, units: UnitSystem):
    """Trap potential seen by an electron: ``v = -e phi / E_d`` with phi in mV."""
    return -units.volt_unit * phi_mv
