"""Simulator and voltage optimizer for two Coulomb-coupled electrons in an
electrode-defined double-well trap."""

from .units import UnitSystem, derive_units, energy_to_ghz

__all__ = ["UnitSystem", "derive_units", "energy_to_ghz"]
__version__ = "0.1.0"
