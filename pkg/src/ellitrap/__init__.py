"""Design calculations for surface-electrode elliptical ion traps.

Modules
-------
trap_model  gapless-plane electrostatics, pseudopotential, secular frequencies
crystal     equilibrium ion crystals in a harmonic trap
magnetics   Biot-Savart fields of straight wires and spin forces
coupling    spin-spin coupling rates and the trap-scale sweep
cli         batch command-line runner
"""
from .crystal import HarmonicTrap, solve_equilibrium
from .trap_model import SR88, Ion

__all__ = ["HarmonicTrap", "Ion", "SR88", "solve_equilibrium"]
__version__ = "0.1.0"
