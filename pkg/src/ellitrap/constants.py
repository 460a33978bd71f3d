"""Physical constants (CODATA 2018, SI units).

Every module takes its constants from here so that one table fixes all
numerical results.
"""
import math

E_CHARGE = 1.602176634e-19          # C, exact
EPSILON_0 = 8.8541878128e-12        # F/m
MU_0 = 1.25663706212e-6             # N/A^2
HBAR = 1.054571817e-34              # J s, exact
AMU = 1.66053906660e-27             # kg
BOHR_MAGNETON = 9.2740100783e-24    # J/T

COULOMB_K = 1.0 / (4.0 * math.pi * EPSILON_0)

SR88_MASS_AMU = 87.9056
