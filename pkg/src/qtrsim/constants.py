"""Physical constants (CODATA 2018 exact values) and unit conversions.

All formula code references this table; no other module hard-codes a
physical constant. Internally energies are stored as angular frequencies
in rad/us and times in us; public interfaces use GHz, MHz, V, fF, nm.
"""

import math

E_CHARGE = 1.602176634e-19   # C
H_PLANCK = 6.62607015e-34    # J s
HBAR = H_PLANCK / (2.0 * math.pi)

# 1 GHz = 1e3 cycles/us, 1 MHz = 1 cycle/us
GHZ_TO_ANGULAR = 2.0 * math.pi * 1.0e3   # rad/us per GHz
MHZ_TO_ANGULAR = 2.0 * math.pi           # rad/us per MHz


def ghz_to_angular(f_ghz: float) -> float:
    return f_ghz * GHZ_TO_ANGULAR


def angular_to_ghz(omega: float) -> float:
    return omega / GHZ_TO_ANGULAR


def mhz_to_angular(f_mhz: float) -> float:
    return f_mhz * MHZ_TO_ANGULAR


def angular_to_mhz(omega: float) -> float:
    return omega / MHZ_TO_ANGULAR
