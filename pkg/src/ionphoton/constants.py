"""Physical constants and default Ba-138 ion parameters.

All internal frequencies are angular (rad/s); configuration files use Hz
and are converted on load.
"""

import math

from scipy.constants import hbar as HBAR  # J s
from scipy.constants import physical_constants

MU_B = physical_constants["Bohr magneton"][0]  # J/T

TWO_PI = 2.0 * math.pi

# Lande g-factors of the three Ba+ manifolds (literature values; the
# experiment papers leave them implicit).
G_S12 = 2.0023
G_P12 = 2.0 / 3.0
G_D32 = 4.0 / 5.0

# Decay rates of 6P1/2 into the two lower manifolds, rad/s.
GAMMA_P_TO_S = TWO_PI * 15.1e6
GAMMA_P_TO_D = TWO_PI * 5.3e6

# Transition wavelengths, m.
WAVELENGTH_COOLING = 493.4e-9   # 6S1/2 - 6P1/2
WAVELENGTH_REPUMP = 649.7e-9    # 5D3/2 - 6P1/2

# Time-tag quantization of the counting hardware, s.
TIMETAG_RESOLUTION = 4e-12
