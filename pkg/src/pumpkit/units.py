"""Physical constants and unit conversions.

Energies inside the package are in recoil units E_rec = h^2 / (2 m lambda^2)
unless a name ends in ``_hz`` (energy / h).  Times are seconds.
"""

from scipy import constants

POTASSIUM_40_MASS = 39.96399848 * constants.physical_constants["atomic mass constant"][0]
DEFAULT_WAVELENGTH = 1064e-9


def recoil_frequency(mass: float = POTASSIUM_40_MASS, wavelength: float = DEFAULT_WAVELENGTH) -> float:
    """E_rec / h in Hz."""
    return constants.h / (2.0 * mass * wavelength**2)
