"""Thermal-band radiometry and normalized-difference spectral indices.

Every transform maps rasters to rasters cell by cell. A nodata cell in any
input yields nodata in the output.

The land-surface-temperature chain is::

    DN --toa_radiance--> L --brightness_temperature--> T
    NDVI --vegetation_proportion--> Pv --emissivity--> eps
    (T, eps) --land_surface_temperature--> LST
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .raster import RasterGrid, grid_stats, require_same_geometry

KELVIN_OFFSET = 273.15
# h*c/k_B, meter-kelvin
RHO_PLANCK = 1.438e-2
# Landsat 8 TIRS band 10 center wavelength, meters
BAND10_WAVELENGTH = 10.895e-6


@dataclass(frozen=True)
class RadiometricConstants:
    """Scene calibration constants for one thermal band.

    ``m_l``, ``a_l``, ``k1`` and ``k2`` come from the scene metadata and have
    no defaults.
    """

    m_l: float
    a_l: float
    k1: float
    k2: float
    wavelength: float = BAND10_WAVELENGTH
    rho_planck: float = RHO_PLANCK

    def __post_init__(self):
        for name in ("k1", "k2", "wavelength", "rho_planck"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        for name in ("m_l", "a_l"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def from_dict(cls, d: dict) -> "RadiometricConstants":
        known = {"m_l", "a_l", "k1", "k2", "wavelength", "rho_planck"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown radiometric constants: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


def _first_bad(mask):
    r, c = np.argwhere(mask)[0]
    return int(r), int(c)


def toa_radiance(qcal: RasterGrid, constants: RadiometricConstants) -> RasterGrid:
    """Top-of-atmosphere spectral radiance, ``m_l * DN + a_l``."""
    valid = qcal.valid_mask
    neg = valid & (qcal.values < 0)
    if neg.any():
        raise DomainError("negative digital number at cell (%d, %d)" % _first_bad(neg))
    out = np.where(valid, constants.m_l * qcal.values + constants.a_l, 0.0)
    return qcal.with_values(out, valid)


def brightness_temperature(radiance: RasterGrid, constants: RadiometricConstants) -> RasterGrid:
    """At-sensor brightness temperature in Kelvin, ``k2 / ln(k1/L + 1)``."""
    valid = radiance.valid_mask
    bad = valid & ~(radiance.values > 0)
    if bad.any():
        r, c = _first_bad(bad)
        raise DomainError(f"non-positive radiance {radiance.values[r, c]} at cell ({r}, {c})")
    L = np.where(valid, radiance.values, 1.0)
    out = constants.k2 / np.log(constants.k1 / L + 1.0)
    return radiance.with_values(out, valid)


def normalized_difference(band_a: RasterGrid, band_b: RasterGrid) -> RasterGrid:
    """``(a - b) / (a + b)``; cells where ``a + b == 0`` become nodata.

    NDVI is ``normalized_difference(nir, red)``; NDWI is
    ``normalized_difference(green, swir)``.
    """
    require_same_geometry(band_a, band_b)
    a, b = band_a.values, band_b.values
    total = a + b
    valid = band_a.valid_mask & band_b.valid_mask & (total != 0)
    out = np.divide(a - b, total, out=np.zeros_like(total), where=valid)
    if band_a.nodata is None and band_b.nodata is not None:
        return band_b.with_values(out, valid)
    return band_a.with_values(out, valid)


def ndvi(red: RasterGrid, nir: RasterGrid) -> RasterGrid:
    return normalized_difference(nir, red)


def ndwi(green: RasterGrid, swir: RasterGrid) -> RasterGrid:
    return normalized_difference(green, swir)


def vegetation_proportion(
    ndvi_grid: RasterGrid, ndvi_min: Optional[float] = None, ndvi_max: Optional[float] = None
) -> RasterGrid:
    """Squared position of NDVI between ``ndvi_min`` and ``ndvi_max``.

    The bounds default to the scene extrema. NDVI outside the bounds is
    clamped, so the result always lies in ``[0, 1]``.
    """
    if ndvi_min is None or ndvi_max is None:
        stats = grid_stats(ndvi_grid)
        ndvi_min = stats.min if ndvi_min is None else ndvi_min
        ndvi_max = stats.max if ndvi_max is None else ndvi_max
    if not ndvi_max > ndvi_min:
        raise DomainError(f"ndvi_max ({ndvi_max}) must exceed ndvi_min ({ndvi_min})")
    valid = ndvi_grid.valid_mask
    scaled = np.clip((ndvi_grid.values - ndvi_min) / (ndvi_max - ndvi_min), 0.0, 1.0)
    return ndvi_grid.with_values(np.where(valid, scaled**2, 0.0), valid)


def emissivity(pv: RasterGrid) -> RasterGrid:
    """Land surface emissivity ``0.004 * Pv + 0.986``."""
    valid = pv.valid_mask
    bad = valid & ~((pv.values >= 0) & (pv.values <= 1))
    if bad.any():
        r, c = _first_bad(bad)
        raise DomainError(f"vegetation proportion {pv.values[r, c]} outside [0, 1] at cell ({r}, {c})")
    return pv.with_values(np.where(valid, 0.004 * pv.values + 0.986, 0.0), valid)


def land_surface_temperature(
    bt: RasterGrid,
    eps: RasterGrid,
    constants: RadiometricConstants,
    output_celsius: bool = False,
) -> RasterGrid:
    """Emissivity-corrected surface temperature.

    ``LST = T / (1 + (wavelength * T / rho_planck) * ln(eps))`` with ``T`` in
    Kelvin. Returns Kelvin unless ``output_celsius`` is set.
    """
    require_same_geometry(bt, eps)
    valid = bt.valid_mask & eps.valid_mask
    bad = valid & ~(eps.values > 0)
    if bad.any():
        r, c = _first_bad(bad)
        raise DomainError(f"non-positive emissivity {eps.values[r, c]} at cell ({r}, {c})")
    T = np.where(valid, bt.values, 0.0)
    e = np.where(valid, eps.values, 1.0)
    lst = T / (1.0 + (constants.wavelength * T / constants.rho_planck) * np.log(e))
    if output_celsius:
        lst = lst - KELVIN_OFFSET
    base = bt if bt.nodata is not None or eps.nodata is None else eps
    return base.with_values(lst, valid)


def lst_from_bands(
    thermal_dn: RasterGrid,
    red: RasterGrid,
    nir: RasterGrid,
    constants: RadiometricConstants,
    ndvi_min: Optional[float] = None,
    ndvi_max: Optional[float] = None,
    output_celsius: bool = True,
):
    """Run the full chain from raw bands. Returns ``(lst, ndvi)``."""
    nd = ndvi(red, nir)
    pv = vegetation_proportion(nd, ndvi_min, ndvi_max)
    eps = emissivity(pv)
    bt = brightness_temperature(toa_radiance(thermal_dn, constants), constants)
    return land_surface_temperature(bt, eps, constants, output_celsius), nd
