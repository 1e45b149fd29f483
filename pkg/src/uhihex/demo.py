"""Procedurally generated demo scene.

Writes five Landsat-like bands, a population surface and a building table
over a synthetic island: a hot urban core with satellite towns, a river and
a reservoir, vegetation everywhere else. The thermal band is produced by
inverting the LST chain, so running the pipeline recovers the planted
temperature field (up to DN quantization).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy import ndimage

from .features import BuildingRecord, dump_buildings
from .indices import RadiometricConstants, emissivity, ndvi, vegetation_proportion
from .raster import DEFAULT_NODATA, GeoPoint, RasterGrid, save_raster

# Landsat 8 band 10 calibration, typical scene metadata values
DEMO_CONSTANTS = RadiometricConstants(m_l=3.342e-4, a_l=0.1, k1=774.8853, k2=1321.0789)
DEMO_ORIGIN = (360000.0, 130000.0)


def _smooth_noise(rng, shape, sigma):
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="reflect")
    return field / field.std()


def _blob(u, v, cu, cv, scale):
    return np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * scale**2))


def generate_demo(out_dir, seed: int = 0, size: int = 1000, cell_size: float = 10.0, n_buildings: int = 2000) -> Path:
    """Write the demo inputs and a ready-to-run ``config.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    shape = (size, size)

    # u east, v north, both in [0, 1]; row 0 is the north edge
    v, u = np.meshgrid(1.0 - (np.arange(size) + 0.5) / size, (np.arange(size) + 0.5) / size, indexing="ij")
    island = ((u - 0.5) / 0.48) ** 2 + ((v - 0.5) / 0.44) ** 2 + 0.08 * _smooth_noise(rng, shape, size / 20) < 1.0

    urban = np.clip(
        _blob(u, v, 0.55, 0.45, 0.16) + 0.6 * _blob(u, v, 0.25, 0.7, 0.08) + 0.5 * _blob(u, v, 0.78, 0.72, 0.07)
        + 0.15 * _smooth_noise(rng, shape, size / 40),
        0.0,
        1.0,
    )
    river = np.abs(v - (0.35 + 0.08 * np.sin(2 * math.pi * 1.5 * u))) < 0.012
    reservoir = ((u - 0.35) / 0.07) ** 2 + ((v - 0.52) / 0.05) ** 2 < 1.0
    water = (river | reservoir) & island
    veg = np.clip((1.0 - urban) * (0.7 + 0.25 * _smooth_noise(rng, shape, size / 30)), 0.0, 1.0)
    veg[water] = 0.0

    def band(base, noise):
        return np.clip(base + noise * rng.standard_normal(shape), 0.005, 1.0)

    red = band(0.05 + 0.12 * urban + 0.04 * (1 - veg) - 0.02 * veg, 0.005)
    nir = band(0.12 + 0.38 * veg + 0.06 * urban, 0.008)
    green = band(0.06 + 0.05 * urban + 0.02 * veg, 0.004)
    swir = band(0.08 + 0.18 * urban + 0.06 * (1 - veg), 0.006)
    red[water], nir[water], green[water], swir[water] = 0.03, 0.02, 0.07, 0.01

    def grid(values):
        arr = np.round(values, 5)
        arr[~island] = DEFAULT_NODATA
        return RasterGrid(arr, DEMO_ORIGIN[0], DEMO_ORIGIN[1], cell_size, DEFAULT_NODATA)

    red_g, nir_g, green_g, swir_g = grid(red), grid(nir), grid(green), grid(swir)
    nd = ndvi(red_g, nir_g)
    nw = (green_g.values - swir_g.values) / (green_g.values + swir_g.values)

    # buildings: sampled in proportion to urban intensity on dry land
    weight = np.where(island & ~water, urban**2, 0.0).ravel()
    idx = rng.choice(weight.size, size=n_buildings, replace=False, p=weight / weight.sum())
    rows, cols = np.divmod(idx, size)
    records = []
    for i, (rr, cc) in enumerate(zip(rows, cols)):
        x = DEMO_ORIGIN[0] + (cc + rng.uniform()) * cell_size
        y = DEMO_ORIGIN[1] + (size - rr - rng.uniform()) * cell_size
        intensity = urban[rr, cc]
        height = int(np.clip(rng.normal(6 + 24 * intensity, 4), 2, 50))
        units = int(max(0, round(height * rng.uniform(4, 10) * (0.5 + intensity))))
        residential = int(rng.uniform() < 0.92)
        records.append(
            BuildingRecord(
                address_key=f"BLK {100 + i} DEMO STREET {1 + i % 40}",
                height_storeys=height,
                dwelling_units=units if residential else 0,
                residential_flag=residential,
                commercial_flag=int(rng.uniform() < 0.1 + 0.25 * intensity),
                market_hawker_flag=int(rng.uniform() < 0.03),
                multistorey_carpark_flag=int(rng.uniform() < 0.08),
                precinct_pavilion_flag=int(rng.uniform() < 0.05),
                miscellaneous_flag=int(rng.uniform() < 0.12),
                location=GeoPoint(float(round(x, 2)), float(round(y, 2))),
            )
        )
    # planted surface temperature, Celsius; buildings radiate heat locally
    footprint = np.zeros(shape)
    for rec in records:
        rr = min(size - 1, int((DEMO_ORIGIN[1] + size * cell_size - rec.location.y) // cell_size))
        cc = min(size - 1, int((rec.location.x - DEMO_ORIGIN[0]) // cell_size))
        footprint[rr, cc] += rec.height_storeys
    # unit peak per storey at the building itself
    building_heat = ndimage.gaussian_filter(footprint, 12.0, mode="constant") * 2 * math.pi * 12.0**2
    lst_c = (
        28.0
        + 2.0 * urban
        + 0.01 * building_heat
        - 5.0 * np.where(island, nd.values, 0.0)
        - 2.5 * np.where(island, nw, 0.0)
        - 2.0 * water
        + 0.6 * _smooth_noise(rng, shape, size / 50)
        + 0.4 * _smooth_noise(rng, shape, size / 120)
        + 0.3 * rng.standard_normal(shape)
    )
    eps = emissivity(vegetation_proportion(nd)).values
    c = DEMO_CONSTANTS
    lst_k = lst_c + 273.15
    log_eps = np.log(np.where(island, eps, 1.0))
    bt = lst_k / (1.0 - c.wavelength * lst_k * log_eps / c.rho_planck)
    radiance = c.k1 / (np.exp(c.k2 / bt) - 1.0)
    dn = np.round((radiance - c.a_l) / c.m_l)
    dn[~island] = DEFAULT_NODATA
    thermal = RasterGrid(dn, DEMO_ORIGIN[0], DEMO_ORIGIN[1], cell_size, DEFAULT_NODATA)

    people = urban**1.5 * rng.gamma(2.0, 1.5, shape) * 6.0
    people[water] = 0.0
    population = grid(people)

    save_raster(red_g, out / "red.asc")
    save_raster(nir_g, out / "nir.asc")
    save_raster(green_g, out / "green.asc")
    save_raster(swir_g, out / "swir.asc")
    save_raster(thermal, out / "thermal_dn.asc")
    save_raster(population, out / "population.asc")

    (out / "buildings.csv").write_text(dump_buildings(records))

    config = {
        "inputs": {
            "red": "red.asc",
            "nir": "nir.asc",
            "green": "green.asc",
            "swir": "swir.asc",
            "thermal": "thermal_dn.asc",
            "population": "population.asc",
            "buildings": "buildings.csv",
        },
        "radiometric": {"m_l": c.m_l, "a_l": c.a_l, "k1": c.k1, "k2": c.k2, "wavelength": c.wavelength},
        "diameters": [600, 500, 480, 400, 300, 200],
        "models": ["OLS", "SAR", "SEM"],
        "output_dir": "output",
        "seed": seed,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return out / "config.json"
