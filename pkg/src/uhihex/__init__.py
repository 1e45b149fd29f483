"""Urban heat island analysis on hexagonal grids.

Land-surface temperature and spectral indices from satellite bands,
aggregation onto hexagon grids, and OLS / spatial lag / spatial error
regression with spatial diagnostics.
"""

from .raster import GeoPoint, RasterGrid, cell_center, grid_stats, read_ascii_grid, write_ascii_grid
from .hexgrid import HexCellId, HexGrid, build_hexgrid
from .weights import SpatialWeights, build_weights
from .models import DesignMatrix, ModelFit, fit_ols, fit_sar, fit_sem

__all__ = [
    "GeoPoint", "RasterGrid", "cell_center", "grid_stats", "read_ascii_grid", "write_ascii_grid",
    "HexCellId", "HexGrid", "build_hexgrid",
    "SpatialWeights", "build_weights",
    "DesignMatrix", "ModelFit", "fit_ols", "fit_sar", "fit_sem",
]

__version__ = "0.1.0"
