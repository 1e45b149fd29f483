"""Synthetic spatial processes on hexagon lattices, for Monte Carlo checks."""

from __future__ import annotations

from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .hexgrid import HexCellId
from .weights import SpatialWeights


def hex_patch(radius: int) -> List[HexCellId]:
    """All cells within ``radius`` steps of the origin (a hexagon-shaped patch)."""
    cells = []
    for q in range(-radius, radius + 1):
        for r in range(max(-radius, -q - radius), min(radius, -q + radius) + 1):
            cells.append(HexCellId(q, r))
    return sorted(cells)


def hex_parallelogram(nq: int, nr: int) -> List[HexCellId]:
    return [HexCellId(q, r) for q in range(nq) for r in range(nr)]


class SpatialFilter:
    """Solves ``(I - coef * W) x = b`` repeatedly for one coefficient."""

    def __init__(self, w: SpatialWeights, coef: float):
        n = w.n
        self._lu = splu(sp.csc_matrix(sp.identity(n) - coef * w.matrix))

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))


def simulate_sar(w: SpatialWeights, X: np.ndarray, beta, rho: float, rng, sigma: float = 1.0,
                 filt: Optional[SpatialFilter] = None) -> np.ndarray:
    """Draw ``y = (I - rho W)^-1 (X beta + e)`` with ``e ~ N(0, sigma^2)``."""
    filt = filt or SpatialFilter(w, rho)
    return filt.solve(X @ np.asarray(beta, float) + sigma * rng.standard_normal(w.n))


def simulate_sem(w: SpatialWeights, X: np.ndarray, beta, lam: float, rng, sigma: float = 1.0,
                 filt: Optional[SpatialFilter] = None) -> np.ndarray:
    """Draw ``y = X beta + (I - lam W)^-1 e`` with ``e ~ N(0, sigma^2)``."""
    filt = filt or SpatialFilter(w, lam)
    return X @ np.asarray(beta, float) + filt.solve(sigma * rng.standard_normal(w.n))
