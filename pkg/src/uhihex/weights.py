"""Row-standardized hexagonal contiguity weights."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, NumericError
from .hexgrid import HexCellId

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """Sparse row-standardized weights over ``cells``.

    Attributes
    ----------
    cells : list of HexCellId
        Row order; ``cells[i]`` is observation ``i``.
    matrix : scipy.sparse.csr_matrix
        Standardized weights ``W``.
    adjacency : scipy.sparse.csr_matrix
        Binary symmetric contiguity ``C`` before standardization.
    eigenvalues : ndarray
        Eigenvalues of ``W``, ascending.
    dropped : list of HexCellId
        Input cells removed because they had no observed neighbor.
    """

    cells: List[HexCellId]
    matrix: sp.csr_matrix
    adjacency: sp.csr_matrix
    eigenvalues: np.ndarray
    dropped: List[HexCellId] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.cells)

    @property
    def index_map(self) -> Dict[HexCellId, int]:
        return {c: i for i, c in enumerate(self.cells)}

    @property
    def neighbors(self) -> List[List[Tuple[int, float]]]:
        m = self.matrix
        return [
            list(zip(m.indices[m.indptr[i] : m.indptr[i + 1]].tolist(), m.data[m.indptr[i] : m.indptr[i + 1]].tolist()))
            for i in range(self.n)
        ]

    @property
    def feasible_interval(self) -> Tuple[float, float]:
        """Open interval of coefficients for which ``I - coef*W`` is nonsingular."""
        lo, hi = self.eigenvalues[0], self.eigenvalues[-1]
        return 1.0 / lo, 1.0 / hi

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def to_triplets_csv(self) -> str:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        buf = io.StringIO()
        buf.write("i,j,weight\n")
        for k in order:
            buf.write(f"{coo.row[k]},{coo.col[k]},{float(coo.data[k])!r}\n")
        return buf.getvalue()


def _eigenvalues(adjacency: sp.csr_matrix, degree: np.ndarray) -> np.ndarray:
    # D^-1/2 C D^-1/2 is symmetric and similar to D^-1 C, so its spectrum is real
    inv_sqrt = sp.diags(1.0 / np.sqrt(degree))
    sym = (inv_sqrt @ adjacency @ inv_sqrt).toarray()
    return np.linalg.eigvalsh(sym)


def from_adjacency(cells: Sequence[HexCellId], adjacency) -> SpatialWeights:
    """Standardize a symmetric binary adjacency whose rows all have a neighbor."""
    adjacency = sp.csr_matrix(adjacency, dtype=float)
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    if np.any(degree == 0):
        raise ValueError("every observation needs at least one neighbor")
    if (abs(adjacency - adjacency.T)).nnz:
        raise ValueError("adjacency must be symmetric")
    matrix = sp.csr_matrix(sp.diags(1.0 / degree) @ adjacency)
    matrix.sort_indices()
    return SpatialWeights(list(cells), matrix, adjacency, _eigenvalues(adjacency, degree))


def build_weights(cells: Sequence[HexCellId]) -> SpatialWeights:
    """Edge-contiguity weights over the observed ``cells``.

    Cells without any observed neighbor are dropped (and listed in
    ``dropped``). Row order follows the sorted retained cells.
    """
    cells = [HexCellId(*c) for c in cells]
    if len(set(cells)) != len(cells):
        raise ValueError("cells must be distinct")
    observed = set(cells)
    dropped = sorted(c for c in cells if not any(nb in observed for nb in c.neighbors()))
    if dropped:
        logger.warning("dropping %d isolated hexagon(s) with no observed neighbor", len(dropped))
    kept = sorted(observed.difference(dropped))
    if len(kept) < 2:
        raise NumericError(f"need at least 2 connected observations, have {len(kept)}")
    index = {c: i for i, c in enumerate(kept)}
    rows, cols = [], []
    for i, c in enumerate(kept):
        for nb in c.neighbors():
            j = index.get(nb)
            if j is not None:
                rows.append(i)
                cols.append(j)
    n = len(kept)
    adjacency = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    w = from_adjacency(kept, adjacency)
    object.__setattr__(w, "dropped", dropped)
    return w


def spatial_lag(w: SpatialWeights, v) -> np.ndarray:
    """``W @ v``; ``v`` may be a vector or an ``(n, k)`` matrix."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != w.n:
        raise ValueError(f"vector length {v.shape[0]} does not match {w.n} observations")
    return w.matrix @ v


def log_det_factor(w: SpatialWeights, coef: float) -> float:
    """``ln|I - coef*W|`` from the eigenvalues of ``W``."""
    terms = 1.0 - coef * w.eigenvalues
    if np.any(terms <= 0):
        lo, hi = w.feasible_interval
        raise DomainError(f"coefficient {coef} outside feasible interval ({lo}, {hi})")
    return float(np.sum(np.log(terms)))
