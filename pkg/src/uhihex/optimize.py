"""Bounded one-dimensional maximization."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ScalarMax(NamedTuple):
    x: float
    value: float
    evaluations: int
    at_boundary: bool


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-8, max_iter: int = 500):
    """Golden-section search for a maximum of a unimodal ``f`` on ``[a, b]``.

    Stops once the bracket is narrower than ``tol``. Returns ``(x, f(x), evaluations)``.
    """
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    evals = 2
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        evals += 1
    x = 0.5 * (a + b)
    fx = f(x)
    evals += 1
    best = max((fx, x), (fc, c), (fd, d))
    return best[1], best[0], evals


def maximize_on_interval(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8, grid_points: int = 201
) -> ScalarMax:
    """Maximize ``f`` over the open interval ``(lo, hi)``.

    A coarse scan brackets the global maximum, then golden-section search
    refines it inside the two neighboring scan cells. ``at_boundary`` is set
    when the refined maximum is pressed against either end of the scan, i.e.
    ``f`` is still rising at the edge of the open interval.
    """
    width = hi - lo
    eps = 1e-9 * width
    xs = np.linspace(lo + eps, hi - eps, grid_points)
    vals = np.array([f(x) for x in xs])
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    i = int(np.argmax(vals))
    if not np.isfinite(vals[i]):
        raise ValueError("objective is not finite anywhere on the interval")
    if np.ptp(vals) == 0:
        # flat objective: every point is a maximizer
        mid = 0.5 * (lo + hi)
        return ScalarMax(mid, float(f(mid)), grid_points + 1, False)
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, grid_points - 1)]
    x, fx, evals = golden_section_max(f, a, b, tol)
    hugging = min(x - xs[0], xs[-1] - x) < 10 * tol
    return ScalarMax(x, fx, evals + grid_points, bool(hugging))
