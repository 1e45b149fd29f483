"""OLS, spatial lag (SAR) and spatial error (SEM) regression.

Spatial models are estimated by maximum likelihood. The likelihood is
concentrated on the spatial coefficient, maximized in one dimension, and
standard errors come from a central-difference Hessian of the full
log-likelihood in ``(beta, coef, sigma2)``.

Model forms::

    OLS  y = X b + e
    SAR  y = rho W y + X b + e
    SEM  y = X b + u,  u = lambda W u + e

For SEM, ``residuals`` holds the innovations ``e = (I - lambda W)(y - X b)``,
not the spatially correlated ``u``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import ConvergenceError, RankDeficiencyError
from .optimize import maximize_on_interval
from .weights import SpatialWeights

LOG_2PI = math.log(2.0 * math.pi)
SEARCH_TOL = 1e-8
HESSIAN_STEP = 1e-5

MODEL_KINDS = ("OLS", "SAR", "SEM")


def significance_level(p: float) -> Optional[float]:
    """Highest of 0.95 / 0.99 / 0.999 reached by ``p``, else None."""
    if p is None or not math.isfinite(p):
        return None
    if p < 0.001:
        return 0.999
    if p < 0.01:
        return 0.99
    if p < 0.05:
        return 0.95
    return None


@dataclass
class DesignMatrix:
    """Regressors ``x`` (without intercept) and response ``y``."""

    x: np.ndarray
    y: np.ndarray
    names: List[str]

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.names = list(self.names)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y have different numbers of rows")
        if len(self.names) != self.x.shape[1]:
            raise ValueError("one name per regressor required")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("design contains non-finite values")
        if self.n <= self.k + 2:
            raise ValueError(f"need more than k + 2 = {self.k + 2} observations, have {self.n}")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def X(self) -> np.ndarray:
        """Full design with the leading column of ones."""
        return np.column_stack([np.ones(self.n), self.x])

    @property
    def all_names(self) -> List[str]:
        return ["CONSTANT"] + self.names

    def check_rank(self):
        X = self.X
        _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        tol = diag[0] * max(X.shape) * np.finfo(float).eps if diag.size else 0.0
        rank = int(np.sum(diag > tol))
        if rank < X.shape[1]:
            bad = [self.all_names[j] for j in piv[rank:]]
            cond = float(np.linalg.cond(X))
            raise RankDeficiencyError(
                f"design is rank deficient (rank {rank} < {X.shape[1]}, condition {cond:.3g}); "
                f"dependent column(s): {', '.join(bad)}",
                bad,
            )

    @classmethod
    def from_table(cls, table, variables: Sequence[str], drop_constant: bool = False):
        """Build from a FeatureTable; optionally drop zero-variance regressors."""
        names = list(variables)
        dropped = []
        if drop_constant:
            keep = []
            for name in names:
                col = table[name]
                if np.ptp(col) == 0:
                    dropped.append(name)
                else:
                    keep.append(name)
            names = keep
        x = np.column_stack([table[v] for v in names]) if names else np.zeros((len(table), 0))
        return cls(x, table["lst"], names), dropped


@dataclass
class Coefficient:
    name: str
    estimate: float
    std_error: float
    statistic: float
    p_value: float
    significance: Optional[float]


@dataclass
class ModelFit:
    kind: str
    n: int
    k: int
    coefficients: List[Coefficient]
    spatial_coefficient: Optional[Coefficient]
    sigma2: float
    log_likelihood: float
    aic: float
    r2: float
    adjusted_r2: float
    residuals: np.ndarray
    fitted: np.ndarray
    converged: bool = True
    diagnostics: Dict[str, dict] = field(default_factory=dict)

    @property
    def param_count(self) -> int:
        return param_count(self.kind, self.k)

    @property
    def beta(self) -> np.ndarray:
        return np.array([c.estimate for c in self.coefficients])

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.coefficients]

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "n": self.n,
            "k": self.k,
            "param_count": self.param_count,
            "coefficients": [asdict(c) for c in self.coefficients],
            "spatial_coefficient": asdict(self.spatial_coefficient) if self.spatial_coefficient else None,
            "sigma2": self.sigma2,
            "log_likelihood": self.log_likelihood,
            "aic": self.aic,
            "r2": self.r2,
            "adjusted_r2": self.adjusted_r2,
            "converged": self.converged,
            "diagnostics": self.diagnostics,
            "residuals": self.residuals.tolist(),
            "fitted": self.fitted.tolist(),
        }
        return _json_safe(d)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFit":
        sc = d.get("spatial_coefficient")
        return cls(
            kind=d["kind"],
            n=int(d["n"]),
            k=int(d["k"]),
            coefficients=[Coefficient(**_json_restore(c)) for c in d["coefficients"]],
            spatial_coefficient=Coefficient(**_json_restore(sc)) if sc else None,
            sigma2=d["sigma2"],
            log_likelihood=d["log_likelihood"],
            aic=d["aic"],
            r2=d["r2"],
            adjusted_r2=d["adjusted_r2"],
            residuals=np.array(d["residuals"], float),
            fitted=np.array(d["fitted"], float),
            converged=d.get("converged", True),
            diagnostics=d.get("diagnostics", {}),
        )


def _json_safe(obj):
    # JSON has no NaN/inf; encode them as strings so output stays standard
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _json_restore(d):
    return {k: (float(v) if v in ("NaN", "Infinity", "-Infinity") else v) for k, v in d.items()}


def param_count(kind: str, k: int) -> int:
    """Intercept plus ``k`` slopes, plus the spatial coefficient; sigma2 excluded."""
    return k + 1 if kind == "OLS" else k + 2


def aic(fit: ModelFit) -> float:
    return 2.0 * fit.param_count - 2.0 * fit.log_likelihood


def _adjusted(r2, n, m):
    return 1.0 - (1.0 - r2) * (n - 1) / (n - m)


def _pseudo_r2(y, fitted) -> float:
    if np.ptp(y) == 0 or np.ptp(fitted) == 0:
        return 0.0
    r = np.corrcoef(y, fitted)[0, 1]
    return float(min(max(r * r, 0.0), 1.0))


def _coef(name, est, se, dist_df=None):
    if se > 0 and math.isfinite(se):
        stat = est / se
    elif se == 0:
        stat = math.inf if est != 0 else 0.0
    else:
        stat = math.nan
    if math.isnan(stat):
        p = math.nan
    elif dist_df is None:
        p = float(2.0 * stats.norm.sf(abs(stat)))
    else:
        p = float(2.0 * stats.t.sf(abs(stat), dist_df))
    return Coefficient(name, float(est), float(se), float(stat), p, significance_level(p))


def fit_ols(design: DesignMatrix) -> ModelFit:
    design.check_rank()
    X, y = design.X, design.y
    n, p = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ beta
    sse = float(e @ e)
    sigma2 = sse / n
    lnl = -0.5 * n * (LOG_2PI + math.log(sigma2)) - 0.5 * n if sigma2 > 0 else math.inf
    df = n - p
    s2 = sse / df
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(xtx_inv) * s2, 0.0))
    coefs = [_coef(nm, b, s, df) for nm, b, s in zip(design.all_names, beta, se)]
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else 0.0
    fit = ModelFit(
        kind="OLS",
        n=n,
        k=design.k,
        coefficients=coefs,
        spatial_coefficient=None,
        sigma2=sigma2,
        log_likelihood=lnl,
        aic=math.nan,
        r2=r2,
        adjusted_r2=_adjusted(r2, n, p),
        residuals=e,
        fitted=X @ beta,
    )
    fit.aic = aic(fit)
    return fit


def search_interval(w: SpatialWeights):
    lo_eig, hi_eig = w.eigenvalues[0], w.eigenvalues[-1]
    lo = 1.0 / lo_eig if lo_eig < 0 else -1.0
    hi = 1.0 / hi_eig if hi_eig > 0 else 1.0
    return lo, hi


def _check_aligned(design: DesignMatrix, w: SpatialWeights):
    if design.n != w.n:
        raise ValueError(f"design has {design.n} rows but weights cover {w.n} observations")


def _logdet(eigs, coef):
    t = 1.0 - coef * eigs
    if np.any(t <= 0):
        return -math.inf
    return float(np.sum(np.log(t)))


def sar_concentrated(design: DesignMatrix, w: SpatialWeights):
    """Return ``lnL(rho)`` with beta and sigma2 concentrated out."""
    X, y = design.X, design.y
    n = design.n
    wy = w.matrix @ y
    coef_y, *_ = np.linalg.lstsq(X, y, rcond=None)
    coef_wy, *_ = np.linalg.lstsq(X, wy, rcond=None)
    e0 = y - X @ coef_y
    e1 = wy - X @ coef_wy
    a, b, c = e0 @ e0, e0 @ e1, e1 @ e1
    eigs = w.eigenvalues

    def lnl(rho):
        sse = a - 2.0 * rho * b + rho * rho * c
        if sse <= 0:
            return math.inf
        return -0.5 * n * (LOG_2PI + math.log(sse / n)) - 0.5 * n + _logdet(eigs, rho)

    return lnl


def sem_concentrated(design: DesignMatrix, w: SpatialWeights):
    """Return ``lnL(lambda)`` with beta and sigma2 concentrated out."""
    X, y = design.X, design.y
    n = design.n
    wx = w.matrix @ X
    wy = w.matrix @ y
    eigs = w.eigenvalues

    def lnl(lam):
        ax = X - lam * wx
        ay = y - lam * wy
        beta, *_ = np.linalg.lstsq(ax, ay, rcond=None)
        r = ay - ax @ beta
        sse = float(r @ r)
        if sse <= 0:
            return math.inf
        return -0.5 * n * (LOG_2PI + math.log(sse / n)) - 0.5 * n + _logdet(eigs, lam)

    return lnl


def full_loglik(kind: str, design: DesignMatrix, w: SpatialWeights, beta, coef, sigma2) -> float:
    """Unconcentrated Gaussian log-likelihood of a SAR or SEM model."""
    if sigma2 <= 0:
        return -math.inf
    X, y = design.X, design.y
    if kind == "SAR":
        e = y - coef * (w.matrix @ y) - X @ beta
    elif kind == "SEM":
        u = y - X @ beta
        e = u - coef * (w.matrix @ u)
    else:
        raise ValueError(kind)
    n = design.n
    return -0.5 * n * (LOG_2PI + math.log(sigma2)) - float(e @ e) / (2.0 * sigma2) + _logdet(w.eigenvalues, coef)


def numerical_hessian(f, theta, steps) -> np.ndarray:
    """Central-difference Hessian of scalar ``f`` at ``theta``."""
    theta = np.asarray(theta, float)
    p = theta.size
    h = np.asarray(steps, float)
    f0 = f(theta)
    H = np.empty((p, p))
    fp = np.empty(p)
    fm = np.empty(p)
    for i in range(p):
        t = theta.copy()
        t[i] += h[i]
        fp[i] = f(t)
        t[i] -= 2 * h[i]
        fm[i] = f(t)
        H[i, i] = (fp[i] - 2.0 * f0 + fm[i]) / (h[i] * h[i])
    for i in range(p):
        for j in range(i + 1, p):
            vals = []
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                t = theta.copy()
                t[i] += si * h[i]
                t[j] += sj * h[j]
                vals.append(f(t))
            H[i, j] = H[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h[i] * h[j])
    return H


def _standard_errors(kind, design, w, beta, coef, sigma2):
    theta = np.concatenate([beta, [coef, sigma2]])
    steps = HESSIAN_STEP * np.maximum(np.abs(theta), 1.0)
    steps[-1] = HESSIAN_STEP * sigma2
    p = beta.size

    def f(t):
        return full_loglik(kind, design, w, t[:p], t[p], t[p + 1])

    H = numerical_hessian(f, theta, steps)
    try:
        cov = np.linalg.inv(-H)
        var = np.diag(cov)
    except np.linalg.LinAlgError:
        var = np.full(theta.size, np.nan)
    return np.where(var >= 0, np.sqrt(np.abs(var)), np.nan)


def _fit_spatial(kind: str, design: DesignMatrix, w: SpatialWeights) -> ModelFit:
    _check_aligned(design, w)
    design.check_rank()
    lnl_fn = sar_concentrated(design, w) if kind == "SAR" else sem_concentrated(design, w)
    lo, hi = search_interval(w)
    best = maximize_on_interval(lnl_fn, lo, hi, SEARCH_TOL)
    if best.at_boundary:
        raise ConvergenceError(f"{kind} likelihood maximum at boundary of feasible interval ({lo}, {hi})")
    coef = best.x
    X, y = design.X, design.y
    n = design.n
    if kind == "SAR":
        target = y - coef * (w.matrix @ y)
        beta, *_ = np.linalg.lstsq(X, target, rcond=None)
        resid = target - X @ beta
    else:
        ax = X - coef * (w.matrix @ X)
        ay = y - coef * (w.matrix @ y)
        beta, *_ = np.linalg.lstsq(ax, ay, rcond=None)
        resid = ay - ax @ beta
    sigma2 = float(resid @ resid) / n
    lnl = -0.5 * n * (LOG_2PI + math.log(sigma2)) - 0.5 * n + _logdet(w.eigenvalues, coef)
    se = _standard_errors(kind, design, w, beta, coef, sigma2)
    coefs = [_coef(nm, b, s) for nm, b, s in zip(design.all_names, beta, se[:-2])]
    name = "rho" if kind == "SAR" else "lambda"
    fitted = y - resid
    r2 = _pseudo_r2(y, fitted)
    fit = ModelFit(
        kind=kind,
        n=n,
        k=design.k,
        coefficients=coefs,
        spatial_coefficient=_coef(name, coef, se[-2]),
        sigma2=sigma2,
        log_likelihood=lnl,
        aic=math.nan,
        r2=r2,
        adjusted_r2=_adjusted(r2, n, param_count(kind, design.k)),
        residuals=resid,
        fitted=fitted,
    )
    fit.aic = aic(fit)
    return fit


def fit_sar(design: DesignMatrix, w: SpatialWeights) -> ModelFit:
    """Spatial lag model by maximum likelihood."""
    return _fit_spatial("SAR", design, w)


def fit_sem(design: DesignMatrix, w: SpatialWeights) -> ModelFit:
    """Spatial error model by maximum likelihood."""
    return _fit_spatial("SEM", design, w)


def fit_model(kind: str, design: DesignMatrix, w: Optional[SpatialWeights] = None) -> ModelFit:
    if kind == "OLS":
        return fit_ols(design)
    if kind == "SAR":
        return fit_sar(design, w)
    if kind == "SEM":
        return fit_sem(design, w)
    raise ValueError(f"unknown model kind {kind!r}")
