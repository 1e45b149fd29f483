"""Spatial dependence diagnostics and cross-model selection.

Moran's I uses the normality-assumption variance. The LM tests are the
usual Lagrange multiplier score tests on OLS residuals, each referred to
a chi-squared distribution with one degree of freedom.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import DomainError
from .models import DesignMatrix, ModelFit, significance_level
from .weights import SpatialWeights


@dataclass(frozen=True)
class DiagnosticResult:
    name: str
    statistic: float
    p_value: float
    significant_at: Optional[float]
    z_score: Optional[float] = None
    chi2_df: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticResult":
        return cls(**d)


def _trace_terms(w: SpatialWeights) -> float:
    """``tr(W'W + WW)`` without densifying."""
    m = w.matrix
    t_wtw = float(m.multiply(m).sum())
    t_ww = float(m.multiply(m.T).sum())
    return t_wtw + t_ww


def morans_i(residuals, w: SpatialWeights) -> DiagnosticResult:
    """Global Moran's I with a two-sided normal p-value.

    Residuals are centered before use; regression residuals with an
    intercept already have zero mean.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    n = e.size
    if n != w.n:
        raise ValueError(f"residual length {n} does not match {w.n} observations")
    z = e - e.mean()
    denom = float(z @ z)
    if not denom > 0:
        raise DomainError("Moran's I is undefined for zero-variance residuals")
    m = w.matrix
    s0 = float(m.sum())
    stat = (n / s0) * float(z @ (m @ z)) / denom

    sym = m + m.T
    s1 = 0.5 * float(sym.multiply(sym).sum())
    rs = np.asarray(m.sum(axis=1)).ravel()
    cs = np.asarray(m.sum(axis=0)).ravel()
    s2 = float(np.sum((rs + cs) ** 2))
    expected = -1.0 / (n - 1)
    var = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / ((n * n - 1) * s0 * s0) - expected**2
    if var > 0:
        zscore = (stat - expected) / math.sqrt(var)
        p = float(2.0 * stats.norm.sf(abs(zscore)))
    else:
        # degenerate layout (e.g. n = 2): I is fixed at its expectation
        zscore, p = 0.0, 1.0
    return DiagnosticResult("morans_i", stat, p, significance_level(p), z_score=zscore)


def _chi2_result(name, stat):
    stat = max(float(stat), 0.0)
    p = float(stats.chi2.sf(stat, 1))
    return DiagnosticResult(name, stat, p, significance_level(p), chi2_df=1)


def _ols_parts(ols_fit: ModelFit, design: DesignMatrix, w: SpatialWeights):
    if ols_fit.kind != "OLS":
        raise ValueError("LM tests need an OLS fit")
    if design.n != w.n or ols_fit.n != w.n:
        raise ValueError("fit, design and weights must share the same observations")
    e = ols_fit.residuals
    s2 = float(e @ e) / design.n
    if not s2 > 0:
        raise DomainError("LM test undefined for zero-variance residuals")
    return e, s2


def lm_error_test(ols_fit: ModelFit, design: DesignMatrix, w: SpatialWeights) -> DiagnosticResult:
    e, s2 = _ols_parts(ols_fit, design, w)
    num = float(e @ (w.matrix @ e)) / s2
    return _chi2_result("lm_error", num * num / _trace_terms(w))


def lm_lag_test(ols_fit: ModelFit, design: DesignMatrix, w: SpatialWeights) -> DiagnosticResult:
    e, s2 = _ols_parts(ols_fit, design, w)
    X = design.X
    num = float(e @ (w.matrix @ design.y)) / s2
    wxb = w.matrix @ (X @ ols_fit.beta)
    coef, *_ = np.linalg.lstsq(X, wxb, rcond=None)
    m_wxb = wxb - X @ coef
    d = float(wxb @ m_wxb) / s2 + _trace_terms(w)
    return _chi2_result("lm_lag", num * num / d)


def diagnose(fit: ModelFit, ols_fit: ModelFit, design: DesignMatrix, w: SpatialWeights) -> Dict[str, dict]:
    """Residual Moran's I for ``fit`` plus both LM tests from ``ols_fit``."""
    return {
        "morans_i": morans_i(fit.residuals, w).to_dict(),
        "lm_lag": lm_lag_test(ols_fit, design, w).to_dict(),
        "lm_error": lm_error_test(ols_fit, design, w).to_dict(),
    }


REPORT_COLUMNS = (
    "diameter",
    "model",
    "n",
    "adjusted_r2",
    "r2",
    "log_likelihood",
    "aic",
    "morans_i",
    "morans_i_p",
    "morans_i_sig",
    "lm_lag",
    "lm_error",
    "spatial_coefficient",
    "spatial_coefficient_sig",
)


@dataclass
class SelectionReport:
    rows: List[dict]
    chosen: Tuple[float, str]
    justification: Dict[str, object] = field(default_factory=dict)
    variables: List[str] = field(default_factory=list)

    def to_csv(self) -> str:
        cols = list(REPORT_COLUMNS) + [f"coef_{v}" for v in self.variables] + ["chosen"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.rows:
            out = []
            for c in cols[:-1]:
                v = row.get(c)
                out.append("" if v is None else (repr(float(v)) if isinstance(v, float) else v))
            out.append(int((row["diameter"], row["model"]) == self.chosen))
            writer.writerow(out)
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "chosen": {"diameter": self.chosen[0], "model": self.chosen[1]},
            "justification": self.justification,
            "variables": self.variables,
            "rows": self.rows,
        }
        return json.dumps(_nan_to_none(doc), indent=2) + "\n"

    def to_text(self) -> str:
        """Side-by-side table: one column per (diameter, model)."""
        heads = [f"{_fmt_d(r['diameter'])} {r['model']}" for r in self.rows]
        width = max([12] + [len(h) for h in heads]) + 2
        label_w = max([24] + [len(v) + 2 for v in self.variables])
        lines = ["".ljust(label_w) + "".join(h.rjust(width) for h in heads)]

        def line(label, values):
            lines.append(label.ljust(label_w) + "".join(v.rjust(width) for v in values))

        line("CONSTANT", [_coef_cell(r, "CONSTANT") for r in self.rows])
        for v in self.variables:
            line(v, [_coef_cell(r, v) for r in self.rows])
        line("spatial coefficient", [_num(r["spatial_coefficient"], r["spatial_coefficient_sig"]) for r in self.rows])
        lines.append("")
        line("n", [str(r["n"]) for r in self.rows])
        line("r2", [_num(r["r2"]) for r in self.rows])
        line("adjusted r2", [_num(r["adjusted_r2"]) for r in self.rows])
        line("log-likelihood", [_num(r["log_likelihood"]) for r in self.rows])
        line("AIC", [_num(r["aic"]) for r in self.rows])
        line("Moran's I (residuals)", [_num(r["morans_i"], r["morans_i_sig"]) for r in self.rows])
        line("LM lag", [_num(r["lm_lag"], r.get("lm_lag_sig")) for r in self.rows])
        line("LM error", [_num(r["lm_error"], r.get("lm_error_sig")) for r in self.rows])
        lines.append("")
        lines.append("significance: * 0.95, ** 0.99, *** 0.999")
        lines.append(f"chosen model: {_fmt_d(self.chosen[0])} {self.chosen[1]}")
        return "\n".join(lines) + "\n"


def _fmt_d(d):
    return f"{d:g}m"


def _stars(sig):
    return {0.95: "*", 0.99: "**", 0.999: "***"}.get(sig, "")


def _num(v, sig=None):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return f"{v:.3g}{_stars(sig)}" if abs(v) >= 1e4 or (0 < abs(v) < 1e-2) else f"{v:.3f}{_stars(sig)}"


def _coef_cell(row, name):
    c = row["coefficients"].get(name)
    if c is None:
        return "-"
    return f"{c['estimate']:.2E}{_stars(c['significance'])}"


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _diag_value(diags, key, field_name="statistic"):
    d = diags.get(key)
    if d is None:
        return None
    if isinstance(d, DiagnosticResult):
        d = d.to_dict()
    return d.get(field_name)


def build_selection_report(fits: Sequence[Tuple[float, ModelFit, Optional[dict]]]) -> SelectionReport:
    """Tabulate fits and choose the best.

    ``fits`` holds ``(diameter, fit, diagnostics)`` where diagnostics maps
    ``morans_i``/``lm_lag``/``lm_error`` to results (``fit.diagnostics``
    is used when None). The winner has the highest adjusted r2; ties go to
    the lower AIC, then to the larger spatial coefficient magnitude.
    """
    if not fits:
        raise ValueError("no fits to report")
    rows = []
    variables: List[str] = []
    for diameter, fit, diags in fits:
        diags = fit.diagnostics if diags is None else diags
        sc = fit.spatial_coefficient
        coefs = {c.name: {"estimate": c.estimate, "p_value": c.p_value, "significance": c.significance} for c in fit.coefficients}
        for c in fit.coefficients[1:]:
            if c.name not in variables:
                variables.append(c.name)
        rows.append(
            {
                "diameter": float(diameter),
                "model": fit.kind,
                "n": fit.n,
                "adjusted_r2": fit.adjusted_r2,
                "r2": fit.r2,
                "log_likelihood": fit.log_likelihood,
                "aic": fit.aic,
                "morans_i": _diag_value(diags, "morans_i"),
                "morans_i_p": _diag_value(diags, "morans_i", "p_value"),
                "morans_i_sig": _diag_value(diags, "morans_i", "significant_at"),
                "lm_lag": _diag_value(diags, "lm_lag"),
                "lm_lag_sig": _diag_value(diags, "lm_lag", "significant_at"),
                "lm_error": _diag_value(diags, "lm_error"),
                "lm_error_sig": _diag_value(diags, "lm_error", "significant_at"),
                "spatial_coefficient": sc.estimate if sc else None,
                "spatial_coefficient_sig": sc.significance if sc else None,
                "coefficients": coefs,
            }
        )
        for name, c in coefs.items():
            rows[-1][f"coef_{name}"] = c["estimate"]

    def key(row):
        sc = row["spatial_coefficient"]
        return (-row["adjusted_r2"], row["aic"], -(abs(sc) if sc is not None else 0.0))

    best = min(rows, key=key)
    runner = sorted(rows, key=key)[1] if len(rows) > 1 else None
    justification = {
        "rule": "highest adjusted r2, then lowest AIC, then largest |spatial coefficient|",
        "adjusted_r2": best["adjusted_r2"],
        "aic": best["aic"],
        "log_likelihood": best["log_likelihood"],
        "spatial_coefficient": best["spatial_coefficient"],
    }
    if runner is not None:
        justification["runner_up"] = {
            "diameter": runner["diameter"],
            "model": runner["model"],
            "adjusted_r2": runner["adjusted_r2"],
            "aic": runner["aic"],
        }
    return SelectionReport(rows, (best["diameter"], best["model"]), justification, variables)
