import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy import stats

from uhihex.errors import ConvergenceError, RankDeficiencyError
from uhihex.features import INDEPENDENT_VARIABLES, FeatureTable
from uhihex.hexgrid import HexCellId
from uhihex.models import (
    DesignMatrix,
    ModelFit,
    aic,
    fit_model,
    fit_ols,
    fit_sar,
    fit_sem,
    full_loglik,
    param_count,
    sar_concentrated,
    significance_level,
)
from uhihex.simulate import hex_parallelogram, simulate_sar, simulate_sem
from uhihex.weights import SpatialWeights, build_weights


def design_for(w, rng, k=3):
    x = rng.normal(size=(w.n, k))
    return x, np.array([1.0, 2.0, -1.0, 0.5][: k + 1])


def test_exact_line():
    fit = fit_ols(DesignMatrix(np.array([1.0, 2.0, 3.0, 4.0]), np.array([2.0, 4.0, 6.0, 8.0]), ["x"]))
    assert fit.beta == pytest.approx([0.0, 2.0], abs=1e-12)
    assert fit.r2 == 1.0


def test_constant_response():
    rng = np.random.default_rng(0)
    fit = fit_ols(DesignMatrix(rng.normal(size=(20, 2)), np.full(20, 5.0), ["a", "b"]))
    assert fit.beta[0] == pytest.approx(5.0)
    assert fit.beta[1:] == pytest.approx([0, 0], abs=1e-12)
    assert fit.r2 == 0.0


def test_ols_matches_statsmodels_style_formulas(rng):
    n, k = 40, 3
    x = rng.normal(size=(n, k))
    y = 1 + x @ [0.5, -1, 2] + rng.normal(size=n)
    fit = fit_ols(DesignMatrix(x, y, ["a", "b", "c"]))
    X = np.column_stack([np.ones(n), x])
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    e = y - X @ beta
    s2 = e @ e / (n - k - 1)
    se = np.sqrt(np.diag(np.linalg.inv(X.T @ X)) * s2)
    np.testing.assert_allclose(fit.beta, beta, rtol=1e-10)
    np.testing.assert_allclose([c.std_error for c in fit.coefficients], se, rtol=1e-10)
    p = 2 * stats.t.sf(np.abs(beta / se), n - k - 1)
    np.testing.assert_allclose([c.p_value for c in fit.coefficients], p, rtol=1e-8)
    assert fit.sigma2 == pytest.approx(e @ e / n)
    assert fit.log_likelihood == pytest.approx(np.sum(stats.norm.logpdf(e, scale=math.sqrt(e @ e / n))))
    r2 = 1 - e @ e / np.sum((y - y.mean()) ** 2)
    assert fit.r2 == pytest.approx(r2)
    assert fit.adjusted_r2 == pytest.approx(1 - (1 - r2) * (n - 1) / (n - k - 1))
    assert fit.aic == pytest.approx(2 * (k + 1) - 2 * fit.log_likelihood)


def test_rank_deficiency_names_columns(rng):
    x = rng.normal(size=(30, 2))
    x = np.column_stack([x, x[:, 0] + 2 * x[:, 1]])
    with pytest.raises(RankDeficiencyError) as exc:
        fit_ols(DesignMatrix(x, rng.normal(size=30), ["a", "b", "combo"]))
    assert len(exc.value.columns) == 1
    assert exc.value.columns[0] in {"a", "b", "combo"}
    assert "condition" in str(exc.value)


def test_rank_deficiency_constant_column(rng):
    x = np.column_stack([rng.normal(size=30), np.full(30, 3.0)])
    with pytest.raises(RankDeficiencyError) as exc:
        fit_ols(DesignMatrix(x, rng.normal(size=30), ["a", "flat"]))
    assert set(exc.value.columns) <= {"CONSTANT", "flat"}


def test_design_validation():
    with pytest.raises(ValueError):
        DesignMatrix(np.zeros((4, 2)), np.zeros(4), ["a", "b"])  # n must exceed k + 2
    with pytest.raises(ValueError):
        DesignMatrix(np.zeros((10, 1)), np.zeros(9), ["a"])
    with pytest.raises(ValueError):
        DesignMatrix(np.full((10, 1), np.nan), np.zeros(10), ["a"])


def test_aic_conventions():
    assert param_count("OLS", 3) == 4 and param_count("SAR", 11) == 13 and param_count("SEM", 11) == 13
    fake = ModelFit("SEM", 100, 11, [], None, 1.0, -285.0, 0.0, 0.5, 0.5, np.zeros(1), np.zeros(1))
    assert aic(fake) == 596.0
    fake = ModelFit("OLS", 100, 0, [], None, 1.0, 0.0, 0.0, 0.5, 0.5, np.zeros(1), np.zeros(1))
    assert aic(fake) == 2.0


@pytest.mark.parametrize("p, level", [(0.0005, 0.999), (0.005, 0.99), (0.03, 0.95), (0.2, None), (math.nan, None)])
def test_significance_levels(p, level):
    assert significance_level(p) == level


def test_zero_weights_reduce_sar_to_ols(rng):
    n = 50
    cells = [HexCellId(i, 0) for i in range(n)]
    zero = sp.csr_matrix((n, n))
    w = SpatialWeights(cells, zero, zero, np.zeros(n))
    x = rng.normal(size=(n, 2))
    d = DesignMatrix(x, 3 + x @ [1, -2] + rng.normal(size=n), ["a", "b"])
    ols, sar = fit_ols(d), fit_sar(d, w)
    assert np.max(np.abs(sar.beta - ols.beta)) < 1e-9
    assert sar.log_likelihood == pytest.approx(ols.log_likelihood, rel=1e-12)


def test_sar_null_process(rng):
    w = build_weights(hex_parallelogram(20, 20))
    x, beta = design_for(w, rng)
    y = simulate_sar(w, np.column_stack([np.ones(w.n), x]), beta, 0.0, rng)
    d = DesignMatrix(x, y, ["a", "b", "c"])
    fit = fit_sar(d, w)
    assert abs(fit.spatial_coefficient.estimate) < 0.1
    assert fit.log_likelihood >= sar_concentrated(d, w)(0.0)


def test_sem_null_process_within_ols_confidence_region(w30, rng):
    w = w30
    x, beta = design_for(w, rng)
    y = simulate_sem(w, np.column_stack([np.ones(w.n), x]), beta, 0.0, rng)
    d = DesignMatrix(x, y, ["a", "b", "c"])
    ols, sem = fit_ols(d), fit_sem(d, w)
    assert abs(sem.spatial_coefficient.estimate) < 0.1
    # Wald distance of the SEM estimate from the OLS estimate, in the OLS metric
    X = d.X
    s2 = ols.residuals @ ols.residuals / (d.n - X.shape[1])
    diff = sem.beta - ols.beta
    f_stat = diff @ (X.T @ X) @ diff / (X.shape[1] * s2)
    assert f_stat < stats.f.ppf(0.95, X.shape[1], d.n - X.shape[1])


@pytest.mark.parametrize("kind, coef", [("SAR", 0.5), ("SEM", 0.7)])
def test_full_likelihood_consistency(w20, rng, kind, coef):
    x, beta = design_for(w20, rng)
    X = np.column_stack([np.ones(w20.n), x])
    sim = simulate_sar if kind == "SAR" else simulate_sem
    d = DesignMatrix(x, sim(w20, X, beta, coef, rng), ["a", "b", "c"])
    fit = fit_model(kind, d, w20)
    direct = full_loglik(kind, d, w20, fit.beta, fit.spatial_coefficient.estimate, fit.sigma2)
    assert abs(direct - fit.log_likelihood) < 1e-8
    assert 0 <= fit.r2 <= 1
    lo, hi = w20.feasible_interval
    assert lo < fit.spatial_coefficient.estimate < hi
    assert fit.aic == pytest.approx(2 * (d.k + 2) - 2 * fit.log_likelihood)
    assert len(fit.residuals) == d.n
    se = [c.std_error for c in fit.coefficients] + [fit.spatial_coefficient.std_error]
    assert all(np.isfinite(se)) and all(s > 0 for s in se)


def test_standard_errors_match_likelihood_curvature(w20, rng):
    # the rho standard error should agree with the curvature of the profile likelihood
    x, beta = design_for(w20, rng)
    X = np.column_stack([np.ones(w20.n), x])
    d = DesignMatrix(x, simulate_sar(w20, X, beta, 0.4, rng), ["a", "b", "c"])
    fit = fit_sar(d, w20)
    f = sar_concentrated(d, w20)
    r, h = fit.spatial_coefficient.estimate, 1e-4
    curv = (f(r + h) - 2 * f(r) + f(r - h)) / h**2
    assert fit.spatial_coefficient.std_error == pytest.approx(1 / math.sqrt(-curv), rel=0.05)


@pytest.mark.parametrize("kind", ["OLS", "SAR", "SEM"])
def test_nested_model_never_lowers_likelihood(w20, kind):
    rng = np.random.default_rng(7)
    x, beta = design_for(w20, rng, k=2)
    X = np.column_stack([np.ones(w20.n), x])
    y = simulate_sem(w20, X, beta, 0.5, rng)
    small = fit_model(kind, DesignMatrix(x, y, ["a", "b"]), w20)
    big = fit_model(kind, DesignMatrix(np.column_stack([x, rng.normal(size=w20.n)]), y, ["a", "b", "noise"]), w20)
    assert big.log_likelihood >= small.log_likelihood - 1e-9


def test_sem_likelihood_dominates_ols_on_sem_data(w20, rng):
    x, beta = design_for(w20, rng)
    X = np.column_stack([np.ones(w20.n), x])
    d = DesignMatrix(x, simulate_sem(w20, X, beta, 0.6, rng), ["a", "b", "c"])
    assert fit_sem(d, w20).log_likelihood >= fit_ols(d).log_likelihood


def test_boundary_maximum_reported():
    # y on the eigenvector of the most negative eigenvalue: the SAR likelihood
    # keeps rising toward the lower end of the feasible interval
    w = build_weights(hex_parallelogram(10, 10))
    vals, vecs = np.linalg.eig(w.dense())
    y = np.real(vecs[:, np.argmin(vals.real)])
    x = np.random.default_rng(1).normal(size=(w.n, 1))
    with pytest.raises(ConvergenceError, match="boundary"):
        fit_sar(DesignMatrix(x, y, ["a"]), w)


def test_fit_serialization_round_trip(w20, rng):
    x, beta = design_for(w20, rng)
    X = np.column_stack([np.ones(w20.n), x])
    fit = fit_sem(DesignMatrix(x, simulate_sem(w20, X, beta, 0.5, rng), ["a", "b", "c"]), w20)
    doc = json.loads(json.dumps(fit.to_dict()))
    back = ModelFit.from_dict(doc)
    assert back.beta.tolist() == fit.beta.tolist()
    assert back.residuals.tobytes() == fit.residuals.tobytes()
    assert back.spatial_coefficient == fit.spatial_coefficient
    assert back.to_dict() == fit.to_dict()


def test_from_table_drops_constant_columns():
    n = 12
    cells = [HexCellId(i, 0) for i in range(n)]
    rng = np.random.default_rng(5)
    cols = {name: np.zeros(n) for name in ("lst",) + INDEPENDENT_VARIABLES}
    cols["lst"] = rng.normal(size=n)
    cols["ndvi"] = rng.normal(size=n)
    table = FeatureTable(cells, cols)
    d, dropped = DesignMatrix.from_table(table, ["ndvi", "total_height"], drop_constant=True)
    assert d.names == ["ndvi"] and dropped == ["total_height"]


def test_unknown_kind():
    with pytest.raises(ValueError):
        fit_model("GWR", DesignMatrix(np.arange(10.0), np.arange(10.0) ** 2, ["a"]))
