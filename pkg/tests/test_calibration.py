import numpy as np
import pytest

from fundeco.calibration import (STANDARD_LAGS, PanelError, RankDeficient, add_constant, build_flow_regression,
                                 flow_adjusted_return, net_flow, ols_fit, read_panel, synthetic_panel)


def test_net_flow():
    assert net_flow(5.0, 5.0, 100.0) == 0.0
    assert net_flow(10.0, 0.0, 100.0) == pytest.approx(0.10)
    assert net_flow(0.0, 5.0, 200.0) == pytest.approx(-0.025)
    with pytest.raises(ValueError):
        net_flow(1.0, 0.0, 0.0)


def test_flow_adjusted_return_worked_case():
    # ten percent TNA growth with five percent net inflows is a five percent return
    assert flow_adjusted_return(110.0, 100.0, 0.05) == pytest.approx(0.05, abs=1e-15)
    assert flow_adjusted_return(100.0, 100.0, 0.0) == 0.0
    assert flow_adjusted_return(90.0, 100.0, -0.05) == pytest.approx(-0.05, abs=1e-15)


def test_ols_perfect_fit():
    x = np.array([1.0, 2.0, 3.0])
    r = ols_fit(add_constant(x), 2 * x, ["const", "x"])
    assert r.coef == pytest.approx([0.0, 2.0], abs=1e-12)
    assert r.r2 == pytest.approx(1.0, abs=1e-12)


def test_ols_noisy_slope():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(10_000)
    r = ols_fit(add_constant(x), x + rng.normal(0, 0.5, x.size))
    assert abs(r.coef[1] - 1.0) < 3 * r.std_err[1]
    assert 0 <= r.r2 <= 1


def test_ols_matches_scipy_linregress():
    from scipy import stats
    rng = np.random.default_rng(1)
    x = rng.standard_normal(200)
    y = 0.3 + 1.7 * x + rng.standard_normal(200)
    ref = stats.linregress(x, y)
    r = ols_fit(add_constant(x), y)
    assert r.coef[1] == pytest.approx(ref.slope, rel=1e-12)
    assert r.std_err[1] == pytest.approx(ref.stderr, rel=1e-10)
    assert r.p[1] == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-300)


def test_ols_rank_deficiency_names_columns():
    x = np.arange(10.0)
    with pytest.raises(RankDeficient) as e:
        ols_fit(np.column_stack([np.ones(10), x, 2 * x]), x, ["const", "x", "x2"])
    assert "x2" in str(e.value)


def test_noiseless_recovery_and_orthogonality():
    rng = np.random.default_rng(2)
    X = add_constant(rng.standard_normal((500, 3)))
    beta = np.array([-0.02, 0.5, -1.25, 3.0])
    r = ols_fit(X, X @ beta)
    assert np.max(np.abs(r.coef / beta - 1)) <= 1e-10
    assert r.r2 == pytest.approx(1.0, abs=1e-10)
    y = X @ beta + rng.standard_normal(500)
    r = ols_fit(X, y)
    assert np.all(np.abs(X.T @ r.resid) / 500 <= 1e-10)


def test_synthetic_panel_round_trip():
    panel = synthetic_panel(n_funds=20, n_periods=160, intercept=-0.02, coefs=[0.005], lags=(120,))
    X, y, names, info = build_flow_regression(panel, (120,), min_tna=0, min_age_months=0)
    r = ols_fit(X, y, names)
    assert r.coef == pytest.approx([-0.02, 0.005], rel=1e-10)
    assert r.r2 == pytest.approx(1.0, abs=1e-10)
    assert info["rows_used"] + info["rows_incomplete"] + info["rows_screened"] + info["rows_rejected"] == info["rows_total"]


def test_full_lag_set_round_trip():
    coefs = [0.01, 0.002, 0.003, -0.001, 0.004, 0.0005, 0.001, 0.005]
    panel = synthetic_panel(n_funds=25, n_periods=150, coefs=coefs, lags=STANDARD_LAGS)
    X, y, names, _ = build_flow_regression(panel, STANDARD_LAGS, min_tna=0, min_age_months=0)
    r = ols_fit(X, y, names)
    assert np.max(np.abs(r.coef[1:] / np.array(coefs) - 1)) <= 1e-8
    assert names[1] == "exc_return1"


def test_single_fund_intercept_is_mean_flow():
    panel = synthetic_panel(n_funds=1, n_periods=40, intercept=-0.01, lags=(6,), noise=0.002, seed=3)
    X, y, names, _ = build_flow_regression(panel, (6,), min_tna=0, min_age_months=0)
    assert np.all(np.abs(X[:, 1]) < 1e-15)
    with pytest.raises(RankDeficient):
        ols_fit(X, y, names)
    r = ols_fit(X[:, :1], y, names[:1])
    assert r.coef[0] == pytest.approx(y.mean(), rel=1e-12)


def test_lag_longer_than_panel_is_empty():
    panel = synthetic_panel(n_funds=3, n_periods=20, lags=(6,))
    with pytest.raises(PanelError):
        build_flow_regression(panel, (120,), min_tna=0, min_age_months=0)


def test_screening_counts():
    panel = synthetic_panel(n_funds=10, n_periods=50, lags=(6,))
    _, _, _, info = build_flow_regression(panel, (6,), min_tna=0, min_age_months=80)
    assert info["rows_screened"] == 10 * 20


def test_read_panel_missing_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("fund_id,period,tna\n1,1,10\n")
    with pytest.raises(PanelError) as e:
        read_panel(p)
    assert "inflows" in str(e.value)
