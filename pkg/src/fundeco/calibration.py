"""Fund-flow panel transforms and ordinary least squares with classical inference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats as sps

PANEL_COLUMNS = ("fund_id", "period", "tna", "inflows", "outflows", "age_months", "style", "expense_ratio")
STANDARD_LAGS = (1, 6, 12, 24, 36, 48, 60, 120)


class PanelError(ValueError):
    pass


class RankDeficient(np.linalg.LinAlgError):
    def __init__(self, columns):
        self.columns = columns
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(columns)}")


def net_flow(inflows, outflows, tna):
    """(I - O) / TNA."""
    tna = np.asarray(tna, dtype=float)
    if np.any(~(tna > 0)):
        raise ValueError("TNA must be positive")
    out = (np.asarray(inflows, dtype=float) - np.asarray(outflows, dtype=float)) / tna
    return float(out) if out.ndim == 0 else out


def flow_adjusted_return(tna_t, tna_tk, f_t):
    """Growth of TNA over the window net of the flows received."""
    tna_tk = np.asarray(tna_tk, dtype=float)
    if np.any(~(tna_tk > 0)):
        raise ValueError("lagged TNA must be positive")
    out = (np.asarray(tna_t, dtype=float) - tna_tk) / tna_tk - np.asarray(f_t, dtype=float)
    return float(out) if out.ndim == 0 else out


@dataclass
class OlsResult:
    names: list
    coef: np.ndarray
    std_err: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    adj_r2: float
    nobs: int
    df_resid: int
    resid_skew: float
    resid_kurtosis: float
    resid: np.ndarray = field(repr=False)

    def to_dict(self):
        return {
            "names": list(self.names),
            "coef": self.coef.tolist(),
            "std_err": self.std_err.tolist(),
            "t": self.t.tolist(),
            "p": self.p.tolist(),
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "nobs": self.nobs,
            "df_resid": self.df_resid,
            "resid_skew": self.resid_skew,
            "resid_kurtosis": self.resid_kurtosis,
            "covariance": "nonrobust",
        }

    def table(self) -> str:
        w = max(12, max(len(n) for n in self.names) + 2)
        lines = [
            "OLS Regression Results".center(w + 52),
            f"{'No. Observations:':<22}{self.nobs:>10}    {'R-squared:':<14}{self.r2:>10.4f}",
            f"{'Df Residuals:':<22}{self.df_resid:>10}    {'Adj. R-squared:':<14}{self.adj_r2:>10.4f}",
            f"{'Covariance Type:':<22}{'nonrobust':>10}",
            "-" * (w + 52),
            f"{'':<{w}}{'coef':>12}{'std err':>12}{'t':>10}{'P>|t|':>10}",
            "-" * (w + 52),
        ]
        for n, c, s, t, p in zip(self.names, self.coef, self.std_err, self.t, self.p):
            lines.append(f"{n:<{w}}{c:>12.4f}{s:>12.4f}{t:>10.3f}{p:>10.3f}")
        lines.append("-" * (w + 52))
        lines.append(f"{'Skew:':<10}{self.resid_skew:>10.3f}    {'Kurtosis:':<10}{self.resid_kurtosis + 3.0:>10.3f}")
        return "\n".join(lines)


def _collinear_columns(X, names):
    bad = []
    keep = []
    for j in range(X.shape[1]):
        trial = keep + [j]
        if np.linalg.matrix_rank(X[:, trial]) < len(trial):
            bad.append(names[j])
        else:
            keep.append(j)
    return bad


def ols_fit(design, response, names=None) -> OlsResult:
    """OLS via the normal equations. ``design`` must already contain the intercept column."""
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("design must be (n, k) and response (n,)")
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if n <= k:
        raise ValueError("need more observations than regressors")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficient(_collinear_columns(X, names))
    xtx = X.T @ X
    beta = np.linalg.solve(xtx, X.T @ y)
    # one step of iterative refinement tightens the normal-equation solution
    beta = beta + np.linalg.solve(xtx, X.T @ (y - X @ beta))
    e = y - X @ beta
    df = n - k
    ssr = float(e @ e)
    sigma2 = ssr / df
    cov = sigma2 * np.linalg.inv(xtx)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.sign(beta) * np.inf)
    p = 2.0 * sps.t.sf(np.abs(t), df)
    has_const = bool(np.any(np.all(X == X[0], axis=0)))
    yc = y - y.mean() if has_const else y
    sst = float(yc @ yc)
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / df if has_const else 1.0 - (1.0 - r2) * n / df
    if ssr > 0:
        ec = e - e.mean()
        m2 = float(np.mean(ec * ec))
        skew = float(np.mean(ec ** 3)) / m2 ** 1.5
        kurt = float(np.mean(ec ** 4)) / (m2 * m2) - 3.0
    else:
        skew = kurt = 0.0
    return OlsResult(names, beta, se, t, p, r2, adj, n, df, skew, kurt, e)


def add_constant(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


# ---- panels -------------------------------------------------------------------------


def read_panel(path) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = [c for c in PANEL_COLUMNS if c not in df.columns]
    if missing:
        raise PanelError(f"panel is missing columns: {', '.join(missing)}")
    return df


def _wide(panel: pd.DataFrame):
    df = panel.sort_values(["fund_id", "period"])
    funds = np.array(sorted(df["fund_id"].unique()), dtype=object)
    periods = np.arange(int(df["period"].min()), int(df["period"].max()) + 1)
    fi = {f: i for i, f in enumerate(funds)}
    shape = (funds.shape[0], periods.shape[0])
    tna = np.full(shape, np.nan)
    flow = np.full(shape, np.nan)
    age = np.full(shape, np.nan)
    rows = np.full(shape, -1, np.int64)
    r = df["fund_id"].map(fi).to_numpy()
    c = df["period"].to_numpy().astype(np.int64) - periods[0]
    t = df["tna"].to_numpy(float)
    ok = t > 0
    tna[r[ok], c[ok]] = t[ok]
    flow[r[ok], c[ok]] = (df["inflows"].to_numpy(float)[ok] - df["outflows"].to_numpy(float)[ok]) / t[ok]
    age[r, c] = df["age_months"].to_numpy(float)
    rows[r, c] = np.arange(len(df))
    return funds, periods, tna, flow, age, rows, df.reset_index(drop=True)


def window_bounds(lags, windows="disjoint"):
    """(start, end) offsets before the response period for each lag regressor.

    ``disjoint``: lag k_j covers periods (t-1-k_j, t-1-k_{j-1}] with k_0 = 0, so
    the regressors partition the past. ``trailing``: every lag ends at t-1.
    """
    lags = sorted(int(k) for k in lags)
    if not lags or lags[0] < 1:
        raise ValueError("lags must be positive")
    out = []
    prev = 0
    for k in lags:
        end = 1 + (prev if windows == "disjoint" else 0)
        out.append((1 + k, end))
        prev = k
    return lags, out


def period_regressors(tna, flow, t, bounds):
    """Size-weighted excess flow-adjusted returns of every fund for response period ``t``."""
    n = tna.shape[0]
    X = np.full((n, len(bounds)), np.nan)
    for j, (s_off, e_off) in enumerate(bounds):
        a, b = t - s_off, t - e_off
        if a < 0:
            continue
        ret = tna[:, b] / tna[:, a] - 1.0 - np.sum(flow[:, a + 1:b + 1], axis=1)
        ok = np.isfinite(ret)
        if not np.any(ok):
            continue
        w = tna[ok, b]
        bench = float(np.sum(w * ret[ok]) / np.sum(w))
        X[ok, j] = ret[ok] - bench
    return X


def build_flow_regression(panel: pd.DataFrame, lags=(120,), min_tna=15e6, min_age_months=36, windows="disjoint",
                          controls=()):
    """Design (with intercept), response and row accounting for the flow-performance regression."""
    funds, periods, tna, flow, age, rows, df = _wide(panel)
    lags, bounds = window_bounds(lags, windows)
    total = int(len(df))
    used_r, used_c, Xs = [], [], []
    incomplete = screened = rejected = 0
    rejected = int(np.sum(~(df["tna"].to_numpy(float) > 0)))
    for c in range(periods.shape[0]):
        X = period_regressors(tna, flow, c, bounds)
        for r in range(funds.shape[0]):
            if rows[r, c] < 0 or not np.isfinite(tna[r, c]):
                continue
            if tna[r, c] < min_tna or age[r, c] < min_age_months:
                screened += 1
                continue
            if not np.all(np.isfinite(X[r])):
                incomplete += 1
                continue
            used_r.append(r)
            used_c.append(c)
            Xs.append(X[r])
    if not Xs:
        raise PanelError("no observations left after screening and lag windows")
    X = np.array(Xs)
    y = flow[np.array(used_r), np.array(used_c)]
    names = ["const"] + [f"exc_return{k}" for k in lags]
    cols = [np.ones(len(y)), *X.T]
    for ctl in controls:
        src = df.loc[rows[np.array(used_r), np.array(used_c)], ctl]
        if ctl == "style":
            for lev in sorted(src.astype(str).unique())[1:]:
                cols.append((src.astype(str) == lev).to_numpy(float))
                names.append(f"style[{lev}]")
        else:
            cols.append(src.to_numpy(float))
            names.append(ctl)
    info = {"rows_total": total, "rows_rejected": rejected, "rows_screened": screened,
            "rows_incomplete": incomplete, "rows_used": len(y)}
    return np.column_stack(cols), y, names, info


def synthetic_panel(n_funds=30, n_periods=200, intercept=-0.02, coefs=None, lags=(120,), noise=0.0, seed=0,
                    windows="disjoint", tna0=1e8, ret_sigma=0.04):
    """Panel whose flows follow a known linear rule in the same regressors the fit uses.

    Periods before the full lag window receive ``intercept`` (plus noise) only; those
    rows are dropped by ``build_flow_regression`` as incomplete.
    """
    lags_s, bounds = window_bounds(lags, windows)
    coefs = np.asarray(coefs if coefs is not None else [0.005] * len(lags_s), dtype=float)
    rng = np.random.default_rng(seed)
    tna = np.full((n_funds, n_periods), np.nan)
    flow = np.full((n_funds, n_periods), np.nan)
    tna_prev = np.full(n_funds, tna0) * np.exp(rng.normal(0, 0.3, n_funds))
    drift = rng.normal(0.005, 0.003, n_funds)
    for t in range(n_periods):
        X = period_regressors(tna, flow, t, bounds)
        f = np.full(n_funds, intercept)
        full = np.all(np.isfinite(X), axis=1)
        f[full] = intercept + X[full] @ coefs
        if noise > 0:
            f = f + rng.normal(0, noise, n_funds)
        ret = drift + rng.normal(0, ret_sigma, n_funds)
        tna[:, t] = tna_prev * (1.0 + ret + f)
        flow[:, t] = f
        tna_prev = tna[:, t]
    rows = []
    for i in range(n_funds):
        for t in range(n_periods):
            nf = flow[i, t] * tna[i, t]
            rows.append((i, t, tna[i, t], max(nf, 0.0), max(-nf, 0.0), 60 + t, "value" if i % 2 else "growth", 0.01))
    return pd.DataFrame(rows, columns=list(PANEL_COLUMNS))
