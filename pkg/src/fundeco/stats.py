"""Stylized-facts statistics of simulated price series."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MONTH = 21
YEAR = 252


def log_returns(prices, horizon: int = 1) -> np.ndarray:
    """Non-overlapping ``horizon``-day log differences."""
    p = np.asarray(prices, dtype=float)
    if np.any(~(p > 0)):
        raise ValueError("prices must be positive")
    if horizon < 1 or p.shape[0] <= horizon:
        raise ValueError("need more prices than the horizon")
    return np.diff(np.log(p[::horizon]))


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag (biased estimator, lag 0 is 1)."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    if n <= max_lag + 1:
        raise ValueError("series too short for the requested lags")
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise ValueError("zero variance: autocorrelation undefined")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(np.dot(x[:-k], x[k:])) / denom
    return out


def acf_band(n: int) -> float:
    """Half-width of the 95% band for white noise."""
    return 1.96 / math.sqrt(n)


def excess_kurtosis(series) -> float:
    x = np.asarray(series, dtype=float)
    if x.shape[0] < 4:
        raise ValueError("need at least four observations")
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        raise ValueError("zero variance: kurtosis undefined")
    m4 = float(np.mean(d ** 4))
    return m4 / (m2 * m2) - 3.0


def rolling_volatility(returns, window: int) -> np.ndarray:
    """Trailing sample standard deviation; entry i covers returns[i : i+window]."""
    x = np.asarray(returns, dtype=float)
    n = x.shape[0]
    if window < 2 or window > n:
        raise ValueError("window must be in [2, len(returns)]")
    d = x - x.mean()
    c1 = np.concatenate([[0.0], np.cumsum(d)])
    c2 = np.concatenate([[0.0], np.cumsum(d * d)])
    s1 = c1[window:] - c1[:-window]
    s2 = c2[window:] - c2[:-window]
    var = (s2 - s1 * s1 / window) / (window - 1)
    return np.sqrt(np.maximum(var, 0.0))


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    return float(np.dot(a, b)) / den if den > 0 else float("nan")


def leverage_correlation(returns, window: int = MONTH) -> float:
    """corr(r_t, volatility of the following ``window`` returns)."""
    r = np.asarray(returns, dtype=float)
    vol = rolling_volatility(r, window)  # vol[i] covers r[i : i+window]
    return pearson(r[:-window], vol[1:])


def volume_volatility_correlation(volume, returns, window: int = MONTH) -> float:
    """corr(volume_t, trailing volatility ending at t)."""
    v = np.asarray(volume, dtype=float)
    vol = rolling_volatility(returns, window)
    return pearson(v[window - 1:], vol)


def drawdown_recovery(prices) -> dict:
    """Mean lengths (days) of falling and rising runs in the price path."""
    r = np.diff(np.log(np.asarray(prices, dtype=float)))
    s = np.sign(r)
    runs = {1.0: [], -1.0: []}
    cur, length = 0.0, 0
    for v in s:
        if v == cur:
            length += 1
        else:
            if cur != 0.0:
                runs[cur].append(length)
            cur, length = v, 1
    if cur != 0.0:
        runs[cur].append(length)
    up = float(np.mean(runs[1.0])) if runs[1.0] else float("nan")
    down = float(np.mean(runs[-1.0])) if runs[-1.0] else float("nan")
    big = np.percentile(r, [1, 99]) if r.size else [float("nan")] * 2
    return {"mean_rise_run": up, "mean_fall_run": down, "p01_return": float(big[0]), "p99_return": float(big[1])}


@dataclass
class Check:
    statistic: object
    threshold: object
    passed: bool | None
    note: str = ""

    def to_dict(self):
        d = {"statistic": self.statistic, "threshold": self.threshold, "pass": self.passed}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class FactsReport:
    checks: dict = field(default_factory=dict)

    def to_dict(self):
        return {k: v.to_dict() for k, v in self.checks.items()}

    def failed(self):
        return [k for k, v in self.checks.items() if v.passed is False]


CHECK_NAMES = ("no_autocorrelation", "heavy_tails", "gain_loss_asymmetry", "aggregational_gaussianity",
               "intermittency", "volatility_clustering", "leverage_effect", "volume_volatility", "short_ratio")


def facts_report(prices, volume, short_interest, initial_price: float | None = None) -> FactsReport:
    """All stylized-fact checks for one run. ``prices`` are the daily clearing prices.

    ``initial_price`` (day 0) is prepended so returns line up with the volume series.
    """
    p = np.asarray(prices, dtype=float)
    if initial_price is not None:
        p = np.concatenate([[initial_price], p])
    rep = FactsReport()
    c = rep.checks
    n = p.shape[0] - 1
    insufficient = lambda thr: Check(None, thr, None, "insufficient data")  # noqa: E731
    r = log_returns(p) if n >= 2 else np.empty(0)

    if n >= 5 * YEAR // 2:
        a = acf(r, 21)
        band = acf_band(r.shape[0])
        frac = float(np.mean(np.abs(a[6:22]) < band))
        c["no_autocorrelation"] = Check(frac, 0.9, frac >= 0.9)
    else:
        c["no_autocorrelation"] = insufficient(0.9)

    if n >= 100:
        kd = excess_kurtosis(r)
        c["heavy_tails"] = Check(kd, 0.0, kd > 0)
    else:
        c["heavy_tails"] = insufficient(0.0)

    if n >= 2:
        c["gain_loss_asymmetry"] = Check(drawdown_recovery(p), None, None, "descriptive")
    else:
        c["gain_loss_asymmetry"] = insufficient(None)

    if n >= 4 * YEAR + 1 and p.shape[0] // YEAR >= 5:
        kd = excess_kurtosis(r)
        km = excess_kurtosis(log_returns(p, MONTH))
        ky = excess_kurtosis(log_returns(p, YEAR))
        c["aggregational_gaussianity"] = Check([kd, km, ky], "daily > monthly > yearly", bool(kd > km > ky))
    else:
        c["aggregational_gaussianity"] = insufficient("daily > monthly > yearly")

    if n >= 5 * YEAR:
        rv = rolling_volatility(r, 5 * YEAR)
        c["intermittency"] = Check({"min": float(rv.min()), "max": float(rv.max()), "cv": float(rv.std() / rv.mean())},
                                   None, None, "descriptive; 5-year rolling volatility")
    else:
        c["intermittency"] = insufficient(None)

    if n >= 200:
        aa = acf(np.abs(r), 50)
        npos = int(np.sum(aa[1:] > 0))
        c["volatility_clustering"] = Check(npos, 45, npos >= 45)
        lev = leverage_correlation(r)
        c["leverage_effect"] = Check(lev, 0.0, bool(lev < 0))
        vv = volume_volatility_correlation(volume, r)
        c["volume_volatility"] = Check(vv, 0.1, bool(vv > 0.1))
    else:
        for k, thr in (("volatility_clustering", 45), ("leverage_effect", 0.0), ("volume_volatility", 0.1)):
            c[k] = insufficient(thr)

    si = np.asarray(short_interest, dtype=float)
    if si.size:
        m = float(si.mean())
        c["short_ratio"] = Check(m, [0.001, 0.05], bool(0.001 <= m <= 0.05))
    else:
        c["short_ratio"] = insufficient([0.001, 0.05])
    rep.checks = {k: c[k] for k in CHECK_NAMES}
    return rep


def run_facts(record) -> FactsReport:
    return facts_report(record.price, record.volume, record.short_interest, record.initial_price)
