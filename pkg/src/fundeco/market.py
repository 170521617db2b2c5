"""Demand functions, market clearing and order execution.

The engine keeps funds as parallel arrays; the kernels below work on those
arrays. Each fund carries a demand ``mode``:

* VALUE  - signal log2(val/p) recomputed at every candidate price (VI, NT)
* FIXED  - bounded signal fixed for the day (TF, adaptive)
* HOLD   - target equals current holdings (TF warm-up)
* OFF    - inactive or zero-wealth, excluded
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .strategies import Fund, Style, tf_signal_from_history, value_asset

VALUE, FIXED, HOLD, OFF = 0, 1, 2, 3

LOG_BRACKET_LIMIT = math.log(1e10)


class NoBracket(RuntimeError):
    """Aggregate demand never crosses supply within the search range."""

    def __init__(self, day, p_prev, samples, side):
        self.day = day
        self.p_prev = p_prev
        self.samples = samples
        self.side = side
        where = "low" if side == 1 else "high"
        super().__init__(f"no clearing price on day {day} ({where} side unbounded); prev price {p_prev:.6g}; curve samples {samples}")


@dataclass
class MarketState:
    day: int = 0
    price: float = 1.0
    price_history: list[float] = field(default_factory=list)
    dividend: float = 0.003465
    dividend_growth: float = math.log(1.01) / 252
    supply: float = 10_000.0
    volume: float = 0.0
    admin_position: float = 0.0


def smooth_signal(phi: float, beta: float) -> float:
    if not beta > 0:
        raise ValueError("aggression must be positive")
    return math.tanh(beta * phi)


def target_position(phi_s: float, leverage: float, wealth: float, price: float) -> float:
    return phi_s * leverage * wealth / price


@njit(cache=True)
def aggregate_target(p, mode, val, fixed, beta, lam, cash, shares, loans):
    # sequential sum: a zero-wealth fund adds exactly 0.0 and leaves the total unchanged
    tot = 0.0
    for i in range(mode.shape[0]):
        m = mode[i]
        if m == OFF:
            continue
        if m == HOLD:
            tot += shares[i]
            continue
        w = cash[i] + p * shares[i] - loans[i]
        if m == VALUE:
            s = math.tanh(beta[i] * math.log2(val[i] / p))
        else:
            s = fixed[i]
        tot += s * lam[i] * w / p
    return tot


@njit(cache=True)
def clear_kernel(p_prev, qnet, q, tol, max_iter, mode, val, fixed, beta, lam, cash, shares, loans):
    """Root of aggregate_target(p) - qnet on log price.

    Returns (price, evaluations, status, residual); status 0 ok, 1 no root on
    the low side, 2 no root on the high side.
    """
    x0 = math.log(p_prev)
    f0 = aggregate_target(p_prev, mode, val, fixed, beta, lam, cash, shares, loans) - qnet
    n = 1
    if abs(f0) <= tol * q:
        return p_prev, n, 0, f0
    step = 0.01
    if f0 > 0:
        lo, flo = x0, f0
        while True:
            hi = x0 + step
            fhi = aggregate_target(math.exp(hi), mode, val, fixed, beta, lam, cash, shares, loans) - qnet
            n += 1
            if fhi <= 0:
                break
            lo, flo = hi, fhi
            if step >= LOG_BRACKET_LIMIT:
                return math.exp(hi), n, 2, fhi
            step = min(2 * step, LOG_BRACKET_LIMIT)
    else:
        hi, fhi = x0, f0
        while True:
            lo = x0 - step
            flo = aggregate_target(math.exp(lo), mode, val, fixed, beta, lam, cash, shares, loans) - qnet
            n += 1
            if flo >= 0:
                break
            hi, fhi = lo, flo
            if step >= LOG_BRACKET_LIMIT:
                return math.exp(lo), n, 1, flo
            step = min(2 * step, LOG_BRACKET_LIMIT)
    if flo == 0:
        return math.exp(lo), n, 0, flo
    if fhi == 0:
        return math.exp(hi), n, 0, fhi
    # Illinois false position on [lo, hi] with f(lo) > 0 > f(hi), bisection fallback
    side = 0
    width_check = hi - lo
    for it in range(max_iter):
        x = (lo * fhi - hi * flo) / (fhi - flo)
        if it % 4 == 3:
            if hi - lo > 0.25 * width_check:
                x = 0.5 * (lo + hi)
            width_check = hi - lo
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
            if not (lo < x < hi):
                break
        fx = aggregate_target(math.exp(x), mode, val, fixed, beta, lam, cash, shares, loans) - qnet
        n += 1
        if abs(fx) <= tol * q:
            return math.exp(x), n, 0, fx
        if fx > 0:
            lo, flo = x, fx
            if side == 1:
                fhi *= 0.5
            side = 1
        else:
            hi, fhi = x, fx
            if side == -1:
                flo *= 0.5
            side = -1
    # bracket collapsed to adjacent floats: return the better endpoint
    plo = math.exp(lo)
    phi_ = math.exp(hi)
    rlo = aggregate_target(plo, mode, val, fixed, beta, lam, cash, shares, loans) - qnet
    rhi = aggregate_target(phi_, mode, val, fixed, beta, lam, cash, shares, loans) - qnet
    n += 2
    if abs(rlo) <= abs(rhi):
        return plo, n, 0, rlo
    return phi_, n, 0, rhi


@njit(cache=True)
def execute_kernel(p, mode, val, fixed, beta, lam, cash, shares, loans, realized):
    """Move each trading fund to its target at p. Returns gross fund turnover.

    ``realized`` receives each fund's bounded signal at p (nan for HOLD/OFF).
    """
    gross = 0.0
    for i in range(mode.shape[0]):
        m = mode[i]
        if m == OFF or m == HOLD:
            realized[i] = np.nan
            continue
        w = cash[i] + p * shares[i] - loans[i]
        if m == VALUE:
            s = math.tanh(beta[i] * math.log2(val[i] / p))
        else:
            s = fixed[i]
        realized[i] = s
        d = s * lam[i] * w / p - shares[i]
        shares[i] = shares[i] + d
        cash[i] = cash[i] - p * d
        gross += abs(d)
    return gross


def sample_curve(p_prev, qnet, arrays, points=9):
    grid = p_prev * np.logspace(-10, 10, points)
    return [(float(p), float(aggregate_target(p, *arrays) - qnet)) for p in grid]


def solve_clearing(p_prev, qnet, q, arrays, tol=1e-14, max_iter=200, day=0):
    """Clearing price for arrays (mode, val, fixed, beta, lam, cash, shares, loans)."""
    p, n, status, resid = clear_kernel(p_prev, qnet, q, tol, max_iter, *arrays)
    if status != 0:
        raise NoBracket(day, p_prev, sample_curve(p_prev, qnet, arrays), status)
    return p, n, resid


# ---- object-level API over Fund records -------------------------------------------


def fund_demand_inputs(fund: Fund, state: MarketState):
    """(mode, val, fixed) describing how ``fund`` forms demand on ``state``."""
    if not fund.active:
        return OFF, 1.0, 0.0
    if fund.style in (Style.VI, Style.NT):
        v = value_asset(state.dividend, state.dividend_growth, fund.discount_rate)
        if fund.style == Style.NT:
            v *= math.exp(fund.ou_log_level or 0.0)
        return VALUE, v, 0.0
    if fund.style == Style.TF:
        hist = np.asarray(state.price_history, dtype=float)
        sig = tf_signal_from_history(hist, len(hist), fund.horizon)
        if sig is None:
            return HOLD, 1.0, 0.0
        return FIXED, 1.0, math.tanh(fund.aggression * sig)
    return FIXED, 1.0, float(getattr(fund, "fixed_signal", 0.0) or 0.0)


def _arrays(funds, state):
    n = len(funds)
    mode = np.empty(n, np.int64)
    val = np.empty(n)
    fixed = np.empty(n)
    for i, f in enumerate(funds):
        mode[i], val[i], fixed[i] = fund_demand_inputs(f, state)
    beta = np.array([f.aggression for f in funds], float)
    lam = np.array([f.leverage for f in funds], float)
    cash = np.array([f.cash for f in funds], float)
    shares = np.array([f.shares for f in funds], float)
    loans = np.array([f.loans for f in funds], float)
    return mode, val, fixed, beta, lam, cash, shares, loans


def excess_demand(fund: Fund, price: float, state: MarketState) -> float:
    if not price > 0:
        raise ValueError("price must be positive")
    arrays = _arrays([fund], state)
    return float(aggregate_target(price, *arrays)) - (fund.shares if fund.active else 0.0)


def clear_market(funds: list[Fund], state: MarketState, admin_sell: float = 0.0, tol: float = 1e-14) -> float:
    """Price at which aggregate target holdings absorb supply net of admin inventory."""
    remaining = state.admin_position - admin_sell
    arrays = _arrays(funds, state)
    p, _, _ = solve_clearing(state.price, state.supply - remaining, state.supply, arrays, tol=tol, day=state.day)
    return p


def execute_orders(funds: list[Fund], price: float, state: MarketState, admin_sell: float = 0.0) -> float:
    """Trade every fund to its target at ``price``; returns volume (turnover counted once)."""
    arrays = _arrays(funds, state)
    realized = np.empty(len(funds))
    gross = execute_kernel(price, *arrays, realized)
    cash, shares = arrays[5], arrays[6]
    for i, f in enumerate(funds):
        f.cash = float(cash[i])
        f.shares = float(shares[i])
    return 0.5 * (gross + abs(admin_sell))
