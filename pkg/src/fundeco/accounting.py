"""Wealth, daily accruals, investor flows and the insolvency machinery."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .strategies import Fund

TRADING_DAYS = 252
FLUSH_THRESHOLD = 1e-6


class TotalCollapse(RuntimeError):
    """No solvent fund is left to fill a vacancy."""


@dataclass(frozen=True)
class FlowModel:
    """Annual net-flow fraction as a linear function of 10-year excess return (in percent)."""

    intercept: float = -0.02461
    coef_10y: float = 5.3e-5
    period_days: int = 21

    def __post_init__(self):
        if self.period_days < 1:
            raise ValueError("flow application period must be at least one day")

    def annual_fraction(self, excess_pct):
        return self.intercept + self.coef_10y * np.asarray(excess_pct, dtype=float)


@dataclass
class InsolvencyLedger:
    admin_position: float = 0.0
    liquidation_rate: float = 0.05
    vacancy_count: int = 0


def wealth(fund: Fund, price: float) -> float:
    if not price > 0:
        raise ValueError("price must be positive")
    return fund.cash + price * fund.shares - fund.loans


def accrue_cash(cash, shares, delta: float, r_daily: float):
    """Interest on cash (borrowing pays the same rate) plus dividends on the post-trade position."""
    return cash * (1.0 + r_daily) + delta * shares


def accrue(fund: Fund, delta: float, r_daily: float) -> Fund:
    return replace(fund, cash=accrue_cash(fund.cash, fund.shares, delta, r_daily))


def excess_return(returns, weights) -> np.ndarray:
    """Return minus the size-weighted average return across funds."""
    r = np.asarray(returns, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")
    bench = 0.0
    tw = 0.0
    for ri, wi in zip(r, w):
        if wi > 0:
            bench += wi * ri
            tw += wi
    return r - bench / tw


def flow_amounts(wealth_now, excess_pct, model: FlowModel) -> np.ndarray:
    """Cash added to each fund at one application date (negative = redemption)."""
    w = np.asarray(wealth_now, dtype=float)
    f_a = model.annual_fraction(excess_pct)
    out = w * f_a * (model.period_days / TRADING_DAYS)
    return np.where(w > 0, out, 0.0)


def apply_flows(funds: list[Fund], model: FlowModel, returns, price: float):
    """Apply one round of flows given each fund's performance measure over the lookback.

    ``returns`` are per-fund returns over the flow lookback (10 years, or the
    annualized since-inception figure for younger funds). Returns the flows.
    """
    w = np.array([wealth(f, price) if f.active else 0.0 for f in funds])
    er = excess_return(returns, np.maximum(w, 0.0)) * 100.0
    flows = flow_amounts(w, er, model)
    for f, dc in zip(funds, flows):
        f.cash += float(dc)
    return flows


def check_solvency(funds: list[Fund], price: float, ledger: InsolvencyLedger) -> list[int]:
    """Deactivate funds with negative wealth; their shares pass to the administrator."""
    failed = []
    for i, f in enumerate(funds):
        if f.active and wealth(f, price) < 0:
            ledger.admin_position += f.shares
            f.shares = 0.0
            f.cash = 0.0
            f.loans = 0.0
            f.active = False
            ledger.vacancy_count += 1
            failed.append(i)
    return failed


def liquidation_order(admin_position: float, rate: float) -> float:
    """Shares the administrator sells today (negative when covering an inherited short)."""
    if abs(admin_position) < FLUSH_THRESHOLD:
        return admin_position
    return rate * admin_position


def administer_liquidation(ledger: InsolvencyLedger) -> float:
    sell = liquidation_order(ledger.admin_position, ledger.liquidation_rate)
    ledger.admin_position -= sell
    return sell


def wealthiest(wealth_values, active, ids) -> int:
    best = -1
    for i in range(len(wealth_values)):
        if not active[i] or not wealth_values[i] > 0:
            continue
        if best < 0 or wealth_values[i] > wealth_values[best] or (wealth_values[i] == wealth_values[best] and ids[i] < ids[best]):
            best = i
    return best


def split_wealthiest(funds: list[Fund], ledger: InsolvencyLedger, price: float, next_id: int) -> int:
    """Fill vacancies by halving the wealthiest fund. Returns the next free fund id."""
    while ledger.vacancy_count > 0:
        w = [wealth(f, price) for f in funds]
        b = wealthiest(w, [f.active for f in funds], [f.id for f in funds])
        if b < 0:
            raise TotalCollapse("no solvent fund left to split")
        slot = next(i for i, f in enumerate(funds) if not f.active)
        parent = funds[b]
        half = dict(cash=parent.cash / 2, shares=parent.shares / 2, loans=parent.loans / 2, wealth_history=list(parent.wealth_history))
        funds[b] = replace(parent, id=next_id, **half)
        funds[slot] = replace(parent, id=next_id + 1, **half)
        funds[slot].wealth_history = list(parent.wealth_history)
        next_id += 2
        ledger.vacancy_count -= 1
    return next_id
