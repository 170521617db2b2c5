"""Fund agents, subjective valuations and the three base trading signals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

TRADING_DAYS = 252


class Style(IntEnum):
    NT = 0
    VI = 1
    TF = 2
    ADAPTIVE = 3

    @property
    def label(self) -> str:
        return self.name.lower()


class ConfigError(ValueError):
    """Invalid parameters or configuration."""


@dataclass
class Fund:
    """One market participant.

    Only the style-relevant heterogeneity fields are set: ``discount_rate`` for
    NT/VI, ``horizon`` for TF, ``ou_log_level`` for NT.
    """

    id: int
    style: Style
    cash: float = 0.0
    shares: float = 0.0
    loans: float = 0.0
    leverage: float = 1.0
    aggression: float = 1.0
    discount_rate: float | None = None
    horizon: int | None = None
    ou_log_level: float | None = None
    active: bool = True
    wealth_history: list[float] = field(default_factory=list)

    def wealth(self, price: float) -> float:
        return self.cash + price * self.shares - self.loans


def annual_growth(daily_log_growth: float) -> float:
    return math.expm1(TRADING_DAYS * daily_log_growth)


def value_asset(delta: float, daily_log_growth: float, discount_rate: float) -> float:
    """Gordon growth value of the annualized dividend stream."""
    g = annual_growth(daily_log_growth)
    if discount_rate <= g:
        raise ConfigError(f"discount rate {discount_rate} must exceed dividend growth {g:.6g}")
    return TRADING_DAYS * delta * (1.0 + g) / (discount_rate - g)


def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v}")


def signal_vi(value: float, price: float) -> float:
    _check_positive(value=value, price=price)
    return math.log2(value / price)


def signal_nt(x: float, value: float, price: float) -> float:
    _check_positive(x=x, value=value, price=price)
    return math.log2(x * value / price)


def signal_tf(p_lag1: float, p_lag_h: float | None) -> float:
    """Log2 trend over the fund's horizon. Returns 0 while history is short (pass None)."""
    if p_lag_h is None:
        return 0.0
    _check_positive(p_lag1=p_lag1, p_lag_h=p_lag_h)
    return math.log2(p_lag1 / p_lag_h)


def tf_signal_from_history(prices: np.ndarray, t: int, horizon: int) -> float | None:
    """TF signal for day ``t`` given prices[0..t-1]; None while in warm-up."""
    if t < horizon:
        return None
    return math.log2(prices[t - 1] / prices[t - horizon])


def draw_discount_rates(rng, n: int, low: float, high: float) -> np.ndarray:
    return rng.uniform(low, high, n)


def draw_horizons(rng, n: int, low: int, high: int) -> np.ndarray:
    if low < 2:
        raise ConfigError("trend horizons must be at least 2 days")
    return rng.integers(low, high, n)
