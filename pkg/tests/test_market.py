import math

import numpy as np
import pytest

from fundeco.market import (FIXED, HOLD, OFF, VALUE, MarketState, NoBracket, aggregate_target, clear_market,
                            excess_demand, execute_orders, smooth_signal, solve_clearing, target_position)
from fundeco.strategies import Fund, Style, value_asset


def arrays(mode, val, fixed, cash, shares, beta=None, lam=None, loans=None):
    n = len(mode)
    f = lambda x, d: np.asarray(x if x is not None else [d] * n, float)  # noqa: E731
    return (np.asarray(mode, np.int64), f(val, 1.0), f(fixed, 0.0), f(beta, 1.0), f(lam, 1.0),
            f(cash, 0.0), f(shares, 0.0), f(loans, 0.0))


def test_smooth_signal():
    assert smooth_signal(0.0, 1.0) == 0.0
    e = math.exp(2 * 0.321928)
    assert (e - 1) / (e + 1) == pytest.approx(0.311249, abs=1e-6)
    assert smooth_signal(0.321928, 1.0) == pytest.approx(0.311249, abs=1e-6)
    assert 0.99999999 < smooth_signal(10.0, 1.0) <= 1.0
    with pytest.raises(ValueError):
        smooth_signal(1.0, 0.0)


def test_target_position():
    assert target_position(1.0, 1.0, 1000.0, 10.0) == 100.0
    assert target_position(-0.5, 1.0, 1000.0, 10.0) == -50.0
    assert target_position(0.0, 1.0, 1000.0, 10.0) == 0.0


def test_clearing_example_all_cash():
    a = arrays([FIXED], None, [0.5], [1000.0], [0.0])
    p, _, resid = solve_clearing(40.0, 10.0, 10.0, a, tol=1e-14)
    assert p == pytest.approx(50.0, rel=1e-10)
    assert abs(resid) / 10.0 <= 1e-8


def test_clearing_example_with_holdings():
    a = arrays([FIXED], None, [0.5], [1000.0], [10.0])
    p, _, _ = solve_clearing(40.0, 10.0, 10.0, a, tol=1e-14)
    assert p == pytest.approx(100.0, rel=1e-10)


def test_clearing_no_demand_raises():
    a = arrays([FIXED, FIXED], None, [0.0, 0.0], [1000.0, 500.0], [5.0, 5.0])
    with pytest.raises(NoBracket) as e:
        solve_clearing(10.0, 10.0, 10.0, a, day=7)
    assert e.value.day == 7
    assert "day 7" in str(e.value)


def test_hold_and_off_modes():
    # HOLD targets current holdings, OFF contributes nothing
    a = arrays([HOLD, OFF, FIXED], None, [0.0, 0.9, 0.5], [0.0, 1e6, 1000.0], [4.0, 3.0, 0.0])
    assert aggregate_target(50.0, *a) == pytest.approx(4.0 + 0.5 * 1000.0 / 50.0)


def test_value_mode_saturation():
    # huge aggression with V = 2p saturates at the full budget
    a = arrays([VALUE], [20.0], None, [1000.0], [0.0], beta=[1e6])
    assert aggregate_target(10.0, *a) == pytest.approx(100.0, rel=1e-12)


def _state():
    return MarketState(day=1, price=50.0, price_history=[50.0], dividend=0.01, dividend_growth=0.0, supply=10.0)


def test_excess_demand_at_target_is_zero():
    st = _state()
    f = Fund(0, Style.VI, cash=1000.0, shares=0.0, discount_rate=0.02)
    v = value_asset(st.dividend, st.dividend_growth, 0.02)
    p = 60.0
    tgt = math.tanh(math.log2(v / p)) * f.wealth(p) / p
    f.shares = tgt
    f.cash = 1000.0 - p * tgt
    assert excess_demand(f, p, st) == pytest.approx(0.0, abs=1e-9)


def test_short_fund_buys_to_cover_when_price_rises():
    st = MarketState(day=300, price=100.0, price_history=[100.0] * 300, supply=10.0)
    f = Fund(0, Style.TF, cash=2000.0, shares=-5.0, horizon=5)
    st.price_history[-1] = 90.0  # falling trend, bearish signal
    d_lo = excess_demand(f, 95.0, st)
    d_hi = excess_demand(f, 130.0, st)
    assert d_hi > d_lo


def test_clear_and_execute_objects():
    st = _state()
    funds = [Fund(i, Style.VI, cash=1000.0, shares=5.0, discount_rate=0.02 + 0.01 * i) for i in range(2)]
    p = clear_market(funds, st)
    vol = execute_orders(funds, p, st)
    assert sum(f.shares for f in funds) == pytest.approx(10.0, abs=1e-9)
    assert vol >= 0
    assert sum(f.cash for f in funds) == pytest.approx(2000.0, abs=1e-7)


def test_volume_counts_each_transfer_once():
    st = MarketState(day=1, price=10.0, price_history=[10.0], supply=20.0)
    a = Fund(0, Style.ADAPTIVE, cash=200.0, shares=10.0)
    b = Fund(1, Style.ADAPTIVE, cash=0.0, shares=10.0)
    a.fixed_signal = 1.0
    b.fixed_signal = 0.0
    p = clear_market([a, b], st)
    assert p == pytest.approx(20.0, rel=1e-10)  # (200 + 10p)/p = 20
    vol = execute_orders([a, b], p, st)
    assert vol == pytest.approx(10.0, rel=1e-12)
    assert a.cash == pytest.approx(0.0, abs=1e-9)
