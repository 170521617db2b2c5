import math

import pytest

from fundeco.strategies import (ConfigError, Fund, Style, annual_growth, signal_nt, signal_tf, signal_vi,
                                tf_signal_from_history, value_asset)


def test_value_zero_growth():
    # annualized dividend of one currency unit per year
    assert value_asset(1 / 252, 0.0, 0.02) == pytest.approx(50.0, rel=1e-12)


def test_value_gordon_with_growth():
    g = math.log(1.01) / 252
    assert annual_growth(g) == pytest.approx(0.01, rel=1e-12)
    assert value_asset(1 / 252 / 1.01, g, 0.02) == pytest.approx(100.0, rel=1e-9)
    assert value_asset(1 / 252, g, 0.02) == pytest.approx(101.0, rel=1e-9)


def test_value_rejects_discount_below_growth():
    with pytest.raises(ConfigError):
        value_asset(0.01, math.log(1.03) / 252, 0.02)


def test_vi_signal_examples():
    assert signal_vi(80.0, 80.0) == 0.0
    assert signal_vi(160.0, 80.0) == 1.0
    assert signal_vi(100.0, 80.0) == pytest.approx(0.321928, abs=1e-6)


def test_nt_signal_examples():
    assert signal_nt(1.0, 120.0, 90.0) == signal_vi(120.0, 90.0)
    assert signal_nt(2.0, 50.0, 50.0) == 1.0
    assert signal_nt(0.8, 100.0, 100.0) == pytest.approx(-0.321928, abs=1e-6)


def test_tf_signal_examples():
    assert signal_tf(100.0, 100.0) == 0.0
    assert signal_tf(200.0, 100.0) == 1.0
    assert signal_tf(110.0, 100.0) == pytest.approx(0.137504, abs=1e-6)
    assert signal_tf(110.0, None) == 0.0


def test_tf_history_warmup():
    prices = [100.0, 101.0, 102.0, 104.0]
    assert tf_signal_from_history(prices, 2, 3) is None
    assert tf_signal_from_history(prices, 4, 3) == pytest.approx(math.log2(104 / 101))


@pytest.mark.parametrize("args", [(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)])
def test_signal_domain_errors(args):
    with pytest.raises(ValueError):
        signal_vi(*args)
    with pytest.raises(ValueError):
        signal_nt(1.0, *args)


def test_fund_wealth():
    f = Fund(0, Style.VI, cash=100.0, shares=5.0, loans=20.0)
    assert f.wealth(10.0) == 130.0
