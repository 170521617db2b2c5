import math

import numpy as np
import pytest

from fundeco import optimize as opt
from fundeco.config import SimConfig


def test_sharpe_examples():
    assert opt.sharpe([0.01] * 10) is None
    assert opt.sharpe([0.1, -1 / 11]) == pytest.approx(0.0, abs=1e-15)
    r = np.random.default_rng(0).normal(0.001, 0.01, 500)
    assert opt.sharpe(r, annualize=True) == pytest.approx(opt.sharpe(r) * math.sqrt(252), rel=1e-12)
    with pytest.raises(ValueError):
        opt.sharpe([0.1])


def test_sharpe_uses_geometric_mean():
    r = np.array([0.2, -0.1, 0.05])
    gm = np.prod(1 + r) ** (1 / 3) - 1
    assert opt.sharpe(r) == pytest.approx(gm / np.std(r, ddof=1), rel=1e-12)


def test_wealth_multiplier():
    assert opt.wealth_multiplier([5.0, 5.0, 5.0]) == 1.0
    assert opt.wealth_multiplier([5.0, 7.0, 10.0]) == 2.0
    assert opt.wealth_multiplier([5.0, -1.0, 0.0]) == 0.0
    with pytest.raises(ValueError):
        opt.wealth_multiplier([0.0, 1.0])


def test_path_returns_stop_at_wipeout():
    assert opt.path_returns([1.0, 2.0, -1.0, 3.0]).tolist() == [1.0, -1.0]


def test_search_budget_one_returns_initial():
    box = opt.Box([-1.0], [1.0], [0.5])
    res = opt.optimize_search(lambda c: -c[0] ** 2, 1, space=box)
    assert res.best == [0.5] and len(res.trace) == 1


def test_search_known_optimum():
    box = opt.Box([-1.0], [1.0], [0.5])
    res = opt.optimize_search(lambda c: -(c[0] - 0.3) ** 2, 200, seed=0, space=box)
    assert abs(res.best[0] - 0.3) <= 0.01
    best = [t[3] for t in res.trace]
    assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    assert len(res.trace) == 200


def test_search_dynamic_clamps():
    res = opt.optimize_search(lambda v: float(np.sum(v)), 40, seed=1, mode="dynamic", space=np.zeros(30), block=5,
                              sigma0=2.0)
    v = np.asarray(res.best)
    assert np.all(np.abs(v) <= 1.0) and res.best_measure > 0


def test_search_all_infeasible():
    with pytest.raises(opt.SearchError):
        opt.optimize_search(lambda c: None, 5, space=opt.Box([0.0], [1.0], [0.5]))


def test_search_is_deterministic(tmp_path):
    box = opt.Box([0.0, 0.1], [1.0, 10.0], [0.5, 1.0], log_scale=(1,))
    f = lambda c: -(c[0] - 0.2) ** 2 - math.log(c[1]) ** 2  # noqa: E731
    a, b = opt.optimize_search(f, 30, seed=3, space=box), opt.optimize_search(f, 30, seed=3, space=box)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_trace(pa)
    b.write_trace(pb)
    assert pa.read_bytes() == pb.read_bytes()
    assert pa.read_text().splitlines()[0] == "evaluation,candidate_hash,measure,best_so_far"


def test_box_unit_round_trip():
    box = opt.Box([2.0, 0.01], [2520.0, 5.0], [100.0, 0.3], log_scale=(0, 1))
    x = np.array([37.0, 1.7])
    assert box.from_unit(box.to_unit(x)) == pytest.approx(x, rel=1e-12)


@pytest.fixture(scope="module")
def env():
    return opt.Environment(SimConfig(), days=400)


def test_cash_schedule_earns_interest(env):
    res = opt.evaluate_schedule(np.zeros(env.days), env)
    r_d = env.config.market.interest_annual / 252
    assert res.feasible
    assert res.measure == pytest.approx((1 + r_d) ** env.days, rel=1e-12)
    assert set(res.base_measures) == {"nt", "vi", "tf"}


def test_schedule_validation(env):
    with pytest.raises(ValueError):
        opt.evaluate_schedule(np.full(env.days, 1.5), env)


def test_evaluation_is_deterministic(env):
    sched = np.sin(np.arange(env.days) / 30.0)
    a, b = opt.evaluate_schedule(sched, env), opt.evaluate_schedule(sched, env)
    assert a.measure == b.measure and np.array_equal(a.wealth, b.wealth)


def test_families_run(env):
    for cand in ({"family": "constant", "params": [0.4]}, {"family": "vi", "params": [0.04, 2.0]},
                 {"family": "tf", "params": [60, 0.5]}):
        res = opt.evaluate_candidate(cand, env, "sharpe_daily")
        assert res.feasible and res.measure is not None


def test_cash_sharpe_is_undefined(env):
    res = opt.evaluate_schedule(np.zeros(env.days), env, "sharpe_daily")
    assert res.feasible and res.measure is None


def test_null_investor_earns_interest(env):
    res = opt.evaluate_investor(opt.InvestorPolicy(opt.null_policy, 1e4), env)
    r_d = env.config.market.interest_annual / 252
    assert res.measure == pytest.approx((1 + r_d) ** env.days, rel=1e-12)


def test_return_chasing_investor(env):
    pol = opt.InvestorPolicy(opt.chase_returns, 1e5)
    a = opt.evaluate_investor(pol, env)
    b = opt.evaluate_investor(pol, env)
    assert a.feasible and a.measure == b.measure
    assert not np.allclose(a.wealth, a.wealth[0] * (1 + 0.01 / 252) ** np.arange(a.wealth.size))


def test_budget_violation_is_infeasible(env):
    greedy = lambda feats, budget: np.where(feats["active"], 2 * budget, 0.0)  # noqa: E731
    res = opt.evaluate_investor(opt.InvestorPolicy(greedy, 1e3), env)
    assert not res.feasible and "InfeasibleEpisode" in res.note


def test_small_trading_search_beats_cash(env):
    base = opt.evaluate_schedule(np.zeros(env.days), env)
    res = opt.optimize_trading(env, 9, seed=0, workers=1)
    assert res.best_measure >= base.measure
    assert len(res.trace) == 9
